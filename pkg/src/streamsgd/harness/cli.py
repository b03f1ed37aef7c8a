"""Command-line entry point: ``streamsgd <kind> [--config PATH | --preset NAME] ...``."""

from __future__ import annotations

import argparse
import sys
import warnings
from pathlib import Path

from .config import KINDS, ConfigError, parse_config
from .presets import PRESETS, preset_text
from .runner import run_experiment


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="streamsgd",
                                 description="Seeded streaming-SGD simulations.")
    ap.add_argument("kind", choices=KINDS, help="experiment kind")
    src = ap.add_mutually_exclusive_group()
    src.add_argument("--config", type=Path, help="config file (a manifest works too)")
    src.add_argument("--preset", choices=sorted(PRESETS), help="named preset")
    ap.add_argument("--seed", type=int, help="override the configured seed")
    ap.add_argument("--out", type=Path, help="output directory")
    ap.add_argument("--plot", action="store_true", help="also write SVG plots")
    ap.add_argument("--jobs", type=int, help="worker processes for replications")
    ap.add_argument("--scale", type=float, help="shrink d and T by this factor")
    ap.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                    help="override one config value (repeatable; applied after --scale)")
    return ap


def load_config(args):
    if args.config is not None:
        text = args.config.read_text(encoding="utf-8")
    elif args.preset is not None:
        text = preset_text(args.preset)
    else:
        raise ConfigError("give --config or --preset")
    cfg = parse_config(text)
    if cfg.kind != args.kind:
        raise ConfigError(f"config is for {cfg.kind!r}, not {args.kind!r}")
    if args.scale is not None:
        cfg = cfg.scaled(args.scale)
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        key, val = item.split("=", 1)
        cfg = cfg.with_value(key.strip(), val.strip())
    if args.seed is not None:
        cfg = cfg.with_value("run.seed", str(args.seed))
    if args.out is not None:
        cfg = cfg.with_value("run.out", str(args.out))
    if args.plot:
        cfg = cfg.with_value("run.plot", "true")
    if args.jobs is not None:
        cfg = cfg.with_value("run.jobs", str(args.jobs))
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            res = run_experiment(cfg, out=Path(cfg["run.out"]))
    except (ValueError, OSError) as exc:
        print(f"streamsgd: error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {len(res.files)} files to {cfg['run.out']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
