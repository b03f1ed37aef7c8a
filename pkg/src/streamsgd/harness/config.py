"""Experiment configuration: an INI-style text format with a fixed schema.

Every key must be declared in ``SCHEMA``; unknown keys and type mismatches
fail fast. ``[sweep]`` holds ``section.key = v1, v2, ...`` lines; each value
becomes one series in the run, all sharing the same random streams.
"""

from __future__ import annotations

import configparser
import copy
import hashlib
import math
import re
from dataclasses import dataclass, field
from typing import Optional

__all__ = ["ConfigError", "RunConfig", "SCHEMA", "KINDS", "parse_config", "split_top_level",
           "parse_call"]

KINDS = ("regress", "sparse", "bandit", "infer", "verify")

REQUIRED = object()


class ConfigError(ValueError):
    pass


def _opt_float(s: str) -> Optional[float]:
    return None if s.strip().lower() in ("", "none") else float(s)


def _opt_int(s: str) -> Optional[int]:
    return None if s.strip().lower() in ("", "none") else int(s)


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _stride(s: str):
    s = s.strip()
    return "geom" if s == "geom" else int(s)


def _warmup(s: str):
    """``oracle``, an integer, or ``<k>d`` (k times the dimension)."""
    s = s.strip()
    if s == "oracle":
        return s
    if s.endswith("d"):
        float(s[:-1])
        return s
    return int(s)


# section -> key -> (parser, default)
SCHEMA: dict = {
    "run": {
        "kind": (str, REQUIRED),
        "seed": (int, REQUIRED),
        "T": (int, REQUIRED),
        "replications": (int, 1),
        "log_stride": (_stride, "geom"),
        "out": (str, "out"),
        "plot": (_bool, False),
        "jobs": (int, 1),
        "check": (str, "warn"),
        "scale": (float, 1.0),
    },
    "problem": {
        "d": (int, REQUIRED),
        "sigma": (float, 1.0),
        "beta": (str, "random"),
        "support": (str, ""),
        "signals": (str, ""),
        "signal_scale": (float, 1.0),
        "signal_unit": (str, "noise"),
        "arms": (str, "example"),
        "lambda_min": (float, 1.0),
        "lambda_max": (float, 1.0),
        "lambda_max_s_off": (_opt_float, None),
        "lambda_max_1_off": (_opt_float, None),
        "h": (_opt_float, None),
        "c_star": (_opt_float, None),
        "c_const": (float, 1.0),
    },
    "process": {
        "covariates": (str, "iid"),
        "noise": (str, "iid"),
        "init": (str, "gaussian"),
        "window": (int, 16),
        "rho": (float, 0.0),
    },
    "stepsize": {
        "c_a": (float, 3.0),
        "c_b": (float, 100.0),
        "lambda_min": (float, 1.0),
        "warmup": (_warmup, "oracle"),
        "warmup_eta": (_opt_float, None),
    },
    "explore": {
        "schedule": (str, "const(0.5)"),
    },
    "sparse": {
        "mode": (str, "heuristic"),
        "rho": (float, 10.0),
        "min_gap": (int, 1000),
        "check_every": (int, 1),
        "s_max": (_opt_int, None),
        "max_updates": (_opt_int, None),
        "window": (str, "local"),
        "keep_top": (_opt_int, None),
        "c_sched": (float, 1.0),
        "compare_dense": (_bool, True),
        "initial_support": (str, ""),
    },
    "infer": {
        "level": (float, 0.95),
    },
}

IGNORED_SECTIONS = ("manifest",)


def split_top_level(text: str, sep: str = ",") -> list:
    """Split on ``sep`` outside parentheses; empty pieces are dropped."""
    out, depth, cur = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth < 0:
                raise ConfigError(f"unbalanced parentheses in {text!r}")
        if ch == sep and depth == 0:
            out.append("".join(cur).strip())
            cur = []
        else:
            cur.append(ch)
    if depth != 0:
        raise ConfigError(f"unbalanced parentheses in {text!r}")
    out.append("".join(cur).strip())
    return [x for x in out if x]


_CALL = re.compile(r"^\s*([A-Za-z][\w-]*)\s*(?:\((.*)\))?\s*$")


def parse_call(text: str):
    """``name(a=1, b=x, 3)`` -> ``("name", ["3"], {"a": "1", "b": "x"})``."""
    m = _CALL.match(text)
    if not m:
        raise ConfigError(f"cannot parse {text!r}")
    name, inner = m.group(1), m.group(2)
    args, kwargs = [], {}
    for piece in split_top_level(inner or ""):
        if "=" in piece:
            k, v = piece.split("=", 1)
            kwargs[k.strip()] = v.strip()
        else:
            args.append(piece)
    return name, args, kwargs


@dataclass
class RunConfig:
    """Validated configuration: ``values[section][key]`` plus sweep axes."""

    values: dict
    sweep: dict = field(default_factory=dict)

    def __getitem__(self, dotted: str):
        sec, key = dotted.split(".", 1)
        return self.values[sec][key]

    @property
    def kind(self) -> str:
        return self.values["run"]["kind"]

    @property
    def seed(self) -> int:
        return self.values["run"]["seed"]

    def get(self, section: str) -> dict:
        return self.values[section]

    def with_value(self, dotted: str, raw) -> "RunConfig":
        """Copy with one key replaced; ``raw`` strings go through the schema parser."""
        sec, key = _split_key(dotted)
        new = copy.deepcopy(self)
        new.values[sec][key] = _convert(sec, key, raw) if isinstance(raw, str) else raw
        _validate(new)
        return new

    def scaled(self, factor: float) -> "RunConfig":
        """Shrink (or grow) ``d`` and ``T`` by ``factor``; the result has scale 1."""
        if not factor > 0:
            raise ConfigError("scale must be positive")
        new = copy.deepcopy(self)
        new.values["problem"]["d"] = max(2, int(round(self.values["problem"]["d"] * factor)))
        new.values["run"]["T"] = max(1, int(round(self.values["run"]["T"] * factor)))
        new.values["run"]["scale"] = 1.0
        return new

    def series(self) -> list:
        """``[(label, config)]``, one per combination of sweep values."""
        combos = [("", self)]
        for dotted, vals in self.sweep.items():
            nxt = []
            for label, cfg in combos:
                for v in vals:
                    lab = f"{label},{dotted.split('.')[1]}={v}" if label else \
                        f"{dotted.split('.')[1]}={v}"
                    nxt.append((lab, cfg._without_sweep().with_value(dotted, v)))
            combos = nxt
        return [(lab or "base", cfg._without_sweep()) for lab, cfg in combos]

    def _without_sweep(self) -> "RunConfig":
        return RunConfig(copy.deepcopy(self.values), {})

    def to_text(self) -> str:
        lines = []
        for sec, keys in SCHEMA.items():
            lines.append(f"[{sec}]")
            for key in keys:
                v = self.values[sec][key]
                if v is None:
                    continue
                if isinstance(v, bool):
                    v = "true" if v else "false"
                elif isinstance(v, float):
                    v = repr(v)
                lines.append(f"{key} = {v}")
            lines.append("")
        if self.sweep:
            lines.append("[sweep]")
            for k, vals in self.sweep.items():
                lines.append(f"{k} = {', '.join(vals)}")
            lines.append("")
        return "\n".join(lines)

    def hash(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()


def _split_key(dotted: str):
    if "." not in dotted:
        raise ConfigError(f"expected section.key, got {dotted!r}")
    sec, key = dotted.split(".", 1)
    if sec not in SCHEMA:
        raise ConfigError(f"unknown section {sec!r}")
    if key not in SCHEMA[sec]:
        raise ConfigError(f"unknown key {key!r} in section [{sec}]")
    return sec, key


def _convert(sec: str, key: str, raw: str):
    parser, _ = SCHEMA[sec][key]
    try:
        return parser(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{sec}] {key}: cannot parse {raw!r} ({exc})") from None


def _validate(cfg: RunConfig):
    v = cfg.values
    if v["run"]["kind"] not in KINDS:
        raise ConfigError(f"unknown experiment kind {v['run']['kind']!r}; expected one of {KINDS}")
    if not 0 <= v["run"]["seed"] < 2**64:
        raise ConfigError("seed must be a 64-bit unsigned integer")
    if v["run"]["T"] < 0:
        raise ConfigError("T must be >= 0")
    if v["run"]["replications"] < 1:
        raise ConfigError("replications must be >= 1")
    if v["run"]["jobs"] < 1:
        raise ConfigError("jobs must be >= 1")
    if v["run"]["check"] not in ("warn", "strict", "off"):
        raise ConfigError("check must be warn, strict or off")
    if v["problem"]["d"] < 1:
        raise ConfigError("d must be >= 1")
    ls = v["run"]["log_stride"]
    if ls != "geom" and ls < 1:
        raise ConfigError("log_stride must be 'geom' or a positive integer")
    if not 0.0 <= v["infer"]["level"] <= 1.0:
        raise ConfigError("level must lie in [0, 1]")


def parse_config(text: str) -> RunConfig:
    """Parse and validate config text; applies ``run.scale`` to d and T."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), comment_prefixes=("#", ";"),
                                   interpolation=None, strict=True)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    values = {sec: {} for sec in SCHEMA}
    sweep = {}
    for sec in cp.sections():
        if sec in IGNORED_SECTIONS:
            continue
        if sec == "sweep":
            for key, raw in cp.items(sec):
                s, k = _split_key(key)
                vals = split_top_level(raw)
                if not vals:
                    raise ConfigError(f"sweep {key!r} has no values")
                for x in vals:
                    _convert(s, k, x)
                sweep[f"{s}.{k}"] = vals
            continue
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}]")
        for key, raw in cp.items(sec):
            if key not in SCHEMA[sec]:
                raise ConfigError(f"unknown key {key!r} in section [{sec}]")
            values[sec][key] = _convert(sec, key, raw)
    for sec, keys in SCHEMA.items():
        for key, (_, default) in keys.items():
            if key not in values[sec]:
                if default is REQUIRED:
                    raise ConfigError(f"missing required key {key!r} in section [{sec}]")
                values[sec][key] = default
    cfg = RunConfig(values, sweep)
    _validate(cfg)
    scale = values["run"]["scale"]
    if not math.isclose(scale, 1.0):
        cfg = cfg.scaled(scale)
    return cfg
