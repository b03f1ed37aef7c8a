"""Turn a RunConfig into simulations, CSV files, plots and a manifest."""

from __future__ import annotations

import csv
import io
import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .. import __version__
from ..bandit import arm_geometry, check_cone_scale_invariance, check_region_lemmas, run_bandit
from ..datagen import CovariateProcess, NoiseProcess, ProblemSpec, equicorrelated_cholesky
from ..inference import coverage_experiment
from ..numerics import Rng, sym_eigendecompose
from ..schedules import ExplorationSchedule, StepsizeSchedule, two_phase_oracle_t1
from ..sgd_dense import run_dense
from ..sgd_sparse import run_sparse, sparse_dim
from ..trajectory import TrajectoryRecord, format_float
from .config import ConfigError, RunConfig, parse_call, split_top_level
from .svg import AxesSpec, Series, emit_svg

__all__ = ["RunResult", "build_spec", "build_processes", "build_exploration", "resolve_warmup",
           "run_experiment", "write_manifest", "example_arms", "oracle_t1", "decaying_schedule"]


@dataclass
class RunResult:
    kind: str
    aggregates: dict = field(default_factory=dict)       # label -> TrajectoryRecord
    replications: dict = field(default_factory=dict)     # label -> [TrajectoryRecord]
    extra: dict = field(default_factory=dict)            # label -> kind-specific summary
    files: list = field(default_factory=list)


# ------------------------------------------------------------------ builders

def _floats(text: str) -> np.ndarray:
    return np.array([float(x) for x in split_top_level(text)], dtype=float)


def example_arms(d: int) -> np.ndarray:
    """Five arms in the first two coordinates; the second is never optimal."""
    if d < 2:
        raise ConfigError("the example arms need d >= 2")
    arms = np.zeros((5, d))
    arms[0, 0], arms[1, 0], arms[2, 0] = 1.0, 0.1, -1.0
    arms[3, 1], arms[4, 1] = 1.0, -1.0
    return arms


def build_spec(cfg: RunConfig) -> ProblemSpec:
    p = cfg.get("problem")
    d, kind = p["d"], cfg.kind
    lam = dict(lambda_min=p["lambda_min"], lambda_max=p["lambda_max"],
               lambda_max_s_off=p["lambda_max_s_off"], lambda_max_1_off=p["lambda_max_1_off"])
    if kind in ("bandit", "verify"):
        if p["arms"] == "example":
            arms = example_arms(d)
        else:
            rows = [r for r in p["arms"].split(";") if r.strip()]
            arms = np.array([_floats(r) for r in rows])
            if arms.ndim != 2 or arms.shape[1] != d:
                raise ConfigError(f"arms must be rows of length d={d}")
        h = p["h"]
        geo = arm_geometry(arms) if arms.shape[0] >= 2 else {"h": None, "optimal": (0,)}
        if h is None and geo["h"] is not None and geo["h"] > 0:
            h = geo["h"]
        return ProblemSpec(arms, p["sigma"], h=h, optimal_arms=geo["optimal"], **lam)
    if kind == "sparse":
        if not p["signals"]:
            raise ConfigError("sparse runs need [problem] signals")
        sig = _floats(p["signals"])
        s = sig.size
        if s > d:
            raise ConfigError(f"{s} signals do not fit in d={d}")
        if p["support"]:
            support = [int(x) for x in split_top_level(p["support"])]
        else:
            support = [int((k + 0.5) * d / s) for k in range(s)]
        if len(support) != s or max(support) >= d:
            raise ConfigError("support must list one index in [0, d) per signal")
        if p["signal_unit"] == "noise":
            unit = p["sigma"] * math.sqrt(2.0 / math.pi)
        elif p["signal_unit"] == "raw":
            unit = 1.0
        else:
            raise ConfigError("signal_unit must be 'noise' or 'raw'")
        beta = np.zeros(d)
        beta[support] = sig * p["signal_scale"] * unit
        return ProblemSpec.regression(beta, p["sigma"], support=support, **lam)
    if p["beta"] == "random":
        beta = Rng(cfg.seed).spawn("problem").gen.standard_normal(d)
    else:
        beta = _floats(p["beta"])
        if beta.size != d:
            raise ConfigError(f"beta has {beta.size} entries, expected d={d}")
    return ProblemSpec.regression(beta, p["sigma"], **lam)


def build_processes(cfg: RunConfig):
    pr, d = cfg.get("process"), cfg["problem.d"]
    chol = equicorrelated_cholesky(d, pr["rho"]) if pr["rho"] != 0.0 else None
    try:
        cov = CovariateProcess(pr["covariates"], d, init=pr["init"], window=pr["window"], chol=chol)
        noise = NoiseProcess(pr["noise"], cfg["problem.sigma"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cov, noise


def resolve_warmup(cfg: RunConfig):
    """``"oracle"`` or an integer number of steps."""
    w = cfg["stepsize.warmup"]
    if isinstance(w, str) and w != "oracle":
        return int(round(float(w[:-1]) * cfg["problem.d"]))
    return w


def decaying_schedule(cfg: RunConfig, dim: float) -> StepsizeSchedule:
    st = cfg.get("stepsize")
    return StepsizeSchedule.decaying(st["c_a"], st["c_b"], st["lambda_min"], dim)


def oracle_t1(cfg: RunConfig, spec: ProblemSpec) -> int:
    if spec.h is None:
        raise ConfigError("t1=oracle needs a positive arm margin h")
    st, p = cfg.get("stepsize"), cfg.get("problem")
    return two_phase_oracle_t1(spec.d, spec.sigma, p["lambda_min"], spec.h, st["c_a"], st["c_b"],
                               p["lambda_max"], c_const=p["c_const"], c_star=p["c_star"])


def build_exploration(text: str, warmup: int = 0, oracle_t1: Optional[int] = None
                      ) -> ExplorationSchedule:
    """Parse ``const(0.5)``, ``harmonic(c=10)``, ``power(c=10, p=0.5)``,
    ``two-phase-zero(t1=..., rate=0.5)`` or
    ``shifted-power(c=5, b=50, p=1, t1=..., pre=1)``. ``t1`` accepts an
    integer, ``warmup`` or ``oracle``."""
    name, args, kw = parse_call(text)

    def t1_of(v):
        if v == "warmup":
            return int(warmup)
        if v == "oracle":
            if oracle_t1 is None:
                raise ConfigError("t1=oracle is not available for this run")
            return int(oracle_t1)
        return int(v)

    try:
        if name == "const":
            return ExplorationSchedule.constant(float((args or [kw.get("pi")])[0]))
        if name == "harmonic":
            return ExplorationSchedule.harmonic(float(kw.get("c", args[0] if args else None)))
        if name == "power":
            return ExplorationSchedule.power(float(kw["c"]), float(kw["p"]))
        if name == "two-phase-zero":
            return ExplorationSchedule.two_phase_zero(t1_of(kw["t1"]), float(kw.get("rate", 0.5)))
        if name == "shifted-power":
            return ExplorationSchedule.shifted_power(float(kw["c"]), float(kw["b"]),
                                                     float(kw.get("p", 1.0)),
                                                     t1_of(kw.get("t1", "0")),
                                                     float(kw.get("pre", 1.0)))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad exploration schedule {text!r}: {exc}") from None
    raise ConfigError(f"unknown exploration schedule {name!r}")


# -------------------------------------------------------------- replication jobs

def _regress_job(args):
    spec, cov, noise, const, dec, T, stride, seed, r, t1 = args
    return run_dense(spec, cov, noise, (const, dec), T, stride,
                     rng=Rng(seed).replication(r), t1=t1)


def _sparse_job(args):
    spec, cov, noise, dec, mode, T, seed, r, kw = args
    return run_sparse(spec, cov, noise, dec, mode, T, Rng(seed).replication(r),
                      **kw)


class _Pool:
    """``map`` in-process for one job, a process pool otherwise."""

    def __init__(self, jobs: int):
        self.jobs = jobs
        self.ex = ProcessPoolExecutor(max_workers=jobs) if jobs > 1 else None

    def map(self, fn, items):
        if self.ex is None:
            return map(fn, items)
        return self.ex.map(fn, items)

    def close(self):
        if self.ex is not None:
            self.ex.shutdown()


def _mean_std(arrs) -> tuple:
    a = np.asarray(arrs, dtype=float)
    std = a.std(axis=0, ddof=1) if a.shape[0] > 1 else np.zeros(a.shape[1:])
    return a.mean(axis=0), std


# ------------------------------------------------------------------ per kind

def _run_regress(cfg: RunConfig, pool: _Pool):
    spec = build_spec(cfg)
    cov, noise = build_processes(cfg)
    run, d = cfg.get("run"), spec.d
    dec = decaying_schedule(cfg, d)
    dec.check_theory(spec.lambda_max, d, mode=run["check"])
    w = resolve_warmup(cfg)
    eta = cfg["stepsize.warmup_eta"] or 1.0 / (2.0 * d * (spec.lambda_max or 1.0))
    if w == 0:
        const, t1 = None, None
    else:
        const, t1 = StepsizeSchedule.constant(eta), (None if w == "oracle" else int(w))
    jobs = [(spec, cov, noise, const, dec, run["T"], run["log_stride"], run["seed"], r, t1)
            for r in range(run["replications"])]
    reps = list(pool.map(_regress_job, jobs))
    mean, std = _mean_std([tr["err_sq"] for tr in reps])
    agg = TrajectoryRecord("regress", {"t": reps[0].t, "err_sq_mean": mean, "err_sq_std": std})
    return agg, reps, {"t1": [tr.meta["t1"] for tr in reps]}


def _run_sparse(cfg: RunConfig, pool: _Pool):
    spec = build_spec(cfg)
    cov, noise = build_processes(cfg)
    run, sp, d = cfg.get("run"), cfg.get("sparse"), spec.d
    dec = decaying_schedule(cfg, sparse_dim(d, spec.s))
    dec.check_theory(spec.lambda_max, d, mode=run["check"])
    mode = sp["mode"]
    kw = dict(warmup=resolve_warmup(cfg), warmup_eta=cfg["stepsize.warmup_eta"],
              keep_top=sp["keep_top"], c_sched=sp["c_sched"], window=sp["window"],
              rho=sp["rho"], min_gap=sp["min_gap"], check_every=sp["check_every"],
              s_max=sp["s_max"], max_updates=sp["max_updates"], log_stride=run["log_stride"])
    if sp["initial_support"]:
        kw["initial_support"] = [int(x) for x in split_top_level(sp["initial_support"])]
    if sp["compare_dense"]:
        kw["compare_dense"] = decaying_schedule(cfg, d)
    jobs = [(spec, cov, noise, dec, mode, run["T"], run["seed"], r, kw)
            for r in range(run["replications"])]
    reps = list(pool.map(_sparse_job, jobs))
    cols = {"t": reps[0].t}
    for name in ("err_sq", "err_sq_dense", "support_size"):
        if name in reps[0].columns:
            cols[f"{name}_mean"], cols[f"{name}_std"] = _mean_std([tr[name] for tr in reps])
    agg = TrajectoryRecord("sparse", cols)
    truth = set(spec.support)
    recovered = [truth <= set(tr.meta["support"]) for tr in reps]
    extra = {"recovered": recovered, "events": [tr.meta["events"] for tr in reps],
             "support": [tr.meta["support"] for tr in reps]}
    return agg, reps, extra


def _run_bandit(cfg: RunConfig, pool: _Pool):
    spec = build_spec(cfg)
    cov, noise = build_processes(cfg)
    run, d = cfg.get("run"), spec.d
    dec = decaying_schedule(cfg, d)
    dec.check_theory(spec.lambda_max, d, mode=run["check"])
    w = resolve_warmup(cfg)
    if w == "oracle":
        raise ConfigError("bandit runs need an explicit warm-up length")
    oracle = oracle_t1(cfg, spec) if "oracle" in cfg["explore.schedule"] else None
    explore = build_exploration(cfg["explore.schedule"], w, oracle)
    t_watch = explore.t1 if explore.kind == "two-phase-zero" else -1
    traj, ledger, outs = run_bandit(spec, cov, noise, dec, explore, run["T"], run["replications"],
                                    Rng(run["seed"]), warmup=w,
                                    warmup_eta=cfg["stepsize.warmup_eta"],
                                    log_stride=run["log_stride"], t_watch=t_watch,
                                    map_fn=pool.map)
    reps = []
    for o in outs:
        cols = {"t": o.t, "regret_cum": o.regret}
        for i in range(spec.K):
            cols[f"err_sq_arm_{i + 1}"] = o.err[:, i]
        cols["explore_count"] = o.explore
        reps.append(TrajectoryRecord("bandit", cols))
    extra = {"pull_counts": traj.meta["pull_counts"], "late_pulls": traj.meta["late_pulls"],
             "t_watch": t_watch, "optimal_arms": spec.optimal_arms, "ledger": ledger,
             "oracle_t1": oracle}
    return traj, reps, extra


def _run_infer(cfg: RunConfig, pool: _Pool):
    spec = build_spec(cfg)
    cov, noise = build_processes(cfg)
    run = cfg.get("run")
    dec = decaying_schedule(cfg, spec.d)
    explore = build_exploration(cfg["explore.schedule"], 0, None)
    res = coverage_experiment(spec, cov, noise, dec, explore, run["T"], cfg["infer.level"],
                              run["replications"], Rng(run["seed"]), min_replications=1,
                              map_fn=pool.map)
    rows = {"arm": [], "region": [], "coverage": []}
    for k, a in enumerate(res.arms):
        for j in range(spec.d):
            rows["arm"].append(a + 1)
            rows["region"].append(f"coord_{j + 1}")
            rows["coverage"].append(float(res.per_coordinate[k, j]))
        for region, val in (("rectangle", res.rectangle[k]), ("ellipsoid", res.ellipsoid[k])):
            rows["arm"].append(a + 1)
            rows["region"].append(region)
            rows["coverage"].append(float(val))
    reps = []
    for r in range(res.whitened.shape[0]):
        cols = {"t": np.array([run["T"]])}
        for k, a in enumerate(res.arms):
            for j in range(spec.d):
                cols[f"z_arm{a + 1}_{j + 1}"] = res.whitened[r, k, j:j + 1]
        reps.append(TrajectoryRecord("infer", cols))
    return rows, reps, {"result": res}


def _run_verify(cfg: RunConfig, pool: _Pool):
    spec = build_spec(cfg)
    run = cfg.get("run")
    rng = Rng(run["seed"])
    n = max(run["T"], 1)
    rows = {"check": [], "samples": [], "violations": []}
    geo = arm_geometry(spec.arms)
    h0 = 0.5 * min(list(geo["reach"].values()) + list(geo["gap"].values()) or [1.0])
    lem = check_region_lemmas(spec.arms, max(h0, 1e-3), n, rng.spawn("regions"))
    for key in ("nesting", "oracle", "chain", "identity"):
        rows["check"].append(f"region_{key}")
        rows["samples"].append(n)
        rows["violations"].append(lem[key])
    rows["check"].append("cone_scale_invariance")
    rows["samples"].append(n)
    rows["violations"].append(check_cone_scale_invariance(spec.arms, n, rng.spawn("cone")))
    gen = rng.spawn("eigen").gen
    bad = 0
    for _ in range(100):
        m = int(gen.integers(2, 31))
        A = gen.standard_normal((m, m))
        A = (A + A.T) / 2
        U, lam = sym_eigendecompose(A)
        if (np.max(np.abs((U * lam) @ U.T - A)) > 1e-10
                or np.max(np.abs(U.T @ U - np.eye(m))) > 1e-10):
            bad += 1
    rows["check"].append("eigendecomposition")
    rows["samples"].append(100)
    rows["violations"].append(bad)
    return rows, [], {}


_RUNNERS = {"regress": _run_regress, "sparse": _run_sparse, "bandit": _run_bandit,
            "infer": _run_infer, "verify": _run_verify}


# ------------------------------------------------------------------ output

def _slug(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9.=]+", "-", label).strip("-") or "base"


def _table_csv(rows: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    names = list(rows)
    w.writerow(names)
    for vals in zip(*(rows[n] for n in names)):
        w.writerow([format_float(v) if isinstance(v, (float, np.floating, int, np.integer))
                    and not isinstance(v, bool) else v for v in vals])
    return buf.getvalue()


def _write(path: Path, text: str, files: list):
    path.write_text(text, encoding="utf-8")
    files.append(path)


def write_manifest(cfg: RunConfig, out: Path, files: list) -> Path:
    head = ["[manifest]", f"config_hash = {cfg.hash()}", f"seed = {cfg.seed}",
            f"version = {__version__}", f"kind = {cfg.kind}",
            f"files = {', '.join(p.name for p in files)}", ""]
    path = out / "manifest.ini"
    path.write_text("\n".join(head) + "\n" + cfg.to_text(), encoding="utf-8")
    return path


def _plot(kind: str, result: RunResult, out: Path):
    made = []
    aggs = result.aggregates
    if kind == "regress":
        ser = [Series(lab, a.t[1:], a["err_sq_mean"][1:]) for lab, a in aggs.items()]
        made.append(emit_svg(ser, out / "regress_error.svg",
                             AxesSpec(True, True, "Mean squared error", "t", "squared error")))
    elif kind == "sparse":
        ser = []
        for lab, a in aggs.items():
            ser.append(Series(f"sparse {lab}", a.t[1:], a["err_sq_mean"][1:]))
            if "err_sq_dense_mean" in a.columns:
                ser.append(Series(f"dense {lab}", a.t[1:], a["err_sq_dense_mean"][1:]))
        made.append(emit_svg(ser, out / "sparse_error.svg",
                             AxesSpec(True, True, "Mean squared error", "t", "squared error")))
    elif kind == "bandit":
        ser = [Series(lab, a.t, a["regret_cum_mean"]) for lab, a in aggs.items()]
        made.append(emit_svg(ser, out / "bandit_regret.svg",
                             AxesSpec(False, False, "Cumulative regret", "t", "regret")))
        ser = []
        for lab, a in aggs.items():
            opt = result.extra[lab]["optimal_arms"]
            err = np.mean([a[f"err_sq_arm_{i + 1}"] for i in opt], axis=0)
            ser.append(Series(lab, a.t[1:], err[1:]))
        made.append(emit_svg(ser, out / "bandit_error.svg",
                             AxesSpec(True, True, "Optimal-arm squared error", "t",
                                      "squared error")))
    return made


def run_experiment(cfg: RunConfig, out: Optional[Path] = None, jobs: Optional[int] = None,
                   plot: Optional[bool] = None) -> RunResult:
    """Run every series of ``cfg``; write files under ``out`` when given."""
    kind = cfg.kind
    jobs = cfg["run.jobs"] if jobs is None else jobs
    plot = cfg["run.plot"] if plot is None else plot
    result = RunResult(kind)
    pool = _Pool(jobs)
    try:
        for label, sub in cfg.series():
            agg, reps, extra = _RUNNERS[kind](sub, pool)
            result.aggregates[label] = agg
            result.replications[label] = reps
            result.extra[label] = extra
    finally:
        pool.close()
    if out is None:
        return result
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    files = result.files
    for label, agg in result.aggregates.items():
        stem = f"{kind}_{_slug(label)}"
        if isinstance(agg, dict):
            _write(out / f"{stem}_summary.csv", _table_csv(agg), files)
        else:
            _write(out / f"{stem}_aggregate.csv", agg.to_csv(min_t=1), files)
        for r, tr in enumerate(result.replications[label]):
            _write(out / f"{stem}_rep{r:03d}.csv", tr.to_csv(min_t=1), files)
        extra = result.extra[label]
        if kind == "sparse":
            ev = {"replication": [], "t": [], "index": []}
            for r, evs in enumerate(extra["events"]):
                for t, i in evs:
                    ev["replication"].append(r)
                    ev["t"].append(int(t))
                    ev["index"].append(int(i))
            _write(out / f"{stem}_events.csv", _table_csv(ev), files)
        elif kind == "bandit":
            pc = {"replication": [], "arm": [], "pulls": [], "late_pulls": []}
            for r, (c, l) in enumerate(zip(extra["pull_counts"], extra["late_pulls"])):
                for i in range(len(c)):
                    pc["replication"].append(r)
                    pc["arm"].append(i + 1)
                    pc["pulls"].append(int(c[i]))
                    pc["late_pulls"].append(int(l[i]))
            _write(out / f"{stem}_pulls.csv", _table_csv(pc), files)
    if plot and kind in ("regress", "sparse", "bandit"):
        files.extend(_plot(kind, result, out))
    files.append(write_manifest(cfg, out, list(files)))
    return result
