"""Epsilon-greedy contextual linear bandit with one SGD iterate per arm.

Besides the policy and its simulator this module holds the cone geometry
used to reason about when an arm can win: normalized margins, the optimal /
never-optimal split of the arms, and a Monte Carlo check of the region
inclusions that the analysis relies on.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional, Union

import numpy as np
from scipy.optimize import linprog, nnls
from scipy.spatial import ConvexHull, QhullError

from . import _kernels
from .datagen import CovariateProcess, Environment, NoiseProcess, ProblemSpec, fresh_process
from .numerics import Rng
from .schedules import ExplorationSchedule, StepsizeSchedule
from .trajectory import TrajectoryRecord, log_times

__all__ = [
    "BanditState",
    "RegretLedger",
    "BanditOutcome",
    "conic_margin",
    "conic_margins",
    "choose_arm",
    "choose_arm_from_draws",
    "bandit_update",
    "instantaneous_regret",
    "complexity_measures",
    "arm_geometry",
    "check_region_lemmas",
    "check_cone_scale_invariance",
    "bandit_stepsizes",
    "WarmStepsizes",
    "simulate_bandit",
    "run_bandit",
]


# ----------------------------------------------------------------- geometry

def conic_margin(X, i: int, betas) -> float:
    """``(X.beta_i - max_{j != i} X.beta_j) / ||X||``."""
    X = np.asarray(X, dtype=float)
    betas = np.asarray(betas, dtype=float)
    if betas.shape[0] < 2:
        raise ValueError("a margin needs at least two arms")
    nrm = np.sqrt(np.dot(X, X))
    if nrm == 0.0:
        raise ValueError("the margin is undefined at X = 0")
    scores = betas @ X
    others = np.delete(scores, i)
    return float((scores[i] - others.max()) / nrm)


def conic_margins(X, betas) -> np.ndarray:
    """Vectorized margins: ``X`` is (n, d); returns (n, K)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    scores = X @ np.asarray(betas, dtype=float).T
    K = scores.shape[1]
    out = np.empty_like(scores)
    for i in range(K):
        out[:, i] = scores[:, i] - np.delete(scores, i, axis=1).max(axis=1)
    return out / np.linalg.norm(X, axis=1, keepdims=True)


def _dist_to_hull(V: np.ndarray) -> float:
    """Euclidean distance from the origin to conv(rows of V)."""
    m = V.shape[0]
    big = 1e4 * (1.0 + np.abs(V).max())
    A = np.vstack([V.T, big * np.ones((1, m))])
    b = np.concatenate([np.zeros(V.shape[1]), [big]])
    lam, _ = nnls(A, b)
    lam = lam / lam.sum()
    return float(np.linalg.norm(lam @ V))


def _origin_in_hull(V: np.ndarray) -> bool:
    m, d = V.shape
    res = linprog(np.zeros(m), A_eq=np.vstack([V.T, np.ones((1, m))]),
                  b_eq=np.concatenate([np.zeros(d), [1.0]]), bounds=(0, None), method="highs")
    return bool(res.status == 0)


def _depth_in_hull(V: np.ndarray) -> float:
    """``min_{||z||=1} max_i z.v_i`` for an origin inside conv(V); 0 if flat."""
    d = V.shape[1]
    if V.shape[0] < d + 1 or np.linalg.matrix_rank(V - V[0]) < d:
        return 0.0
    if d == 1:
        return float(min(V.max(), -V.min()))
    try:
        hull = ConvexHull(V)
    except QhullError:
        return 0.0
    # facets satisfy n.x + b <= 0 with unit n, so the origin sits at depth -b
    return float(max(0.0, np.min(-hull.equations[:, -1])))


def arm_geometry(arms) -> dict:
    """Split arms into those optimal somewhere and those never optimal.

    ``reach[i]`` is ``sup_{||z||=1} (z.beta_i - max_{j!=i} z.beta_j)`` for arms
    that can win; ``gap[j]`` is ``min_{||z||=1} (max_i z.beta_i - z.beta_j)``
    for arms that never win. ``h`` is the smallest gap (None when every arm
    can win), i.e. the largest margin for which the never-optimal arms lose
    by at least ``h ||X||`` at every covariate.
    """
    arms = np.asarray(arms, dtype=float)
    K = arms.shape[0]
    reach, gap = {}, {}
    for j in range(K):
        V = np.delete(arms, j, axis=0) - arms[j]
        if V.shape[0] and _origin_in_hull(V):
            gap[j] = _depth_in_hull(V)
        else:
            reach[j] = _dist_to_hull(V) if V.shape[0] else np.inf
    h = min(gap.values()) if gap else None
    return {"optimal": tuple(sorted(reach)), "suboptimal": tuple(sorted(gap)),
            "reach": reach, "gap": gap, "h": h}


def _perturb(rng: np.random.Generator, shape, radius: float) -> np.ndarray:
    """Uniform draws from the ball of the given radius, one per leading index."""
    Z = rng.standard_normal(shape)
    Z /= np.linalg.norm(Z, axis=-1, keepdims=True)
    r = radius * rng.random(shape[:-1])[..., None] ** (1.0 / shape[-1])
    return Z * r


def check_region_lemmas(arms, h0: float, n_samples: int, rng: Rng,
                        h_grid=None, block: int = 20000) -> dict:
    """Count violations of the cone-region inclusions on random covariates.

    For each sample a fresh set of estimates with ``||beta_i - beta_i*|| <= h0``
    is drawn. Checked, for every arm i:
      nesting   margin >= h1 implies margin >= h2 for h1 > h2 on ``h_grid``
      oracle    margin >= h > 0 implies i is the unique true argmax
      chain     margin >= 2 h0 implies i wins under the estimates, and winning
                under the estimates implies margin >= -2 h0
    Returns the per-check counts and their ``total``.
    """
    arms = np.asarray(arms, dtype=float)
    K, d = arms.shape
    gen = rng.gen
    grid = np.sort(np.asarray([-0.5, -0.1, 0.0, 0.05, 0.1, 0.3, 0.5] if h_grid is None
                              else h_grid, dtype=float))
    counts = {"nesting": 0, "oracle": 0, "chain": 0, "identity": 0}
    done = 0
    while done < n_samples:
        n = min(block, n_samples - done)
        X = gen.standard_normal((n, d))
        est = arms[None, :, :] + _perturb(gen, (n, K, d), h0)
        m_true = conic_margins(X, arms)
        for i in range(K):
            inside = m_true[:, i][:, None] >= grid[None, :]
            # h1 > h2: membership at a larger h must imply membership at every smaller h
            counts["nesting"] += int(np.sum(inside[:, 1:] & ~inside[:, :-1]))
        scores_true = X @ arms.T
        for h in grid[grid > 0]:
            for i in range(K):
                inU = m_true[:, i] >= h
                others = np.delete(scores_true, i, axis=1).max(axis=1)
                counts["oracle"] += int(np.sum(inU & ~(scores_true[:, i] > others)))
        scores_est = np.einsum("nd,nkd->nk", X, est)
        for i in range(K):
            others = np.delete(scores_est, i, axis=1).max(axis=1)
            wins = scores_est[:, i] > others
            counts["chain"] += int(np.sum((m_true[:, i] >= 2 * h0) & ~wins))
            counts["chain"] += int(np.sum(wins & ~(m_true[:, i] >= -2 * h0)))
            if h0 == 0.0:
                truth = scores_true[:, i] > np.delete(scores_true, i, axis=1).max(axis=1)
                counts["identity"] += int(np.sum(wins != truth))
        done += n
    counts["total"] = sum(counts.values())
    return counts


def check_cone_scale_invariance(arms, n_samples: int, rng: Rng, h_max: float = 0.5) -> int:
    """Count pairs (X, a > 0) where membership in U_i(h) differs for X and aX."""
    arms = np.asarray(arms, dtype=float)
    K, d = arms.shape
    gen = rng.gen
    X = gen.standard_normal((n_samples, d))
    a = np.exp(gen.uniform(np.log(1e-3), np.log(1e3), n_samples))
    h = gen.uniform(-h_max, h_max, n_samples)
    m1 = conic_margins(X, arms)
    m2 = conic_margins(a[:, None] * X, arms)
    return int(np.sum((m1 >= h[:, None]) != (m2 >= h[:, None])))


def complexity_measures(spec: Union[ProblemSpec, np.ndarray]):
    """``(sum_ij ||b_i - b_j||, sum_j max_i ||b_i - b_j||, max_ij ||b_i - b_j||)``."""
    arms = spec.arms if isinstance(spec, ProblemSpec) else np.atleast_2d(spec)
    D = np.linalg.norm(arms[:, None, :] - arms[None, :, :], axis=-1)
    return float(D.sum()), float(D.max(axis=0).sum()), float(D.max())


# ------------------------------------------------------------ policy steps

@dataclass
class BanditState:
    betas: np.ndarray
    t: int = 0
    pull_counts: np.ndarray = None
    regret_cum: float = 0.0
    explore_count: int = 0

    def __post_init__(self):
        self.betas = np.atleast_2d(np.asarray(self.betas, dtype=float))
        if self.pull_counts is None:
            self.pull_counts = np.zeros(self.betas.shape[0], dtype=np.int64)

    @classmethod
    def start(cls, K: int, d: int) -> "BanditState":
        return cls(np.zeros((K, d)))


def choose_arm_from_draws(X, betas, pi: float, coin: float, pick: int):
    """The decision given pre-drawn ``coin`` (uniform [0,1)) and ``pick``."""
    if not 0.0 <= pi <= 1.0:
        raise ValueError("exploration rate must lie in [0, 1]")
    if coin < pi:
        return int(pick), True
    scores = np.asarray(betas, dtype=float) @ np.asarray(X, dtype=float)
    return int(np.argmax(scores)), False


def choose_arm(X, betas, pi: float, rng: Rng):
    """Uniform arm with probability ``pi``, else the greedy arm (lowest index on ties)."""
    K = np.asarray(betas).shape[0]
    coin = rng.gen.random()
    pick = int(rng.gen.integers(0, K))
    return choose_arm_from_draws(X, betas, pi, coin, pick)


def bandit_update(state: BanditState, X, Y: float, a: int, eta: float,
                  explored: bool = False, regret: float = 0.0) -> BanditState:
    """SGD step on arm ``a`` only; other iterates are left untouched."""
    K = state.betas.shape[0]
    if not 0 <= a < K:
        raise IndexError(f"arm {a} out of range for K={K}")
    X = np.asarray(X, dtype=float)
    betas = state.betas.copy()
    r = float(np.dot(X, betas[a])) - Y
    betas[a] = betas[a] - (eta * r) * X
    counts = state.pull_counts.copy()
    counts[a] += 1
    return replace(state, betas=betas, t=state.t + 1, pull_counts=counts,
                   regret_cum=state.regret_cum + regret,
                   explore_count=state.explore_count + int(explored))


def instantaneous_regret(spec: ProblemSpec, X, a: int) -> float:
    if not 0 <= a < spec.K:
        raise IndexError(f"arm {a} out of range for K={spec.K}")
    scores = spec.arms @ np.asarray(X, dtype=float)
    return float(scores.max() - scores[a])


# -------------------------------------------------------------- simulation

@dataclass(frozen=True)
class WarmStepsizes:
    """``t -> eta_t``: constant ``warmup_eta`` for ``t < warmup``, then the decaying
    schedule restarted at ``warmup``. Picklable, so it can cross process pools."""

    decaying: StepsizeSchedule
    warmup: int
    warmup_eta: float

    def __call__(self, ts: np.ndarray) -> np.ndarray:
        out = np.full(ts.shape, self.warmup_eta, dtype=float)
        late = ts >= self.warmup
        out[late] = self.decaying.at(ts[late])
        return out


def bandit_stepsizes(sched: StepsizeSchedule, warmup: int,
                     warmup_eta: Optional[float] = None) -> WarmStepsizes:
    """Warm-up stepsize defaults to the first decaying value."""
    dec = sched.with_t1(warmup)
    w_eta = dec.at(warmup) if warmup_eta is None else float(warmup_eta)
    return WarmStepsizes(dec, int(warmup), float(w_eta))


@dataclass
class BanditOutcome:
    t: np.ndarray
    regret: np.ndarray
    err: np.ndarray
    explore: np.ndarray
    betas: np.ndarray
    pull_counts: np.ndarray
    late_pulls: np.ndarray
    acc: Optional[dict] = None


def simulate_bandit(spec: ProblemSpec, env: Environment, policy_rng: Rng,
                    eta_fn: Callable, explore: ExplorationSchedule, T: int, lt: np.ndarray,
                    accumulate: bool = False, t_watch: int = -1) -> BanditOutcome:
    """One replication of the epsilon-greedy policy on a prepared environment."""
    K, d = spec.K, spec.d
    betas = np.zeros((K, d))
    counts = np.zeros(K, dtype=np.int64)
    late = np.zeros(K, dtype=np.int64)
    state = np.zeros(2)
    regret = np.zeros(lt.size)
    err = np.zeros((lt.size, K))
    expl = np.zeros(lt.size)
    S_xx = np.zeros((d, d) if accumulate else (1, 1))
    S_i = np.zeros((K, d, d) if accumulate else (1, 1, 1))
    n_exploit = np.zeros(K, dtype=np.int64)
    rss = np.zeros(1)
    t_watch = T + 1 if t_watch < 0 else int(t_watch)
    pos = 0
    gen = policy_rng.gen
    for t0, X, xi in env.blocks(T):
        n = X.shape[0]
        ts = np.arange(t0, t0 + n)
        coins = gen.random(n)
        picks = gen.integers(0, K, n)
        pos = _kernels.bandit_chunk(betas, spec.arms, X, xi, eta_fn(ts), explore.at(ts), coins,
                                    picks, t0, counts, state, t_watch, late, accumulate, S_xx,
                                    S_i, n_exploit, rss, lt, regret, err, expl, pos)
    if pos < lt.size:
        regret[pos:] = state[0]
        expl[pos:] = state[1]
        err[pos:] = np.sum((betas - spec.arms) ** 2, axis=1)
    acc = None
    if accumulate:
        acc = {"t": T, "S_xx": S_xx, "S_i": S_i, "n_exploit": n_exploit, "rss": float(rss[0])}
    return BanditOutcome(lt, regret, err, expl, betas, counts, late, acc)


@dataclass
class RegretLedger:
    """Cumulative regret per replication on a shared time grid."""

    t: np.ndarray
    per_replication: np.ndarray

    @property
    def mean(self) -> np.ndarray:
        return self.per_replication.mean(axis=0)

    @property
    def std(self) -> np.ndarray:
        R = self.per_replication.shape[0]
        return self.per_replication.std(axis=0, ddof=1) if R > 1 else np.zeros(self.t.size)


def _replicate(args):
    spec, cov, noise, eta_fn, explore, T, lt, rng, r, t_watch = args
    rep = rng.replication(r)
    env = Environment(fresh_process(cov), fresh_process(noise), rep)
    return simulate_bandit(spec, env, rep.spawn("policy"), eta_fn, explore, T, lt,
                           t_watch=t_watch)


def run_bandit(spec: ProblemSpec, cov: CovariateProcess, noise: NoiseProcess,
               sched: StepsizeSchedule, explore: ExplorationSchedule, T: int,
               replications: int, rng: Rng, *, warmup: int = 0,
               warmup_eta: Optional[float] = None, log_stride: Union[int, str] = "geom",
               t_watch: int = -1, map_fn: Callable = map):
    """Run independent replications; returns ``(trajectory, ledger, outcomes)``.

    The trajectory holds the replication means: cumulative regret (mean and
    standard deviation), the squared error of every arm, and the fraction of
    exploration steps so far.
    """
    if spec.K < 2:
        raise ValueError("a bandit needs at least two arms")
    if replications < 1:
        raise ValueError("need at least one replication")
    eta_fn = bandit_stepsizes(sched, warmup, warmup_eta)
    lt = log_times(T, log_stride)
    jobs = [(spec, cov, noise, eta_fn, explore, T, lt, rng, r, t_watch)
            for r in range(replications)]
    outcomes = list(map_fn(_replicate, jobs))
    ledger = RegretLedger(lt, np.array([o.regret for o in outcomes]))
    cols = {"t": lt, "regret_cum_mean": ledger.mean, "regret_cum_std": ledger.std}
    err = np.mean([o.err for o in outcomes], axis=0)
    for i in range(spec.K):
        cols[f"err_sq_arm_{i + 1}"] = err[:, i]
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.mean([o.explore for o in outcomes], axis=0) / lt
    cols["explore_frac"] = np.where(lt > 0, frac, 0.0)
    traj = TrajectoryRecord("bandit", cols, meta={
        "pull_counts": np.array([o.pull_counts for o in outcomes]),
        "late_pulls": np.array([o.late_pulls for o in outcomes]),
        "err_per_replication": np.array([o.err for o in outcomes])})
    return traj, ledger, outcomes
