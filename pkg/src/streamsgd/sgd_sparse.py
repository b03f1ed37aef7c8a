"""Sparse streaming regression: hard-thresholded SGD with online support growth.

The iterate lives on a support set ``S``. The running gradient sum ``G`` is
kept twice, once reset at every support update (local window) and once never
reset (cumulative window). A new coordinate enters the support as the
largest ``|G_i|`` outside ``S``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Union

import numpy as np

from . import _kernels
from .datagen import CovariateProcess, Environment, NoiseProcess, ProblemSpec, fresh_process
from .numerics import Rng
from .schedules import StepsizeSchedule
from .trajectory import TrajectoryRecord, log_times

__all__ = [
    "SupportSet",
    "SparseSgdState",
    "hard_threshold",
    "sparse_sgd_step",
    "select_support_addition",
    "oracle_update_times",
    "heuristic_update_trigger",
    "sparse_dim",
    "run_sparse",
    "SPARSE_MODES",
]

SPARSE_MODES = ("fixed", "oracle-local", "oracle-cumulative", "heuristic")


@dataclass(frozen=True)
class SupportSet:
    """Sorted, duplicate-free, 0-based coordinate indices."""

    indices: tuple = ()

    def __post_init__(self):
        idx = tuple(sorted(set(int(i) for i in self.indices)))
        if len(idx) != len(tuple(self.indices)):
            raise ValueError("support has duplicate indices")
        if idx and idx[0] < 0:
            raise ValueError("support indices must be >= 0")
        object.__setattr__(self, "indices", idx)

    def __contains__(self, i):
        return int(i) in self.indices

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def add(self, i: int) -> "SupportSet":
        if int(i) in self.indices:
            raise ValueError(f"index {i} already in the support")
        return SupportSet(self.indices + (int(i),))

    def mask(self, d: int) -> np.ndarray:
        m = np.zeros(d, dtype=bool)
        m[list(self.indices)] = True
        return m

    def complement(self, d: int) -> np.ndarray:
        return np.flatnonzero(~self.mask(d))


def _as_support(S) -> SupportSet:
    return S if isinstance(S, SupportSet) else SupportSet(tuple(S))


def hard_threshold(v, S) -> np.ndarray:
    """Keep the entries of ``v`` indexed by ``S``; zero the rest."""
    v = np.asarray(v, dtype=float)
    out = np.zeros_like(v)
    idx = list(_as_support(S).indices)
    out[idx] = v[idx]
    return out


@dataclass
class SparseSgdState:
    beta: np.ndarray
    support: SupportSet
    G_window: np.ndarray
    G_cum: np.ndarray
    t: int = 0
    last_update: int = 0
    update_log: list = field(default_factory=list)

    @classmethod
    def start(cls, d: int, support, beta0=None) -> "SparseSgdState":
        S = _as_support(support)
        beta = np.zeros(d) if beta0 is None else hard_threshold(beta0, S)
        return cls(beta, S, np.zeros(d), np.zeros(d))

    def with_addition(self, i: int) -> "SparseSgdState":
        """Grow the support by ``i`` and reset the local window."""
        return replace(self, support=self.support.add(i), G_window=np.zeros_like(self.G_window),
                       last_update=self.t, update_log=self.update_log + [(self.t, int(i))])


def sparse_sgd_step(state: SparseSgdState, X, Y: float, eta: float) -> SparseSgdState:
    """``H_S(beta - eta g)`` with ``g = (X.beta - Y) X``; both G sums gain ``g``."""
    X = np.asarray(X, dtype=float)
    if X.shape != state.beta.shape:
        raise ValueError(f"covariate shape {X.shape} does not match {state.beta.shape}")
    if not (np.all(np.isfinite(X)) and np.isfinite(Y) and np.isfinite(eta)):
        raise ValueError("non-finite input to the sparse SGD step")
    g = (float(np.dot(X, state.beta)) - Y) * X
    return replace(state, beta=hard_threshold(state.beta - eta * g, state.support),
                   G_window=state.G_window + g, G_cum=state.G_cum + g, t=state.t + 1)


def select_support_addition(G, S) -> int:
    """Index outside ``S`` with the largest ``|G_i|``; lowest index on ties."""
    G = np.asarray(G, dtype=float)
    outside = _as_support(S).complement(G.shape[0])
    if outside.size == 0:
        raise ValueError("support already contains every coordinate")
    return int(outside[np.argmax(np.abs(G[outside]))])


def heuristic_update_trigger(state: SparseSgdState, rho: float = 10.0, min_gap: int = 1000,
                             window: str = "local") -> bool:
    """Fire when ``max |G|`` outside the support is at least ``rho`` times the median."""
    if not rho > 1:
        raise ValueError("rho must exceed 1")
    if state.t - state.last_update < min_gap:
        return False
    G = state.G_cum if window == "cumulative" else state.G_window
    outside = state.support.complement(G.shape[0])
    if outside.size == 0:
        return False
    a = np.abs(G[outside])
    return bool(a.max() > 0 and a.max() >= rho * np.median(a))


def _min_tau_over_log(rhs: float) -> int:
    """Smallest integer tau >= 3 with tau / log(tau) >= rhs (increasing there)."""
    f = lambda x: x / math.log(x)  # noqa: E731
    if f(3) >= rhs:
        return 3
    hi = 4
    while f(hi) < rhs:
        hi *= 2
    lo = hi // 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if f(mid) >= rhs:
            hi = mid
        else:
            lo = mid
    return hi


def oracle_update_times(spec: ProblemSpec, initial_support, window: str = "local",
                        c_sched: float = 1.0, c_a: float = 5.0) -> list:
    """Support-update times that satisfy the sufficient schedule conditions.

    Every unspecified constant is ``c_sched``. Updates are assumed to add the
    largest remaining signal first. The first time solves
    ``tau / log(tau) >= C s+ log(d/s+) sigma^2 / (lambda_min ||beta_miss||^2)``;
    later times follow the local- or cumulative-window rule, measured against
    the signal still missing before the update, and are strictly increasing.
    """
    if spec.support is None:
        raise ValueError("the problem needs a declared support")
    if window not in ("local", "cumulative"):
        raise ValueError(f"unknown window {window!r}")
    d, beta = spec.d, spec.beta
    lam = spec.lambda_min if spec.lambda_min is not None else 1.0
    S0 = set(_as_support(initial_support).indices)
    missing = [i for i in spec.support if i not in S0]
    if not missing:
        return []
    missing.sort(key=lambda i: (-abs(beta[i]), i))
    sig2 = spec.sigma**2
    sq = np.array([beta[i] ** 2 for i in missing])
    s_plus = len(missing)
    taus = [_min_tau_over_log(c_sched * s_plus * math.log(d / s_plus) * sig2 / (lam * sq.sum()))]
    size = len(S0) + 1
    for l in range(2, s_plus + 1):
        miss = sq[l - 1:].sum()
        s_l = size + 1
        stat = c_sched * s_l * math.log(2 * d / s_l) * sig2 / (lam * miss)
        prev = taus[-1]
        if window == "local":
            acc = sum(taus[i] ** (c_a - 2) * sq[i] for i in range(l - 1))
            first = math.sqrt(c_sched * acc / (prev ** (c_a - 4) * miss))
            need = max(first, prev + stat)
        else:
            acc = sum(taus[i] * math.sqrt(sq[i]) for i in range(l - 1))
            need = max(c_sched * acc / math.sqrt(miss), stat)
        taus.append(max(int(math.ceil(need)), prev + 1))
        size += 1
    return taus


def sparse_dim(d: int, s: Optional[int]) -> float:
    """``s log(2d/s)`` when the sparsity is known, else ``d``."""
    if s is None:
        return float(d)
    if not 1 <= s <= d:
        raise ValueError("sparsity must lie in [1, d]")
    return s * math.log(2.0 * d / s)


def run_sparse(spec: ProblemSpec, cov: CovariateProcess, noise: NoiseProcess,
               sched: StepsizeSchedule, mode: str, T: int, rng: Optional[Rng] = None, *,
               initial_support=None, warmup: Union[int, str] = "oracle", warmup_eta: Optional[float] = None,
               keep_top: Optional[int] = None, update_times: Optional[Iterable[int]] = None,
               c_sched: float = 1.0, window: str = "local", rho: float = 10.0,
               min_gap: int = 1000, check_every: int = 1, s_max: Optional[int] = None,
               max_updates: Optional[int] = None, log_stride: Union[int, str] = "geom",
               compare_dense: Optional[StepsizeSchedule] = None,
               env: Optional[Environment] = None) -> TrajectoryRecord:
    """Sparse SGD on a simulated stream.

    Without ``initial_support`` a dense constant-stepsize warm-up runs first
    (until the squared error drops to ``sigma^2 / lambda_max`` for
    ``warmup="oracle"``, or for a fixed number of steps), then the largest
    ``keep_top`` (default ``s + 2``) entries define the starting support.
    The decaying stepsize restarts at the end of the warm-up. Update times are
    absolute step indices. ``compare_dense`` adds a dense decaying-stepsize
    baseline that shares the warm start and the data stream.

    Columns: t, err_sq, err_sq_on_support, support_size, plus err_sq_dense
    when a baseline is requested. Update events are in ``meta["events"]``.
    """
    if mode not in SPARSE_MODES:
        raise ValueError(f"unknown sparse mode {mode!r}")
    if spec.K != 1:
        raise ValueError("sparse regression needs a single-arm problem")
    if sched.kind != "decaying":
        raise ValueError("sparse SGD needs a decaying stepsize")
    if env is None:
        if rng is None:
            raise ValueError("need an Rng or an Environment")
        env = Environment(fresh_process(cov), fresh_process(noise), rng)
    d, beta_star = spec.d, spec.beta
    s = spec.s
    lt = log_times(T, log_stride)
    err = np.zeros(lt.size)
    on = np.zeros(lt.size)
    size = np.zeros(lt.size, dtype=np.int64)
    err_dense = np.zeros(lt.size)
    pos = 0
    beta = np.zeros(d)

    # warm start
    t = 0
    pending = None
    if initial_support is None:
        if warmup_eta is None:
            lam_max = spec.lambda_max if spec.lambda_max is not None else 1.0
            warmup_eta = 1.0 / (2.0 * d * lam_max)
        lam_max = spec.lambda_max if spec.lambda_max is not None else 1.0
        thresh = spec.sigma**2 / lam_max if warmup == "oracle" else -1.0
        limit = T if warmup == "oracle" else min(int(warmup), T)
        while t < limit:
            n = min(4096, limit - t)
            X, xi = env.take(n)
            Y = X @ beta_star + xi
            k, pos = _kernels.constant_until(beta, X, Y, beta_star, warmup_eta, thresh, t, lt,
                                             err, pos)
            on[:pos] = err[:pos]
            size[:pos] = d
            t += k
            if k < n:
                pending = (X[k:], Y[k:])
                break
        keep = (s + 2) if keep_top is None else int(keep_top)
        keep = min(max(keep, 1), d)
        order = np.argsort(-np.abs(beta), kind="stable")
        S0 = SupportSet(tuple(order[:keep]))
    else:
        S0 = _as_support(initial_support)
    t_start = t
    beta_dense = beta.copy()
    beta = hard_threshold(beta, S0)

    mask = S0.mask(d)
    G_win, G_cum = np.zeros(d), np.zeros(d)
    if s_max is None:
        s_max = min(2 * s, d) if s is not None else d
    if max_updates is None:
        max_updates = d
    if mode in ("oracle-local", "oracle-cumulative"):
        if update_times is None:
            rel = oracle_update_times(spec, S0, mode.split("-")[1], c_sched)
            update_times = [t_start + x for x in rel]
        ut = np.array(sorted(update_times), dtype=np.int64)
    else:
        ut = np.zeros(0, dtype=np.int64)
    mode_code = {"fixed": 0, "oracle-local": 1, "oracle-cumulative": 1, "heuristic": 2}[mode]
    use_cum = window == "cumulative" or mode == "oracle-cumulative"
    if mode == "oracle-local":
        use_cum = False
    state = np.array([mask.sum(), t_start, 0, 0], dtype=np.int64)
    ev_t = np.full(d, -1, dtype=np.int64)
    ev_idx = np.full(d, -1, dtype=np.int64)
    d_state = np.array([1, t_start], dtype=np.int64)
    d_pos = pos
    d_phase = np.zeros(lt.size, dtype=np.int64)
    if compare_dense is not None:
        err_dense[:pos] = err[:pos]

    def step_block(t0, X, Y):
        nonlocal pos, d_pos
        if compare_dense is not None:
            d_pos = _kernels.dense_chunk(beta_dense, X, Y, beta_star, t0, d_state, 0.0,
                                         compare_dense.c_a_prime, compare_dense.offset, -1.0, -1,
                                         lt, err_dense, d_phase, d_pos)
        pos = _kernels.sparse_chunk(beta, mask, G_win, G_cum, X, Y, beta_star, t0, t_start, state,
                                    sched.c_a_prime, sched.offset, mode_code, ut, use_cum, rho,
                                    min_gap, check_every, s_max, max_updates, ev_t, ev_idx,
                                    lt, err, on, size, pos)

    if pending is not None:
        X, Y = pending
        n = min(X.shape[0], T - t)
        step_block(t, X[:n], Y[:n])
        t += n
    while t < T:
        n = min(4096, T - t)
        X, xi = env.take(n)
        step_block(t, X, X @ beta_star + xi)
        t += n
    if pos < lt.size:
        r = beta - beta_star
        err[pos:] = r @ r
        on[pos:] = r[mask] @ r[mask]
        size[pos:] = mask.sum()
    if compare_dense is not None and d_pos < lt.size:
        err_dense[d_pos:] = float(np.sum((beta_dense - beta_star) ** 2))

    cols = {"t": lt, "err_sq": err, "err_sq_on_support": on, "support_size": size}
    if compare_dense is not None:
        cols["err_sq_dense"] = err_dense
    n_ev = int(state[2])
    events = [(int(a), int(b)) for a, b in zip(ev_t[:n_ev], ev_idx[:n_ev])]
    return TrajectoryRecord("sparse", cols, meta={
        "t_start": t_start, "initial_support": S0.indices, "events": events,
        "support": tuple(int(i) for i in np.flatnonzero(mask)), "beta": beta.copy(),
        "beta_dense": beta_dense.copy() if compare_dense is not None else None,
        "G_window": G_win.copy(), "G_cum": G_cum.copy()})
