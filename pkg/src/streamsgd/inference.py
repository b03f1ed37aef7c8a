"""Plug-in inference for the last SGD iterate.

Streaming second-moment accumulators give the covariance and noise-level
estimates. Those feed the limiting covariance of ``sqrt(t) (beta_t - beta*)``
under the decaying stepsize, which in turn whitens the error for confidence
regions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import stats

from .bandit import bandit_stepsizes, simulate_bandit
from .datagen import CovariateProcess, Environment, NoiseProcess, ProblemSpec, fresh_process
from .numerics import Rng, sym_eigendecompose
from .schedules import ExplorationSchedule, StepsizeSchedule
from .trajectory import log_times

__all__ = [
    "DegenerateVarianceError",
    "CovAccumulators",
    "LimitingVariance",
    "accumulate",
    "finalize_sigma_combined",
    "limiting_variance_diag",
    "limiting_variance",
    "whiten_and_test",
    "unwhiten",
    "CoverageResult",
    "coverage_experiment",
]


class DegenerateVarianceError(ValueError):
    """``2 C_a' lambda_j <= 1``: the limiting variance is infinite."""

    def __init__(self, index: int, value: float):
        super().__init__(f"2 C_a' lambda_{index} = {value:.6g} <= 1; variance is unbounded")
        self.index = index


@dataclass
class CovAccumulators:
    """Running sums behind the covariance and noise estimates.

    ``S_i[a]`` only collects greedy (non-exploration) steps on arm ``a``.
    """

    t: int
    S_xx: np.ndarray
    S_i: np.ndarray
    n_exploit: np.ndarray
    rss: float = 0.0

    @classmethod
    def empty(cls, K: int, d: int) -> "CovAccumulators":
        return cls(0, np.zeros((d, d)), np.zeros((K, d, d)), np.zeros(K, dtype=np.int64))

    @property
    def sigma_star(self) -> np.ndarray:
        """``S_xx / t``."""
        if self.t < 1:
            raise ValueError("no observations accumulated")
        return self.S_xx / self.t

    @property
    def noise_var(self) -> float:
        """``rss / t``, the plug-in noise variance."""
        if self.t < 1:
            raise ValueError("no observations accumulated")
        return self.rss / self.t


def accumulate(acc: CovAccumulators, X, Y: float, a: int, explored: bool,
               beta_a) -> CovAccumulators:
    """Add one observation in place and return ``acc``.

    The residual uses the working estimate ``beta_a`` of the pulled arm.
    """
    X = np.asarray(X, dtype=float)
    outer = np.outer(X, X)
    acc.S_xx += outer
    if not explored:
        acc.S_i[a] += outer
        acc.n_exploit[a] += 1
    acc.rss += (Y - float(np.dot(X, beta_a))) ** 2
    acc.t += 1
    return acc


def finalize_sigma_combined(acc: CovAccumulators, i: int, pi_star: float, K: int) -> np.ndarray:
    """``(pi*/K) S_xx/t + (1 - pi*) S_i/((1 - pi*) t)``.

    The second term is skipped when its weight ``1 - pi*`` is zero.
    """
    if not 0.0 <= pi_star <= 1.0:
        raise ValueError("pi* must lie in [0, 1]")
    if acc.t < 1:
        raise ValueError("no observations accumulated")
    out = (pi_star / K) * acc.sigma_star
    if pi_star < 1.0:
        if acc.n_exploit[i] < 1:
            raise ValueError(f"arm {i} has no greedy observations")
        sigma_i = acc.S_i[i] / ((1.0 - pi_star) * acc.t)
        out = out + (1.0 - pi_star) * sigma_i
    return out


def limiting_variance_diag(lam_raw, c_a_prime: float, sigma_star: float) -> np.ndarray:
    """``sigma*^2 / lam_j * (C' lam_j)^2 / (2 C' lam_j - 1)`` entrywise."""
    lam = np.asarray(lam_raw, dtype=float)
    x = c_a_prime * lam
    bad = np.flatnonzero(2.0 * x <= 1.0)
    if bad.size:
        raise DegenerateVarianceError(int(bad[0]), float(2.0 * x[bad[0]]))
    return sigma_star**2 / lam * x**2 / (2.0 * x - 1.0)


@dataclass
class LimitingVariance:
    U: np.ndarray
    lam_raw: np.ndarray
    lam_C: np.ndarray
    c_a_prime: float
    sigma_star: float

    @property
    def matrix(self) -> np.ndarray:
        return (self.U * self.lam_C) @ self.U.T


def limiting_variance(Sigma, c_a_prime: float, sigma_star: float) -> LimitingVariance:
    U, lam = sym_eigendecompose(Sigma)
    return LimitingVariance(U, lam, limiting_variance_diag(lam, c_a_prime, sigma_star),
                            float(c_a_prime), float(sigma_star))


def whiten_and_test(beta_t, beta_star, t: float, U, lam_C) -> np.ndarray:
    """``sqrt(t) diag(lam_C^-1/2) U^T (beta_t - beta_star)``."""
    lam_C = np.asarray(lam_C, dtype=float)
    if np.any(lam_C <= 0):
        raise ValueError("limiting variances must be positive")
    diff = np.asarray(beta_t, dtype=float) - np.asarray(beta_star, dtype=float)
    return np.sqrt(t) * (np.asarray(U).T @ diff) / np.sqrt(lam_C)


def unwhiten(z, t: float, U, lam_C) -> np.ndarray:
    """Inverse of :func:`whiten_and_test`: returns ``beta_t - beta_star``."""
    return np.asarray(U) @ (np.sqrt(np.asarray(lam_C, dtype=float)) * np.asarray(z)) / np.sqrt(t)


@dataclass
class CoverageResult:
    """Empirical coverage over replications, per arm.

    ``per_coordinate[k, j]`` is the fraction of replications whose j-th
    whitened coordinate lies inside the two-sided normal interval;
    ``rectangle`` requires every coordinate inside; ``ellipsoid`` uses the
    chi-square region on the squared norm.
    """

    arms: tuple
    level: float
    per_coordinate: np.ndarray
    rectangle: np.ndarray
    ellipsoid: np.ndarray
    whitened: np.ndarray
    scaled_error: np.ndarray
    plug_in_lam: np.ndarray


def _coverage_replication(args):
    spec, cov, noise, eta_fn, explore, t_eval, rng, r = args
    rep = rng.replication(r)
    env = Environment(fresh_process(cov), fresh_process(noise), rep)
    out = simulate_bandit(spec, env, rep.spawn("policy"), eta_fn, explore, t_eval,
                          log_times(t_eval, max(t_eval, 1)), accumulate=True)
    acc = out.acc
    return out.betas, CovAccumulators(acc["t"], acc["S_xx"], acc["S_i"], acc["n_exploit"],
                                      acc["rss"])


def coverage_experiment(spec: ProblemSpec, cov: CovariateProcess, noise: NoiseProcess,
                        sched: StepsizeSchedule, explore: ExplorationSchedule, t_eval: int,
                        level: float, R: int, rng: Rng, arms: Optional[tuple] = None,
                        min_replications: int = 100, map_fn: Callable = map) -> CoverageResult:
    """Monte Carlo coverage of plug-in confidence regions at step ``t_eval``.

    Each replication runs the epsilon-greedy policy (a single arm with zero
    exploration is plain SGD), builds ``Sigma_i(pi*)`` and ``sigma*^2`` from
    its own accumulators, and whitens ``beta_i - beta_i*`` with the plug-in
    limiting covariance. ``pi*`` is the schedule's limit.
    """
    if R < min_replications:
        raise ValueError(f"need at least {min_replications} replications")
    if not 0.0 <= level <= 1.0:
        raise ValueError("level must lie in [0, 1]")
    if sched.kind != "decaying":
        raise ValueError("inference needs the decaying stepsize")
    arms = tuple(range(spec.K)) if arms is None else tuple(arms)
    eta_fn = bandit_stepsizes(sched, 0)
    jobs = [(spec, cov, noise, eta_fn, explore, t_eval, rng, r) for r in range(R)]
    results = list(map_fn(_coverage_replication, jobs))
    pi_star = explore.limit
    d = spec.d
    z = np.empty((R, len(arms), d))
    raw = np.empty((R, len(arms), d))
    lam_hat = np.empty((R, len(arms), d))
    for r, (betas, acc) in enumerate(results):
        sigma_hat = np.sqrt(acc.noise_var)
        for k, i in enumerate(arms):
            lv = limiting_variance(finalize_sigma_combined(acc, i, pi_star, spec.K),
                                   sched.c_a_prime, sigma_hat)
            z[r, k] = whiten_and_test(betas[i], spec.arms[i], t_eval, lv.U, lv.lam_C)
            raw[r, k] = np.sqrt(t_eval) * (betas[i] - spec.arms[i])
            lam_hat[r, k] = lv.lam_C
    q = stats.norm.ppf(0.5 + level / 2.0)
    inside = np.abs(z) <= q
    chi = stats.chi2.ppf(level, d)
    return CoverageResult(arms, level, inside.mean(axis=0), inside.all(axis=2).mean(axis=0),
                          (np.sum(z * z, axis=2) <= chi).mean(axis=0), z, raw, lam_hat)
