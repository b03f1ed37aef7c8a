"""Ground-truth problems and the covariate / noise streams that feed them.

Each process exposes a pure one-step function (the reference), a per-step
``next_*`` that draws its own innovations, and a chunked path used by the run
loops. The chunked path draws innovations in blocks of ``CHUNK`` steps and
runs the recursion in compiled code.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .numerics import Rng

__all__ = [
    "CHUNK",
    "ProblemSpec",
    "CovariateProcess",
    "NoiseProcess",
    "Environment",
    "sphere_ar_step",
    "weighted_history_step",
    "dependent_sign_step",
    "next_covariate",
    "next_noise",
    "emit_regression_obs",
    "emit_bandit_reward",
    "equicorrelated_cholesky",
]

CHUNK = 8192

COVARIATE_KINDS = ("iid", "sphere-ar", "weighted-history")
NOISE_KINDS = ("iid", "dependent-sign")


@dataclass
class ProblemSpec:
    """Simulator-side truth. Estimators never read it; only error/regret logging does."""

    arms: np.ndarray
    sigma: float = 1.0
    support: Optional[tuple] = None
    lambda_min: Optional[float] = None
    lambda_max: Optional[float] = None
    lambda_max_s_off: Optional[float] = None
    lambda_max_1_off: Optional[float] = None
    h: Optional[float] = None
    optimal_arms: Optional[tuple] = None

    def __post_init__(self):
        arms = np.atleast_2d(np.asarray(self.arms, dtype=float))
        if arms.ndim != 2 or arms.shape[0] < 1 or arms.shape[1] < 1:
            raise ValueError("arms must be a non-empty (K, d) array")
        if not np.all(np.isfinite(arms)):
            raise ValueError("arm parameters must be finite")
        self.arms = arms
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.support is not None:
            sup = tuple(sorted(set(int(i) for i in self.support)))
            if len(sup) != len(tuple(self.support)):
                raise ValueError("support has duplicate indices")
            if sup and (sup[0] < 0 or sup[-1] >= self.d):
                raise ValueError("support index out of range")
            self.support = sup
        if self.h is not None and not self.h > 0:
            raise ValueError("margin h must be positive")
        if self.optimal_arms is not None:
            self.optimal_arms = tuple(sorted(int(i) for i in self.optimal_arms))

    @classmethod
    def regression(cls, beta, sigma=1.0, **kw) -> "ProblemSpec":
        return cls(np.asarray(beta, dtype=float)[None, :], sigma=sigma, **kw)

    @property
    def d(self) -> int:
        return self.arms.shape[1]

    @property
    def K(self) -> int:
        return self.arms.shape[0]

    @property
    def beta(self) -> np.ndarray:
        if self.K != 1:
            raise ValueError("beta is only defined for a single-arm problem")
        return self.arms[0]

    @property
    def s(self) -> Optional[int]:
        return None if self.support is None else len(self.support)


def equicorrelated_cholesky(d: int, rho: float) -> np.ndarray:
    """Lower Cholesky factor of ``(1 - rho) I + rho 11^T``."""
    if not -1.0 / max(d - 1, 1) < rho < 1.0:
        raise ValueError("rho outside the positive-definite range")
    return np.linalg.cholesky((1.0 - rho) * np.eye(d) + rho * np.ones((d, d)))


# ------------------------------------------------------------- one-step maps

def sphere_ar_step(x_prev: np.ndarray, sign: float, e: np.ndarray) -> np.ndarray:
    """``sign * x_prev / ||x_prev|| + e``; the drift is 0 when ``x_prev`` is 0."""
    nrm = np.sqrt(np.sum(x_prev * x_prev))
    if nrm == 0.0:
        return e.copy()
    return sign * (x_prev / nrm) + e


def weighted_history_step(history: Sequence[np.ndarray], nu: np.ndarray,
                          e: np.ndarray) -> np.ndarray:
    """``sum_i nu_i history_i + e``; history is ordered most recent first."""
    out = e.copy()
    for w, x in zip(nu, history):
        out = out + w * x
    return out


def dependent_sign_step(xi_prev: float, x1_prev: float, sign: float, z: float,
                        sigma: float) -> float:
    """``sign * clip(xi_prev, -1, 1) * sgn(x1_prev) + sigma * z``."""
    return sign * min(max(xi_prev, -1.0), 1.0) * float(np.sign(x1_prev)) + sigma * z


# ---------------------------------------------------------------- processes

@dataclass
class CovariateProcess:
    """Covariate stream state.

    ``kind`` is ``iid`` (optionally ``chol @ z``), ``sphere-ar`` or
    ``weighted-history``. ``init`` chooses X_0 for the dependent kinds:
    ``gaussian`` or ``sphere`` (uniform on the unit sphere).
    """

    kind: str
    d: int
    init: str = "gaussian"
    window: int = 16
    chol: Optional[np.ndarray] = None
    t: int = 0
    x_prev: Optional[np.ndarray] = None
    _ring: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in COVARIATE_KINDS:
            raise ValueError(f"unknown covariate process {self.kind!r}")
        if self.d < 1:
            raise ValueError("dimension must be >= 1")
        if self.init not in ("gaussian", "sphere"):
            raise ValueError(f"unknown initialization {self.init!r}")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.chol is not None:
            self.chol = np.asarray(self.chol, dtype=float)
            if self.kind != "iid" or self.chol.shape != (self.d, self.d):
                raise ValueError("chol applies to iid covariates and must be d x d")
        if self.kind == "weighted-history":
            self._ring = np.zeros((self.window, self.d))

    def reset(self):
        self.t = 0
        self.x_prev = None
        if self._ring is not None:
            self._ring[:] = 0.0

    def _initial(self, gen) -> np.ndarray:
        x = gen.standard_normal(self.d)
        if self.init == "sphere":
            x = x / np.sqrt(np.sum(x * x))
        return x

    def history(self) -> list:
        """Most recent first, at most ``window`` entries (weighted-history only)."""
        m = min(self.t, self.window)
        return [self._ring[(self.t - 1 - i) % self.window].copy() for i in range(m)]

    def _push(self, x: np.ndarray):
        if self._ring is not None:
            self._ring[self.t % self.window] = x
        self.x_prev = x
        self.t += 1

    def take(self, rng: Rng, n: int) -> np.ndarray:
        """The next ``n`` covariates as an ``(n, d)`` array, advancing the state."""
        gen = rng.gen
        out = np.empty((n, self.d))
        if n == 0:
            return out
        if self.kind == "iid":
            Z = gen.standard_normal((n, self.d))
            out[:] = Z if self.chol is None else Z @ self.chol.T
            self.t += n
            self.x_prev = out[-1].copy()
            return out
        start = 0
        if self.t == 0:
            out[0] = self._initial(gen)
            self._push(out[0].copy())
            start = 1
        m = n - start
        if m == 0:
            return out
        E = gen.standard_normal((m, self.d))
        if self.kind == "sphere-ar":
            signs = np.where(gen.random(m) < 0.5, 1.0, -1.0)
            _kernels.sphere_ar_fill(self.x_prev, signs, E, out[start:])
            self.t += m
        else:
            U = gen.uniform(-1.0, 1.0, (m, self.window))
            self.t = _kernels.weighted_history_fill(self._ring, self.t, self.t, U, E,
                                                    out[start:])
        self.x_prev = out[-1].copy()
        return out


def next_covariate(p: CovariateProcess, rng: Rng) -> np.ndarray:
    """Draw one covariate with the pure-Python recursion and advance ``p``."""
    gen = rng.gen
    if p.kind == "iid":
        z = gen.standard_normal(p.d)
        x = z if p.chol is None else p.chol @ z
    elif p.t == 0:
        x = p._initial(gen)
    elif p.kind == "sphere-ar":
        sign = 1.0 if gen.random() < 0.5 else -1.0
        x = sphere_ar_step(p.x_prev, sign, gen.standard_normal(p.d))
    else:
        hist = p.history()
        nu = gen.uniform(-1.0, 1.0, len(hist)) * (0.5 / (p.t + 1.0))
        x = weighted_history_step(hist, nu, gen.standard_normal(p.d))
    p._push(np.array(x, dtype=float))
    return x


@dataclass
class NoiseProcess:
    """Noise stream state; ``x1_prev`` is the previous covariate's first coordinate."""

    kind: str
    sigma: float = 1.0
    t: int = 0
    xi_prev: float = 0.0
    x1_prev: float = 0.0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise process {self.kind!r}")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")

    def reset(self):
        self.t = 0
        self.xi_prev = 0.0
        self.x1_prev = 0.0

    def take(self, rng: Rng, x1: np.ndarray) -> np.ndarray:
        """Noise for the steps whose covariate first coordinates are ``x1``."""
        gen = rng.gen
        n = x1.shape[0]
        out = np.empty(n)
        if n == 0:
            return out
        if self.kind == "iid":
            out[:] = self.sigma * gen.standard_normal(n)
        else:
            start = 0
            if self.t == 0:
                out[0] = self.sigma * gen.standard_normal()
                start = 1
            m = n - start
            if m:
                signs = np.where(gen.random(m) < 0.5, 1.0, -1.0)
                Z = gen.standard_normal(m)
                x1_prev = self.x1_prev if start == 0 else x1[0]
                _kernels.dependent_sign_fill(out[0] if start else self.xi_prev, x1_prev,
                                             x1[start:], signs, Z, self.sigma, out[start:])
        self.t += n
        self.xi_prev = float(out[-1])
        self.x1_prev = float(x1[-1])
        return out


def next_noise(p: NoiseProcess, rng: Rng, x1: float) -> float:
    """One noise draw for a step whose covariate first coordinate is ``x1``."""
    gen = rng.gen
    if p.kind == "iid" or p.t == 0:
        xi = p.sigma * gen.standard_normal()
    else:
        sign = 1.0 if gen.random() < 0.5 else -1.0
        xi = dependent_sign_step(p.xi_prev, p.x1_prev, sign, gen.standard_normal(), p.sigma)
    p.t += 1
    p.xi_prev = float(xi)
    p.x1_prev = float(x1)
    return float(xi)


def emit_regression_obs(spec: ProblemSpec, X: np.ndarray, xi: float) -> float:
    return float(np.dot(X, spec.beta) + xi)


def emit_bandit_reward(spec: ProblemSpec, X: np.ndarray, arm: int, xi: float) -> float:
    if not 0 <= arm < spec.K:
        raise IndexError(f"arm {arm} out of range for K={spec.K}")
    return float(np.dot(X, spec.arms[arm]) + xi)


def fresh_process(p):
    """Independent copy of a process rewound to t = 0."""
    q = copy.deepcopy(p)
    q.reset()
    return q


class Environment:
    """Paired covariate/noise streams with their own random substreams.

    ``take(n)`` returns ``(X, xi)`` for the next ``n`` steps. Randomness is
    always drawn in blocks of ``CHUNK`` so results do not depend on how a
    caller slices the horizon.
    """

    def __init__(self, cov: CovariateProcess, noise: NoiseProcess, rng: Rng):
        self.cov = cov
        self.noise = noise
        self._rng_x = rng.spawn("covariates")
        self._rng_e = rng.spawn("noise")
        self._X = np.empty((0, cov.d))
        self._xi = np.empty(0)
        self._pos = 0

    def _refill(self):
        X = self.cov.take(self._rng_x, CHUNK)
        xi = self.noise.take(self._rng_e, X[:, 0])
        self._X = np.concatenate([self._X[self._pos:], X])
        self._xi = np.concatenate([self._xi[self._pos:], xi])
        self._pos = 0

    def take(self, n: int):
        while self._X.shape[0] - self._pos < n:
            self._refill()
        X = self._X[self._pos:self._pos + n]
        xi = self._xi[self._pos:self._pos + n]
        self._pos += n
        return X, xi

    def blocks(self, T: int, size: int = CHUNK):
        """Yield ``(t0, X, xi)`` blocks covering steps ``0..T-1``."""
        t = 0
        while t < T:
            n = min(size, T - t)
            X, xi = self.take(n)
            yield t, X, xi
            t += n

