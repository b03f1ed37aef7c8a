"""Last-iterate SGD for streaming linear regression.

The driver runs a constant-stepsize phase until the iterate is close enough,
then a ``(C_a/lambda_min) / (t - t1 + C_b d)`` decaying phase.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence, Union

import numpy as np

from . import _kernels
from .datagen import CovariateProcess, Environment, NoiseProcess, ProblemSpec, fresh_process
from .numerics import Rng
from .schedules import StepsizeSchedule
from .trajectory import TrajectoryRecord, log_times

__all__ = ["DenseSgdState", "sgd_step", "run_dense", "fit_loglog_slope"]

CONSTANT, DECAYING = 0, 1


@dataclass
class DenseSgdState:
    beta: np.ndarray
    t: int = 0
    phase: int = CONSTANT
    t1: Optional[int] = None


def _check_finite(X, Y, eta):
    if not (np.all(np.isfinite(X)) and np.isfinite(Y) and np.isfinite(eta)):
        raise ValueError("non-finite input to the SGD step")


def sgd_step(state: DenseSgdState, X, Y: float, eta: float) -> DenseSgdState:
    """``beta - eta (X.beta - Y) X``; returns a new state with ``t + 1``."""
    X = np.asarray(X, dtype=float)
    if X.shape != state.beta.shape:
        raise ValueError(f"covariate shape {X.shape} does not match {state.beta.shape}")
    _check_finite(X, Y, eta)
    r = float(np.dot(X, state.beta)) - Y
    return replace(state, beta=state.beta - (eta * r) * X, t=state.t + 1)


def run_dense(spec: ProblemSpec, cov: CovariateProcess, noise: NoiseProcess,
              schedules: Sequence[Optional[StepsizeSchedule]], T: int,
              log_stride: Union[int, str] = "geom", rng: Optional[Rng] = None,
              beta0=None, t1: Optional[int] = None, switch_err: Optional[float] = None,
              env: Optional[Environment] = None) -> TrajectoryRecord:
    """Two-phase SGD on a simulated stream; logs the squared error to ``spec.beta``.

    ``schedules = (constant, decaying)``. With ``constant`` set to None the
    decaying schedule runs from step ``decaying.t1``. Otherwise the switch
    happens at step ``t1`` if given, else at the first step whose squared
    error is at most ``switch_err`` (default ``sigma^2 / lambda_max``).
    """
    if spec.K != 1:
        raise ValueError("regression needs a single-arm problem")
    if T < 0:
        raise ValueError("horizon must be >= 0")
    const, decay = schedules
    if decay is None or decay.kind != "decaying":
        raise ValueError("the second schedule must be decaying")
    if const is not None and const.kind != "constant":
        raise ValueError("the first schedule must be constant")
    if env is None:
        if rng is None:
            raise ValueError("need an Rng or an Environment")
        env = Environment(fresh_process(cov), fresh_process(noise), rng)
    beta_star = spec.beta
    beta = np.zeros(spec.d) if beta0 is None else np.array(beta0, dtype=float)

    state = np.zeros(2, dtype=np.int64)
    if const is None:
        state[:] = (DECAYING, decay.t1)
        eta_c, t1_fixed, sw = 0.0, -1, -1.0
    else:
        eta_c = const.eta
        if t1 is not None:
            t1_fixed, sw = int(t1), -1.0
        else:
            lam_max = spec.lambda_max if spec.lambda_max is not None else 1.0
            t1_fixed = -1
            sw = spec.sigma**2 / lam_max if switch_err is None else float(switch_err)

    lt = log_times(T, log_stride)
    err = np.zeros(lt.size)
    phase = np.zeros(lt.size, dtype=np.int64)
    pos = 0
    for t0, X, xi in env.blocks(T):
        Y = X @ beta_star + xi
        pos = _kernels.dense_chunk(beta, X, Y, beta_star, t0, state, eta_c, decay.c_a_prime,
                                   decay.offset, sw, t1_fixed, lt, err, phase, pos)
    # the final point is recorded after the last step
    if pos < lt.size:
        e = float(np.sum((beta - beta_star) ** 2))
        if state[0] == CONSTANT and ((0 <= t1_fixed <= T) or (0.0 <= sw and e <= sw)):
            state[:] = (DECAYING, T)
        err[pos:] = e
        phase[pos:] = state[0]
    t1_out = int(state[1]) if state[0] == DECAYING else None
    return TrajectoryRecord("regress", {"t": lt, "err_sq": err, "phase": phase},
                            meta={"t1": t1_out, "beta": beta.copy()})


def fit_loglog_slope(traj: TrajectoryRecord, t_lo: int, t_hi: int,
                     column: str = "err_sq", min_points: int = 10) -> float:
    """OLS slope of ``log(column)`` against ``log(t)`` on ``t_lo <= t <= t_hi``."""
    t = traj.t.astype(float)
    y = np.asarray(traj[column], dtype=float)
    keep = (t >= t_lo) & (t <= t_hi)
    if keep.sum() < min_points:
        raise ValueError(f"need at least {min_points} logged points in [{t_lo}, {t_hi}]")
    if np.any(y[keep] <= 0) or np.any(t[keep] <= 0):
        raise ValueError("log-log fit needs positive times and values")
    lx, ly = np.log(t[keep]), np.log(y[keep])
    lx = lx - lx.mean()
    return float(np.dot(lx, ly - ly.mean()) / np.dot(lx, lx))
