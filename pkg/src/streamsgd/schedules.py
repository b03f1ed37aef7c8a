"""Learning-rate, exploration-rate and tail-level sequences.

All schedules are immutable and evaluate either a single step index or a
numpy array of step indices (the run loops precompute whole chunks).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

__all__ = [
    "TheoryConditionWarning",
    "StepsizeSchedule",
    "ExplorationSchedule",
    "TailSequence",
    "MembershipReport",
    "stepsize_at",
    "exploration_rate_at",
    "validate_pi_membership",
    "tail_at",
    "theory_regime",
    "two_phase_oracle_t1",
]

STEPSIZE_KINDS = ("constant", "decaying")
EXPLORATION_KINDS = ("constant", "harmonic", "power", "two-phase-zero", "shifted-power")


class TheoryConditionWarning(UserWarning):
    """A schedule runs outside the sufficient conditions of the convergence theory."""


@dataclass(frozen=True)
class StepsizeSchedule:
    """``eta`` for the constant kind; ``(c_a / lambda_min) / (t - t1 + c_b * dim)``
    for the decaying kind.

    ``dim`` is the ambient dimension for dense SGD and ``s log(2d/s)`` for the
    sparse variant.
    """

    kind: str
    eta: float = 0.0
    c_a: float = 2.0
    c_b: float = 1.0
    lambda_min: float = 1.0
    dim: float = 1.0
    t1: int = 0

    def __post_init__(self):
        if self.kind not in STEPSIZE_KINDS:
            raise ValueError(f"unknown stepsize kind {self.kind!r}")
        if self.kind == "constant" and not self.eta > 0:
            raise ValueError("constant stepsize needs eta > 0")
        if self.kind == "decaying":
            if not (self.lambda_min > 0 and self.c_a > 0 and self.c_b > 0 and self.dim > 0):
                raise ValueError("decaying stepsize needs positive c_a, c_b, lambda_min, dim")
            if self.t1 < 0:
                raise ValueError("t1 must be >= 0")

    @classmethod
    def constant(cls, eta: float) -> "StepsizeSchedule":
        return cls("constant", eta=float(eta))

    @classmethod
    def decaying(cls, c_a, c_b, lambda_min=1.0, dim=1.0, t1=0) -> "StepsizeSchedule":
        return cls("decaying", c_a=float(c_a), c_b=float(c_b), lambda_min=float(lambda_min),
                   dim=float(dim), t1=int(t1))

    def with_t1(self, t1: int) -> "StepsizeSchedule":
        return StepsizeSchedule(self.kind, self.eta, self.c_a, self.c_b, self.lambda_min,
                                self.dim, int(t1))

    @property
    def c_a_prime(self) -> float:
        return self.c_a / self.lambda_min

    @property
    def offset(self) -> float:
        return self.c_b * self.dim

    def at(self, t):
        if self.kind == "constant":
            if np.ndim(t):
                return np.full(np.shape(t), self.eta)
            return self.eta
        if np.any(np.asarray(t) < self.t1):
            raise ValueError(f"decaying stepsize evaluated before t1={self.t1}")
        return self.c_a_prime / (np.asarray(t, dtype=float) - self.t1 + self.offset) \
            if np.ndim(t) else self.c_a_prime / (t - self.t1 + self.offset)

    def check_theory(self, lambda_max: Optional[float], d: Optional[int] = None,
                     mode: str = "warn") -> list[str]:
        """Report violated sufficient conditions; ``mode`` is warn, strict or off."""
        problems = []
        if mode == "off":
            return problems
        if lambda_max is None:
            if self.kind == "decaying" and self.c_a < 2:
                problems.append(f"C_a={self.c_a} < 2")
        elif self.kind == "constant":
            if d is not None and self.eta > self.lambda_min / (d * lambda_max**2):
                problems.append(
                    f"eta={self.eta:g} exceeds lambda_min/(d lambda_max^2)="
                    f"{self.lambda_min / (d * lambda_max**2):g}")
        else:
            if self.c_a < 2:
                problems.append(f"C_a={self.c_a} < 2")
            need = 3.0 * self.c_a**2 * (lambda_max / self.lambda_min) ** 2
            if self.c_b < need:
                problems.append(f"C_b={self.c_b:g} < 3 C_a^2 (lambda_max/lambda_min)^2 = {need:g}")
        if problems:
            msg = "; ".join(problems)
            if mode == "strict":
                raise ValueError(f"stepsize outside theory conditions: {msg}")
            warnings.warn(f"stepsize outside theory conditions: {msg}", TheoryConditionWarning,
                          stacklevel=2)
        return problems


def stepsize_at(s: StepsizeSchedule, t):
    return s.at(t)


@dataclass(frozen=True)
class ExplorationSchedule:
    """Probability of a uniformly random pull at step ``t``.

    kinds:
      constant        pi
      harmonic        c_pi / (t + 2 c_pi)
      power           (c_pi / (t + 2^(1/p) c_pi))^p,  0 < p < 1
      two-phase-zero  rate for t < t1, then 0
      shifted-power   rate for t < t1, then min(1, c (t - t1 + b)^-p)
    """

    kind: str
    pi: float = 0.0
    c_pi: float = 1.0
    p: float = 1.0
    t1: int = 0
    rate: float = 1.0
    c: float = 1.0
    b: float = 1.0

    def __post_init__(self):
        if self.kind not in EXPLORATION_KINDS:
            raise ValueError(f"unknown exploration kind {self.kind!r}")
        if self.kind == "constant" and not 0.0 <= self.pi <= 1.0:
            raise ValueError("constant exploration rate must lie in [0, 1]")
        if self.kind in ("harmonic", "power") and not self.c_pi > 0:
            raise ValueError("c_pi must be positive")
        if self.kind == "power" and not 0.0 < self.p < 1.0:
            raise ValueError("power schedule needs 0 < p < 1")
        if self.kind in ("two-phase-zero", "shifted-power"):
            if not 0.0 <= self.rate <= 1.0:
                raise ValueError("pre-phase rate must lie in [0, 1]")
            if self.t1 < 0:
                raise ValueError("t1 must be >= 0")
        if self.kind == "shifted-power" and not (self.c > 0 and self.b > 0 and self.p > 0):
            raise ValueError("shifted-power needs c, b, p > 0")

    @classmethod
    def constant(cls, pi):
        return cls("constant", pi=float(pi))

    @classmethod
    def harmonic(cls, c_pi):
        return cls("harmonic", c_pi=float(c_pi))

    @classmethod
    def power(cls, c_pi, p):
        return cls("power", c_pi=float(c_pi), p=float(p))

    @classmethod
    def two_phase_zero(cls, t1, rate=0.5):
        return cls("two-phase-zero", t1=int(t1), rate=float(rate))

    @classmethod
    def shifted_power(cls, c, b, p=1.0, t1=0, rate=1.0):
        return cls("shifted-power", c=float(c), b=float(b), p=float(p), t1=int(t1),
                   rate=float(rate))

    @property
    def limit(self) -> float:
        """``lim_{t->inf} pi_t``."""
        return self.pi if self.kind == "constant" else 0.0

    def at(self, t):
        t_arr = np.asarray(t, dtype=float)
        if self.kind == "constant":
            out = np.full(t_arr.shape, self.pi)
        elif self.kind == "harmonic":
            out = self.c_pi / (t_arr + 2.0 * self.c_pi)
        elif self.kind == "power":
            out = (self.c_pi / (t_arr + 2.0 ** (1.0 / self.p) * self.c_pi)) ** self.p
        elif self.kind == "two-phase-zero":
            out = np.where(t_arr < self.t1, self.rate, 0.0)
        else:
            shifted = np.maximum(t_arr - self.t1 + self.b, self.b)
            tail = np.minimum(1.0, self.c * shifted ** (-self.p))
            out = np.where(t_arr < self.t1, self.rate, tail)
        return out if np.ndim(t) else float(out)


def exploration_rate_at(e: ExplorationSchedule, t):
    return e.at(t)


@dataclass(frozen=True)
class MembershipReport:
    ok: bool
    first_violation: Optional[int] = None
    reason: str = ""


def validate_pi_membership(e: ExplorationSchedule, tau: int, pi: float,
                           t_check: Optional[int] = None) -> MembershipReport:
    """Check that ``e`` is non-increasing, [0, 1]-valued, and >= pi on [0, tau].

    The schedule is sampled on the integers ``0..t_check`` (default ``4 tau + 1000``).
    """
    if tau < 0 or not 0.0 < pi <= 1.0:
        raise ValueError("need tau >= 0 and pi in (0, 1]")
    t_check = 4 * tau + 1000 if t_check is None else max(int(t_check), tau)
    ts = np.arange(t_check + 1)
    vals = e.at(ts)
    bad = np.flatnonzero((vals < 0.0) | (vals > 1.0))
    if bad.size:
        return MembershipReport(False, int(bad[0]), "value outside [0, 1]")
    rising = np.flatnonzero(np.diff(vals) > 0.0)
    if rising.size:
        return MembershipReport(False, int(rising[0] + 1), "schedule increases")
    # 1e-12 slack: C_pi/(tau + 2 C_pi) at C_pi = tau is 1/3 only up to rounding
    low = np.flatnonzero(vals[: tau + 1] < pi - 1e-12)
    if low.size:
        return MembershipReport(False, int(low[0]), f"value below {pi:g} before tau={tau}")
    return MembershipReport(True)


@dataclass(frozen=True)
class TailSequence:
    kind: str = "zero"
    c: float = 1.0

    def __post_init__(self):
        if self.kind not in ("zero", "log"):
            raise ValueError(f"unknown tail kind {self.kind!r}")
        if self.kind == "log" and not self.c > 0:
            raise ValueError("log tail needs c > 0")


def tail_at(delta: TailSequence, t, c_b: float):
    """``min(c log(1 + t), t / c_b)`` for the log kind, 0 for the zero kind."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("t must be >= 0")
    if delta.kind == "zero":
        return np.zeros(np.shape(t)) if np.ndim(t) else 0.0
    t_arr = np.asarray(t, dtype=float)
    out = np.minimum(delta.c * np.log1p(t_arr), t_arr / c_b)
    return out if np.ndim(t) else float(out)


def theory_regime(s: StepsizeSchedule, lambda_max: float, n_arms: int = 1,
                  pi_floor: Optional[float] = None) -> dict:
    """Which sets of sufficient conditions a decaying schedule satisfies.

    Keys: ``regression`` (C_a >= 2, C_b >= 3 C_a^2 kappa^2), ``bandit_explore``
    (additionally C_a >= 2K/pi), ``sparse`` (C_a >= 5 with the same C_b bound).
    """
    if s.kind != "decaying":
        return {"regression": False, "bandit_explore": False, "sparse": False}
    cb_ok = s.c_b >= 3.0 * s.c_a**2 * (lambda_max / s.lambda_min) ** 2
    reg = s.c_a >= 2 and cb_ok
    explore = reg and pi_floor is not None and pi_floor > 0 and s.c_a >= 2 * n_arms / pi_floor
    return {"regression": bool(reg), "bandit_explore": bool(explore),
            "sparse": bool(s.c_a >= 5 and cb_ok)}


def two_phase_oracle_t1(d: int, sigma: float, lambda_min: float, h: float, c_a: float,
                        c_b: float, lambda_max: float, c_const: float = 1.0,
                        c_star: Optional[float] = None) -> int:
    """Switch time after which exploration may stop when the margin ``h`` is known.

    ``t1 = 16 C* d sigma^2 / (lambda_min h^2) - C_b d`` (clamped at 0), with
    ``C* = c_const C_a^2 lambda_max/lambda_min + C_b lambda_min/lambda_max``
    unless ``c_star`` is given directly.
    """
    if not h > 0:
        raise ValueError("the arm-optimality margin h must be positive")
    if c_star is None:
        c_star = c_const * c_a**2 * lambda_max / lambda_min + c_b * lambda_min / lambda_max
    raw = 16.0 * c_star * d * sigma**2 / (lambda_min * h**2) - c_b * d
    return max(0, int(math.ceil(raw)))
