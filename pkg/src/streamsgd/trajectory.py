"""Time-indexed run logs and the logging grid."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Union

import numpy as np

__all__ = ["TrajectoryRecord", "log_times", "format_float"]


def log_times(T: int, stride: Union[int, str] = "geom", ratio: float = 1.2) -> np.ndarray:
    """Sorted unique step indices in ``[0, T]`` at which errors are recorded.

    An integer ``stride`` gives ``0, stride, 2 stride, ...``; ``"geom"`` gives
    rounded powers of ``ratio``. Both always include 0 and ``T``.
    """
    if T < 0:
        raise ValueError("horizon must be >= 0")
    if isinstance(stride, str):
        if stride != "geom":
            raise ValueError(f"unknown log stride {stride!r}")
        n = int(np.ceil(np.log(max(T, 1)) / np.log(ratio))) + 1 if T > 0 else 0
        pts = np.round(ratio ** np.arange(n + 1)).astype(np.int64)
        pts = pts[pts <= T]
    else:
        if int(stride) < 1:
            raise ValueError("log stride must be a positive integer")
        pts = np.arange(0, T + 1, int(stride), dtype=np.int64)
    return np.unique(np.concatenate([[0, T], pts])).astype(np.int64)


def format_float(x) -> str:
    """Shortest round-trip text for a float; integers stay integers."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


@dataclass
class TrajectoryRecord:
    """Named columns sharing one time axis ``columns["t"]``."""

    experiment: str
    columns: dict
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if "t" not in self.columns:
            raise ValueError("a trajectory needs a 't' column")
        n = len(self.columns["t"])
        for k, v in self.columns.items():
            if len(v) != n:
                raise ValueError(f"column {k!r} has {len(v)} rows, expected {n}")
        t = np.asarray(self.columns["t"])
        if n > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("time column must be strictly increasing")

    @property
    def t(self) -> np.ndarray:
        return np.asarray(self.columns["t"])

    def __getitem__(self, name):
        return np.asarray(self.columns[name])

    def __len__(self):
        return len(self.columns["t"])

    def at(self, t: int) -> dict:
        idx = np.flatnonzero(self.t == t)
        if idx.size == 0:
            raise KeyError(f"step {t} was not logged")
        return {k: np.asarray(v)[idx[0]] for k, v in self.columns.items()}

    def to_csv(self, min_t: int = 0) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        names = list(self.columns)
        w.writerow(names)
        keep = self.t >= min_t
        cols = [np.asarray(self.columns[k])[keep] for k in names]
        for row in zip(*cols):
            w.writerow(["" if (isinstance(v, str) and v == "") else
                        (v if isinstance(v, str) else format_float(v)) for v in row])
        return buf.getvalue()
