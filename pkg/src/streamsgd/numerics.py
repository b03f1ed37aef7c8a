"""Seeded random streams and the small amount of dense linear algebra the
estimators need (a cyclic Jacobi eigensolver and PSD inverse square roots)."""

from __future__ import annotations

import zlib
from typing import Union

import numpy as np

__all__ = [
    "Rng",
    "NonSymmetricError",
    "ConvergenceError",
    "SingularCovarianceError",
    "sample_gaussian_vector",
    "sample_rademacher",
    "is_symmetric",
    "sym_eigendecompose",
    "inv_sqrt_psd",
]

Label = Union[int, str]


class NonSymmetricError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    pass


class SingularCovarianceError(ValueError):
    pass


def _label_key(label: Label) -> int:
    if isinstance(label, (int, np.integer)):
        if label < 0:
            raise ValueError(f"integer stream labels must be >= 0, got {label}")
        return int(label)
    # crc32 is stable across processes and Python versions, unlike hash()
    return zlib.crc32(str(label).encode("utf-8")) | (1 << 32)


class Rng:
    """A PCG64 generator addressed by ``(seed, path)``.

    ``spawn`` derives child streams by extending the path, so the stream for
    ``(seed, replication=3, "covariates")`` never depends on how many draws
    were taken from any other stream.
    """

    def __init__(self, seed: int, path: tuple = ()):
        if seed < 0 or seed >= 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        self.seed = int(seed)
        self.path = tuple(path)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.path)
        self.gen = np.random.Generator(np.random.PCG64(ss))

    def spawn(self, *labels: Label) -> "Rng":
        return Rng(self.seed, self.path + tuple(_label_key(x) for x in labels))

    def replication(self, r: int) -> "Rng":
        return self.spawn(int(r))

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, path={self.path})"


def sample_gaussian_vector(rng: Rng, d: int) -> np.ndarray:
    if d < 1:
        raise ValueError("dimension must be >= 1")
    return rng.gen.standard_normal(d)


def sample_rademacher(rng: Rng) -> float:
    return 1.0 if rng.gen.random() < 0.5 else -1.0


def is_symmetric(A: np.ndarray, rtol: float = 1e-12) -> bool:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        return False
    scale = np.max(np.abs(A)) if A.size else 0.0
    return bool(np.max(np.abs(A - A.T), initial=0.0) <= rtol * scale)


_EPS = np.finfo(float).eps / 2


def _off_norm(A: np.ndarray) -> float:
    off = A - np.diag(np.diag(A))
    return float(np.sqrt(np.sum(off * off)))


def sym_eigendecompose(A, tol: float = 1e-14, max_sweeps: int = 100):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns ``(U, lam)`` with ``A ~= U @ diag(lam) @ U.T``, ``U`` orthogonal and
    ``lam`` sorted in descending order. Sweeps stop once the off-diagonal
    Frobenius mass is at most ``tol * ||A||_F``.
    """
    A = np.array(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise NonSymmetricError(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    if not is_symmetric(A):
        raise NonSymmetricError("matrix is not symmetric within 1e-12 relative tolerance")
    A = 0.5 * (A + A.T)
    n = A.shape[0]
    V = np.eye(n)
    scale = float(np.linalg.norm(A))
    if scale == 0.0:
        return V, np.zeros(n)

    for _ in range(max_sweeps):
        if _off_norm(A) <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                # negligible against both diagonal entries: rotating would only add rounding
                if abs(apq) <= _EPS * abs(A[p, p]) and abs(apq) <= _EPS * abs(A[q, q]):
                    A[p, q] = A[q, p] = 0.0
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
                    if theta < 0.0:
                        t = -t
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                col_p = A[:, p].copy()
                col_q = A[:, q]
                A[:, p] = c * col_p - s * col_q
                A[:, q] = s * col_p + c * col_q
                row_p = A[p, :].copy()
                row_q = A[q, :]
                A[p, :] = c * row_p - s * row_q
                A[q, :] = s * row_p + c * row_q
                A[p, q] = A[q, p] = 0.0
                v_p = V[:, p].copy()
                V[:, p] = c * v_p - s * V[:, q]
                V[:, q] = s * v_p + c * V[:, q]
    else:
        if _off_norm(A) > tol * scale:
            raise ConvergenceError(f"Jacobi did not converge in {max_sweeps} sweeps")

    lam = np.diag(A).copy()
    order = np.argsort(-lam, kind="stable")
    return V[:, order], lam[order]


def inv_sqrt_psd(A, floor: float = 1e-10) -> np.ndarray:
    """``U diag(lam^-1/2) U^T`` for a symmetric matrix with eigenvalues >= floor."""
    U, lam = sym_eigendecompose(A)
    if lam[-1] < floor:
        raise SingularCovarianceError(
            f"smallest eigenvalue {lam[-1]:.3e} is below the floor {floor:.1e}"
        )
    return (U / np.sqrt(lam)) @ U.T
