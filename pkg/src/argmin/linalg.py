"""Dense symmetric linear algebra used by the cubic subproblem solver.

Everything here is a pure function over immutable inputs (safe to call
concurrently).  Dimensions are desk-scale (n up to ~1000), so dense
LAPACK-backed routines are used throughout.
"""

from dataclasses import dataclass

import numpy as np


class ShiftTooSmallError(ValueError):
    """Raised when H + shift*I is not positive definite."""


def symmetrize(A):
    """Return the symmetric part (A + A.T)/2 as a float64 array."""
    A = np.asarray(A, dtype=float)
    return 0.5 * (A + A.T)


@dataclass(frozen=True)
class EigDecomp:
    """Eigendecomposition H = Q diag(w) Q^T with eigenvalues ascending."""

    eigvals: np.ndarray   # shape (n,), ascending
    eigvecs: np.ndarray   # shape (n, n), orthonormal columns

    @property
    def n(self):
        return self.eigvals.shape[0]

    def reconstruct(self):
        return (self.eigvecs * self.eigvals) @ self.eigvecs.T


def sym_eig(H) -> EigDecomp:
    """Eigendecomposition of a symmetric matrix.

    The input is symmetrized on entry, so slightly asymmetric storage is
    tolerated.  Non-finite entries are rejected.
    """
    H = np.asarray(H, dtype=float)
    if H.ndim != 2 or H.shape[0] != H.shape[1] or H.shape[0] < 1:
        raise ValueError(f"expected a square matrix, got shape {H.shape}")
    if not np.all(np.isfinite(H)):
        raise ValueError("sym_eig: input matrix has non-finite entries")
    w, Q = np.linalg.eigh(symmetrize(H))
    return EigDecomp(eigvals=w, eigvecs=Q)


def solve_shifted(E: EigDecomp, shift, g):
    """Solve (H + shift*I) h = -g through the eigendecomposition of H.

    Requires lambda_min + shift > 0 (strictly positive definite shift).
    """
    g = np.asarray(g, dtype=float)
    d = E.eigvals + shift
    if d[0] <= 0.0:
        raise ShiftTooSmallError(
            f"shift too small: lambda_min + shift = {d[0]:.3e} <= 0"
        )
    gh = E.eigvecs.T @ g
    return E.eigvecs @ (-gh / d)
