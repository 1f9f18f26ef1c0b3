"""Public dense linear-algebra interface used by every other module.

Matrices are plain 2-D float64 numpy arrays (row-major); vectors are 1-D
arrays.  All operations are pure and safe to share across threads.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import kernels


class NumericsError(Exception):
    pass


class SingularMatrix(NumericsError):
    """Pivot fell below the singularity threshold during a solve."""


class NotSymmetric(NumericsError):
    """sym_eig input asymmetry exceeds tolerance."""


class NotHurwitz(NumericsError):
    """An operation required a Hurwitz-stable matrix."""


@dataclass(frozen=True)
class Tolerances:
    """Central numeric tolerances (defaults match the module contracts)."""

    matexp_norm_cap: float = 1e4       # reject matexp when ||M||_1 exceeds this
    solve_pivot_rel: float = 1e-14     # singularity: pivot < rel * max|entry|
    symeig_asym_rel: float = 1e-9      # allowed ||M - M^T|| / ||M||
    symeig_conv_rel: float = 1e-14     # Jacobi off-diagonal convergence
    symeig_max_sweeps: int = 60
    routh_zero_rel: float = 1e-12      # Routh leading-element zero threshold
    hurwitz_bisect_rel: float = 1e-6   # hurwitz_margin relative tolerance


TOL = Tolerances()


class SymEig(NamedTuple):
    eigenvalues: np.ndarray   # ascending
    eigenvectors: np.ndarray  # orthonormal columns


HURWITZ_STABLE = 1
HURWITZ_UNSTABLE = 0
HURWITZ_INDETERMINATE = -1


def _as_square(m, name="matrix"):
    m = np.ascontiguousarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be square, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} has non-finite entries")
    return m


def matexp(m, tol=TOL):
    """e^M by scaling-and-squaring with the degree-13 Pade approximant."""
    m = _as_square(m)
    norm1 = np.abs(m).sum(axis=0).max() if m.size else 0.0
    if norm1 > tol.matexp_norm_cap:
        raise ValueError(
            f"matexp rejected: ||M||_1 = {norm1:.3g} exceeds cap {tol.matexp_norm_cap:.3g}")
    e, ok = kernels.matexp_kernel(m, tol.solve_pivot_rel)
    if not ok:
        raise SingularMatrix("Pade denominator singular in matexp")
    return e


def solve(m, rhs, tol=TOL):
    """Solve M X = rhs with partial pivoting; rhs may be 1-D or 2-D."""
    m = _as_square(m)
    rhs = np.ascontiguousarray(rhs, dtype=np.float64)
    vector = rhs.ndim == 1
    b = rhs[:, None] if vector else rhs
    if b.shape[0] != m.shape[0]:
        raise ValueError(f"rhs rows {b.shape[0]} != matrix dimension {m.shape[0]}")
    x, ok = kernels.solve_kernel(m, b, tol.solve_pivot_rel)
    if not ok:
        raise SingularMatrix("matrix is singular to working precision")
    return x[:, 0] if vector else x


def sym_eig(m, tol=TOL):
    """Eigendecomposition of a symmetric matrix via cyclic Jacobi."""
    m = _as_square(m)
    scale = np.linalg.norm(m)
    asym = np.linalg.norm(m - m.T)
    if asym > tol.symeig_asym_rel * max(scale, 1e-300):
        raise NotSymmetric(
            f"asymmetry {asym:.3g} exceeds {tol.symeig_asym_rel:.1g} * ||M||")
    s = 0.5 * (m + m.T)
    w, v, _ = kernels.jacobi_eig_kernel(s, tol.symeig_conv_rel, tol.symeig_max_sweeps)
    return SymEig(w, v)


def eig_min(m, tol=TOL):
    """Smallest eigenvalue and its eigenvector of a symmetric matrix."""
    res = sym_eig(m, tol)
    return res.eigenvalues[0], res.eigenvectors[:, 0]


def hurwitz_verdict(m, tol=TOL):
    """Three-state Routh-Hurwitz verdict on the characteristic polynomial.

    The polynomial comes from the Faddeev-LeVerrier recurrence on M scaled
    to unit norm (the verdict is invariant under positive scaling), so no
    general eigensolver is involved.
    """
    m = _as_square(m)
    scale = np.abs(m).max()
    if scale == 0.0:
        return HURWITZ_INDETERMINATE
    coeffs = kernels.charpoly_kernel(m / scale)
    if not np.all(np.isfinite(coeffs)):
        return HURWITZ_INDETERMINATE
    return int(kernels.routh_verdict_kernel(coeffs, tol.routh_zero_rel))


def is_hurwitz(m, tol=TOL):
    """True iff every eigenvalue has strictly negative real part.

    Marginal (indeterminate Routh) cases conservatively return False.
    """
    return hurwitz_verdict(m, tol) == HURWITZ_STABLE


def hurwitz_margin(m, tol=TOL):
    """sup{eps > 0 : M + eps*I is Hurwitz}, by bisection on is_hurwitz."""
    m = _as_square(m)
    if not is_hurwitz(m, tol):
        raise NotHurwitz("hurwitz_margin requires a Hurwitz-stable matrix")
    lo = 0.0
    hi = max(1.0, 2.0 * np.abs(m).sum(axis=1).max())
    eye = np.eye(m.shape[0])
    # hi is not Hurwitz: eigenvalues shifted by more than the spectral radius
    while hi - lo > tol.hurwitz_bisect_rel * hi:
        mid = 0.5 * (lo + hi)
        if is_hurwitz(m + mid * eye, tol):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
