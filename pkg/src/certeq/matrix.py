"""Dense real-matrix kernel.

Every matrix in the package is a two-dimensional ``float64`` numpy array.
:func:`as_mat` is the single gate that enforces that, rejecting ragged input
and non-finite entries. Spectral quantities are backed by LAPACK through
numpy/scipy.
"""

import warnings
from dataclasses import dataclass
from typing import Tuple

import numpy as np
import scipy.linalg as sla

from .errors import ConvergenceError, DimensionError, ShapeError, SingularityError

# Below this norm tolerances switch from relative to absolute.
TINY_NORM = 1e-300


def as_mat(m, name="matrix", copy=False) -> np.ndarray:
    """Validate and convert ``m`` to a finite 2-D float64 array.

    Scalars become 1x1 matrices and 1-D sequences become column vectors.
    """
    arr = np.array(m, dtype=float, copy=True) if copy else np.asarray(m, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    elif arr.ndim != 2:
        raise DimensionError(f"{name}: expected a 2-D array, got ndim={arr.ndim}")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise DimensionError(f"{name}: empty matrix of shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DimensionError(f"{name}: entries must be finite")
    return arr


def _require_square(m, name="matrix"):
    m = as_mat(m, name)
    if m.shape[0] != m.shape[1]:
        raise DimensionError(f"{name}: expected a square matrix, got shape {m.shape}")
    return m


def _rel(tol, scale):
    return tol * scale if scale >= TINY_NORM else tol


@dataclass(frozen=True)
class SpectralReport:
    spectral_radius: float
    operator_norm: float
    min_singular_value: float
    eigenvalues: Tuple[complex, ...]


def eigenvalues(m) -> np.ndarray:
    """All eigenvalues of a square matrix, with multiplicity (complex array)."""
    m = _require_square(m)
    try:
        lam = sla.eigvals(m, check_finite=False)
    except np.linalg.LinAlgError as exc:  # LAPACK QR failed to converge
        raise ConvergenceError(f"eigenvalue iteration did not converge: {exc}",
                               iterations=100 * m.shape[0]) from exc
    return np.asarray(lam, dtype=complex)


def spectral_radius(m) -> float:
    return float(np.max(np.abs(eigenvalues(m))))


def singular_values(m) -> np.ndarray:
    m = as_mat(m)
    return np.linalg.svd(m, compute_uv=False)


def operator_norm(m) -> float:
    """Largest singular value (spectral norm)."""
    return float(singular_values(m)[0])


def min_singular_value(m) -> float:
    """Smallest of the min(rows, cols) singular values."""
    return float(singular_values(m)[-1])


def spectral_report(m) -> SpectralReport:
    m = _require_square(m)
    lam = eigenvalues(m)
    sv = singular_values(m)
    return SpectralReport(
        spectral_radius=float(np.max(np.abs(lam))),
        operator_norm=float(sv[0]),
        min_singular_value=float(sv[-1]),
        eigenvalues=tuple(complex(z) for z in lam),
    )


def solve_linear(a, b) -> np.ndarray:
    """Solve ``a @ X = b`` by LU with partial pivoting.

    Raises:
        SingularityError: if a pivot falls below ``1e-14 * ||a||``.
    """
    a = _require_square(a, "a")
    b = as_mat(b, "b")
    if b.shape[0] != a.shape[0]:
        raise DimensionError(f"b has {b.shape[0]} rows, a has {a.shape[0]}")
    with warnings.catch_warnings():
        # exact zero pivots are reported below as SingularityError
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(a, check_finite=False)
    pivot_floor = _rel(1e-14, operator_norm(a))
    smallest = float(np.min(np.abs(np.diag(lu))))
    if smallest <= pivot_floor:
        raise SingularityError(
            f"matrix is singular to working precision (pivot {smallest:.3e})")
    return sla.lu_solve((lu, piv), b, check_finite=False)


def symmetrize(m) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    return 0.5 * (m + m.T)


def is_symmetric(m, tol=1e-10) -> bool:
    m = _require_square(m)
    return float(np.max(np.abs(m - m.T), initial=0.0)) <= _rel(tol, max(1.0, np.max(np.abs(m))))


def is_psd(m, tol=1e-10) -> bool:
    """True iff the symmetric matrix ``m`` has min eigenvalue >= -tol.

    Raises:
        ShapeError: if ``m`` is not symmetric within ``tol``.
    """
    m = _require_square(m)
    if not is_symmetric(m, tol):
        raise ShapeError("is_psd expects a symmetric matrix")
    return float(np.linalg.eigvalsh(symmetrize(m))[0]) >= -tol


def min_eig_sym(m) -> float:
    return float(np.linalg.eigvalsh(symmetrize(as_mat(m)))[0])
