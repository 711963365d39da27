"""Input validation helpers shared across the package."""

from __future__ import annotations

import numpy as np

SPD_FLOOR = 1e-12

SYM6_COMPONENTS = ("dxx", "dyy", "dzz", "dxy", "dxz", "dyz")

# Duplication weights of the six upper-triangle components in a full matrix.
SYM6_WEIGHTS = np.array([1.0, 1.0, 1.0, 2.0, 2.0, 2.0])


class DomainError(ValueError):
    """Raised when an input leaves the mathematical domain of an operation."""


def check_finite(arr: np.ndarray, name: str = "array") -> np.ndarray:
    """Return ``arr`` as float64, raising DomainError on NaN or Inf."""
    arr = np.asarray(arr, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains NaN or Inf entries")
    return arr


def check_symmetric(mat: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Validate a stack of symmetric matrices with shape (..., n, n)."""
    mat = check_finite(mat, name)
    if mat.ndim < 2 or mat.shape[-1] != mat.shape[-2]:
        raise DomainError(f"{name} must have shape (..., n, n), got {mat.shape}")
    asym = np.abs(mat - np.swapaxes(mat, -1, -2)).max()
    scale = max(np.abs(mat).max(), 1.0)
    if asym > 1e-12 * scale:
        raise DomainError(f"{name} is not symmetric (max asymmetry {asym:g})")
    return 0.5 * (mat + np.swapaxes(mat, -1, -2))


def check_spd(mat: np.ndarray, floor: float = SPD_FLOOR, name: str = "matrix") -> np.ndarray:
    """Validate a stack of SPD matrices; eigenvalues must exceed ``floor``.

    Rejects with DomainError rather than clamping.
    """
    mat = check_symmetric(mat, name)
    lam = np.linalg.eigvalsh(mat)
    lam_min = lam[..., 0].min()
    if not lam_min > floor:
        raise DomainError(
            f"{name} is not SPD above floor {floor:g} (min eigenvalue {lam_min:g})"
        )
    return mat


def is_spd(mat: np.ndarray, floor: float = SPD_FLOOR) -> np.ndarray:
    """Elementwise SPD test for a stack (..., n, n); returns a boolean array."""
    mat = np.asarray(mat, dtype=np.float64)
    sym_ok = np.abs(mat - np.swapaxes(mat, -1, -2)).max(axis=(-1, -2)) <= 1e-12 * np.maximum(
        np.abs(mat).max(axis=(-1, -2)), 1.0
    )
    lam_min = np.linalg.eigvalsh(np.where(np.isfinite(mat), mat, 0.0))[..., 0]
    return sym_ok & (lam_min > floor) & np.isfinite(mat).all(axis=(-1, -2))


def sym6_to_mat(vec: np.ndarray) -> np.ndarray:
    """Expand (..., 6) upper-triangle components (xx,yy,zz,xy,xz,yz) to (..., 3, 3)."""
    vec = np.asarray(vec, dtype=np.float64)
    if vec.shape[-1] != 6:
        raise DomainError(f"sym6 vector must have last dimension 6, got {vec.shape}")
    out = np.empty(vec.shape[:-1] + (3, 3), dtype=np.float64)
    out[..., 0, 0] = vec[..., 0]
    out[..., 1, 1] = vec[..., 1]
    out[..., 2, 2] = vec[..., 2]
    out[..., 0, 1] = out[..., 1, 0] = vec[..., 3]
    out[..., 0, 2] = out[..., 2, 0] = vec[..., 4]
    out[..., 1, 2] = out[..., 2, 1] = vec[..., 5]
    return out


def mat_to_sym6(mat: np.ndarray) -> np.ndarray:
    """Collapse symmetric (..., 3, 3) matrices to (..., 6) upper-triangle components."""
    mat = np.asarray(mat, dtype=np.float64)
    if mat.shape[-2:] != (3, 3):
        raise DomainError(f"matrix stack must have shape (..., 3, 3), got {mat.shape}")
    out = np.empty(mat.shape[:-2] + (6,), dtype=np.float64)
    out[..., 0] = mat[..., 0, 0]
    out[..., 1] = mat[..., 1, 1]
    out[..., 2] = mat[..., 2, 2]
    out[..., 3] = 0.5 * (mat[..., 0, 1] + mat[..., 1, 0])
    out[..., 4] = 0.5 * (mat[..., 0, 2] + mat[..., 2, 0])
    out[..., 5] = 0.5 * (mat[..., 1, 2] + mat[..., 2, 1])
    return out


def check_weights(weights: np.ndarray, n: int | None = None) -> np.ndarray:
    """Validate nonnegative weights with a strictly positive sum."""
    w = check_finite(weights, "weights")
    if w.ndim != 1:
        raise DomainError(f"weights must be 1-D, got shape {w.shape}")
    if n is not None and w.shape[0] != n:
        raise DomainError(f"expected {n} weights, got {w.shape[0]}")
    if np.any(w < 0):
        raise DomainError("weights must be nonnegative")
    if not w.sum() > 0:
        raise DomainError("weights must have a positive sum")
    return w
