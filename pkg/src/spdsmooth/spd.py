"""Geometry primitives on symmetric positive definite matrices.

All functions accept stacks with shape (..., 3, 3) (any square size works) and
broadcast over the leading axes. Three geometries are supported throughout the
package: Euclidean, log-Euclidean and affine-invariant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .validation import SPD_FLOOR, DomainError, check_finite, check_spd, check_symmetric

METRICS = ("euclidean", "log_euclidean", "affine")


@dataclass(frozen=True)
class EigDecomp:
    """Eigendecomposition with descending eigenvalues and a fixed sign convention.

    ``values`` has shape (..., n), ``vectors`` (..., n, n) with eigenvectors in
    columns; the first component of each eigenvector whose magnitude exceeds
    tolerance is made positive so the decomposition is deterministic.
    """

    values: np.ndarray
    vectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        v = self.vectors
        return np.einsum("...ij,...j,...kj->...ik", v, self.values, v)


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    # First component with |v_i| > tol * max|v| of each column is made positive.
    absv = np.abs(vectors)
    tol = 1e-12 * absv.max(axis=-2, keepdims=True)
    significant = absv > tol
    n = vectors.shape[-2]
    idx = np.argmax(significant, axis=-2)
    lead = np.take_along_axis(vectors, idx[..., None, :], axis=-2)[..., 0, :]
    sign = np.where(lead < 0, -1.0, 1.0)
    return vectors * sign[..., None, :]


def sym_eig(mat: np.ndarray) -> EigDecomp:
    """Eigendecomposition of symmetric matrices, descending, deterministic signs."""
    mat = check_symmetric(mat, "sym_eig input")
    lam, vec = np.linalg.eigh(mat)
    # Stable descending order keeps eigh's basis for repeated eigenvalues
    # (the identity maps to the identity, not a column permutation).
    order = np.argsort(-lam, axis=-1, kind="stable")
    lam = np.take_along_axis(lam, order, axis=-1)
    vec = np.take_along_axis(vec, order[..., None, :], axis=-1)
    return EigDecomp(values=np.ascontiguousarray(lam), vectors=_fix_signs(vec))


def _eigh(mat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Raw ascending eigh without validation; internal hot path.
    return np.linalg.eigh(mat)


def _apply_spectral(mat: np.ndarray, fn, floor: float | None = None) -> np.ndarray:
    lam, vec = _eigh(mat)
    if floor is not None and not (lam[..., 0] > floor).all():
        raise DomainError(
            f"matrix is not SPD above floor {floor:g} "
            f"(min eigenvalue {lam[..., 0].min():g})"
        )
    return np.einsum("...ij,...j,...kj->...ik", vec, fn(lam), vec)


def mat_exp(sym: np.ndarray) -> np.ndarray:
    """Matrix exponential of symmetric matrices."""
    sym = check_symmetric(sym, "mat_exp input")
    return _apply_spectral(sym, np.exp)


def mat_log(spd: np.ndarray, floor: float = SPD_FLOOR) -> np.ndarray:
    """Matrix logarithm; input must be SPD above ``floor``."""
    spd = check_symmetric(spd, "mat_log input")
    return _apply_spectral(spd, np.log, floor=floor)


def mat_sqrt(spd: np.ndarray, floor: float = SPD_FLOOR) -> np.ndarray:
    """Principal matrix square root of SPD matrices."""
    spd = check_symmetric(spd, "mat_sqrt input")
    return _apply_spectral(spd, np.sqrt, floor=floor)


def _sqrt_invsqrt(spd: np.ndarray, floor: float = SPD_FLOOR):
    # One eigh pass giving both X^(1/2) and X^(-1/2); no symmetry validation.
    lam, vec = _eigh(spd)
    if not (lam[..., 0] > floor).all():
        raise DomainError(
            f"matrix is not SPD above floor {floor:g} "
            f"(min eigenvalue {lam[..., 0].min():g})"
        )
    s = np.sqrt(lam)
    half = np.einsum("...ij,...j,...kj->...ik", vec, s, vec)
    invhalf = np.einsum("...ij,...j,...kj->...ik", vec, 1.0 / s, vec)
    return half, invhalf


def _symmetrize(mat: np.ndarray) -> np.ndarray:
    return 0.5 * (mat + np.swapaxes(mat, -1, -2))


def dist_euclidean(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Euclidean distance {tr (X - Y)^2}^(1/2), the Frobenius norm of X - Y."""
    x = check_finite(x, "x")
    y = check_finite(y, "y")
    d = x - y
    return np.sqrt(np.einsum("...ij,...ij->...", d, d))


def dist_log_euclidean(x: np.ndarray, y: np.ndarray, floor: float = SPD_FLOOR) -> np.ndarray:
    """Log-Euclidean distance ||log X - log Y||_F."""
    return dist_euclidean(mat_log(x, floor), mat_log(y, floor))


def dist_affine(x: np.ndarray, y: np.ndarray, floor: float = SPD_FLOOR) -> np.ndarray:
    """Affine-invariant distance [tr {log(X^(-1/2) Y X^(-1/2))}^2]^(1/2)."""
    x = check_symmetric(x, "x")
    y = check_symmetric(y, "y")
    _, invhalf = _sqrt_invsqrt(x, floor)
    inner = _symmetrize(invhalf @ y @ invhalf)
    lam = np.linalg.eigvalsh(inner)
    if not (lam[..., 0] > floor).all():
        raise DomainError("second argument is not SPD above floor")
    return np.sqrt((np.log(lam) ** 2).sum(axis=-1))


def affine_log_map(x: np.ndarray, y: np.ndarray, floor: float = SPD_FLOOR) -> np.ndarray:
    """Log map at X of the affine-invariant geometry: a symmetric tangent matrix."""
    x = check_symmetric(x, "x")
    y = check_symmetric(y, "y")
    half, invhalf = _sqrt_invsqrt(x, floor)
    inner = _symmetrize(invhalf @ y @ invhalf)
    return _symmetrize(half @ _apply_spectral(inner, np.log, floor=floor) @ half)


def affine_exp_map(x: np.ndarray, s: np.ndarray, floor: float = SPD_FLOOR) -> np.ndarray:
    """Exp map at X of the affine-invariant geometry; S is a symmetric tangent."""
    x = check_symmetric(x, "x")
    s = check_symmetric(s, "tangent")
    half, invhalf = _sqrt_invsqrt(x, floor)
    inner = _symmetrize(invhalf @ s @ invhalf)
    return _symmetrize(half @ _apply_spectral(inner, np.exp) @ half)


def geodesic(x: np.ndarray, y: np.ndarray, t, floor: float = SPD_FLOOR) -> np.ndarray:
    """Affine-invariant geodesic from X (t=0) to Y (t=1).

    Computed as X^(1/2) (X^(-1/2) Y X^(-1/2))^t X^(1/2), which equals
    exp_X(t log_X Y); ``t`` may broadcast over the stack axes.
    """
    x = check_symmetric(x, "x")
    y = check_symmetric(y, "y")
    t = np.asarray(t, dtype=np.float64)
    return _geodesic_unchecked(x, y, t, floor)


def _geodesic_unchecked(x: np.ndarray, y: np.ndarray, t: np.ndarray, floor: float) -> np.ndarray:
    half, invhalf = _sqrt_invsqrt(x, floor)
    inner = _symmetrize(invhalf @ y @ invhalf)
    lam, vec = _eigh(inner)
    if not (lam[..., 0] > floor).all():
        raise DomainError("geodesic endpoint is not SPD above floor")
    powered = np.exp(np.log(lam) * t[..., None])
    mid = np.einsum("...ij,...j,...kj->...ik", vec, powered, vec)
    return _symmetrize(half @ mid @ half)
