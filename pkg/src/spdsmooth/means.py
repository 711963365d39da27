"""Weighted means of SPD ensembles under the three geometries."""

from __future__ import annotations

import numpy as np

from .spd import _eigh, _geodesic_unchecked, _symmetrize, mat_exp, mat_log
from .validation import SPD_FLOOR, DomainError, check_spd, check_weights


def _prepare(tensors: np.ndarray, weights, validate: bool):
    tensors = np.asarray(tensors, dtype=np.float64)
    if tensors.ndim != 3 or tensors.shape[-1] != tensors.shape[-2]:
        raise DomainError(f"ensemble must have shape (m, n, n), got {tensors.shape}")
    if weights is None:
        weights = np.ones(tensors.shape[0])
    weights = check_weights(weights, tensors.shape[0])
    if validate:
        check_spd(tensors, name="ensemble")
    return tensors, weights


def mean_euclidean(tensors: np.ndarray, weights=None, validate: bool = True) -> np.ndarray:
    """Weighted arithmetic mean."""
    tensors, w = _prepare(tensors, weights, validate)
    return np.einsum("m,mij->ij", w / w.sum(), tensors)


def mean_log_euclidean(tensors: np.ndarray, weights=None, validate: bool = True) -> np.ndarray:
    """exp of the weighted mean of matrix logs."""
    tensors, w = _prepare(tensors, weights, validate)
    logs = mat_log(tensors)
    return mat_exp(np.einsum("m,mij->ij", w / w.sum(), logs))


def mean_affine_recursive(
    tensors: np.ndarray, weights=None, validate: bool = True, floor: float = SPD_FLOOR
) -> np.ndarray:
    """n-step recursive geodesic approximation of the affine-invariant mean.

    Walks m_{j+1} = geodesic(m_j, z_{j+1}, w_{j+1} / sum_{i<=j+1} w_i) over the
    ensemble in its given order. Zero-weight members are skipped (a zero step
    is the identity update); the walk starts at the first positive-weight
    member. The ensemble order matters; callers that need determinism must
    pre-order it.
    """
    tensors, w = _prepare(tensors, weights, validate)
    pos = np.nonzero(w > 0)[0]
    mean = tensors[pos[0]]
    wsum = w[pos[0]]
    for j in pos[1:]:
        wsum += w[j]
        t = np.asarray(w[j] / wsum)
        mean = _geodesic_unchecked(mean, tensors[j], t, floor)
    return mean


def mean_affine_fixed_point(
    tensors: np.ndarray,
    weights=None,
    tol: float = 1e-10,
    max_iter: int = 200,
    validate: bool = True,
    floor: float = SPD_FLOOR,
) -> np.ndarray:
    """Exact weighted Karcher mean in the affine-invariant geometry.

    Fixed-point iteration M <- M^(1/2) exp(sum_i wbar_i log(M^(-1/2) X_i
    M^(-1/2))) M^(1/2), initialized at the log-Euclidean mean; converges when
    the Frobenius norm of the summed log term falls below ``tol``. Raises
    DomainError if ``max_iter`` is exhausted.
    """
    tensors, w = _prepare(tensors, weights, validate)
    wbar = w / w.sum()
    mean = mean_log_euclidean(tensors, w, validate=False)
    for _ in range(max_iter):
        lam, vec = _eigh(mean)
        if not (lam[0] > floor).all():
            raise DomainError("fixed-point iterate left the SPD cone")
        s = np.sqrt(lam)
        half = (vec * s) @ vec.T
        invhalf = (vec / s) @ vec.T
        inner = _symmetrize(invhalf[None] @ tensors @ invhalf[None])
        logs = mat_log(inner, floor=floor)
        step = np.einsum("m,mij->ij", wbar, logs)
        mean = _symmetrize(half @ mat_exp(step) @ half)
        if np.sqrt((step * step).sum()) < tol:
            return mean
    raise DomainError(f"Karcher fixed point did not converge in {max_iter} iterations")
