"""Kernel smoothing of SPD tensor fields under three geometries.

A voxel's smoothed value is the weighted Karcher mean of its neighborhood
under the configured metric. Weights come from the Gaussian kernel
``K(t) = exp(-t^2/2)`` evaluated at physical distances (isotropic scheme)
or at a tensor-deformed distance (anisotropic scheme, applied as a second
stage on top of an isotropic pass). Raw kernel values below the truncation
threshold are dropped before normalization; the survivors define the
neighborhood.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .field import TensorField
from .parallel import chunked_map
from .spd import METRICS, _geodesic_unchecked, mat_exp, mat_log
from .validation import DomainError, mat_to_sym6, sym6_to_mat

KERNEL_TRUNCATION = 1e-6
ANISO_CONDITION_LIMIT = 1e10
SCHEMES = ("isotropic", "anisotropic")


def gaussian_kernel(t: np.ndarray) -> np.ndarray:
    """K(t) = exp(-t^2 / 2), the kernel used throughout."""
    t = np.asarray(t, dtype=float)
    return np.exp(-0.5 * t * t)


def support_radius(h: float, threshold: float = KERNEL_TRUNCATION) -> float:
    """Physical distance beyond which the raw isotropic weight falls below threshold."""
    return h * np.sqrt(-2.0 * np.log(threshold))


@dataclass(frozen=True)
class SmoothingConfig:
    """Metric, weight scheme and bandwidths for :func:`smooth_field`.

    ``h`` is the isotropic bandwidth; the anisotropic scheme runs an
    isotropic first stage at ``h_iso`` and a second stage at ``h_aniso``
    with weights shaped by the stage-1 tensors.
    """

    metric: str = "log_euclidean"
    scheme: str = "isotropic"
    h: float = 0.01
    h_iso: float = 0.01
    h_aniso: float = 0.01
    truncation: float = KERNEL_TRUNCATION
    threads: int = 1
    chunk_size: int = 4096

    def __post_init__(self):
        if self.metric not in METRICS:
            raise DomainError("metric must be one of %r, got %r" % (METRICS, self.metric))
        if self.scheme not in SCHEMES:
            raise DomainError("scheme must be one of %r, got %r" % (SCHEMES, self.scheme))
        for name in ("h", "h_iso", "h_aniso"):
            if getattr(self, name) <= 0.0:
                raise DomainError("%s must be positive" % name)
        if not 0.0 < self.truncation < 1.0:
            raise DomainError("truncation threshold must lie in (0, 1)")

    def bandwidths(self) -> tuple[float, ...]:
        if self.scheme == "isotropic":
            return (self.h,)
        return (self.h_iso, self.h_aniso)


@dataclass(frozen=True)
class SmoothingReport:
    """Diagnostics from one smoothing run."""

    metric: str
    scheme: str
    bandwidths: tuple[float, ...]
    neighborhood_size: int
    aniso_fallbacks: int = 0


@dataclass(frozen=True)
class WeightProfile:
    """Summary statistics of one voxel's normalized weight distribution."""

    size: int
    n99: int
    wmin: float
    median: float
    wmax: float
    entropy: float


def kernel_offsets(h: float, spacing, threshold: float = KERNEL_TRUNCATION):
    """Integer voxel offsets whose raw isotropic weight survives truncation.

    Returns ``(offsets, distances)`` sorted by ascending physical distance
    (ties by z, then y, then x offset). The center offset is first.
    """
    if h <= 0.0:
        raise DomainError("h must be positive")
    spacing = np.asarray(spacing, dtype=float)
    radius = support_radius(h, threshold)
    counts = np.floor(radius / spacing).astype(int)
    axes = [np.arange(-c, c + 1) for c in counts]
    di, dj, dk = np.meshgrid(*axes, indexing="ij")
    offsets = np.stack([di.ravel(), dj.ravel(), dk.ravel()], axis=1)
    dist = np.sqrt(((offsets * spacing) ** 2).sum(axis=1))
    keep = gaussian_kernel(dist / h) >= threshold
    offsets, dist = offsets[keep], dist[keep]
    order = np.lexsort((offsets[:, 0], offsets[:, 1], offsets[:, 2], dist))
    return offsets[order], dist[order]


def _order_for_dims(offsets: np.ndarray, dist: np.ndarray, dims) -> np.ndarray:
    # Ascending distance, ties by the neighbor's flat voxel index, which
    # within one neighborhood is ordered by di + nx*dj + nx*ny*dk.
    nx, ny = dims[0], dims[1]
    delta = offsets[:, 0] + nx * offsets[:, 1] + nx * ny * offsets[:, 2]
    return np.lexsort((delta, dist))


def iso_weights(center, dims, spacing, h: float, threshold: float = KERNEL_TRUNCATION):
    """Normalized isotropic weights around one voxel, clipped to the grid.

    Returns ``(indices, weights)`` with ``indices`` of shape (k, 3).
    """
    offsets, dist = kernel_offsets(h, spacing, threshold)
    center = np.asarray(center, dtype=int)
    idx = center[None, :] + offsets
    inside = np.all((idx >= 0) & (idx < np.asarray(dims)[None, :]), axis=1)
    idx, dist = idx[inside], dist[inside]
    raw = gaussian_kernel(dist / h)
    return idx, raw / raw.sum()


def aniso_weights(
    center,
    d_hat: np.ndarray,
    dims,
    spacing,
    h: float,
    threshold: float = KERNEL_TRUNCATION,
):
    """Normalized tensor-deformed weights around one voxel.

    The squared distance is ``tr(D_hat) * delta^T D_hat^{-1} delta`` for
    physical displacement ``delta``, so the neighborhood stretches along
    the tensor's dominant axis and the weights are invariant to scaling
    of ``D_hat``. Near-singular tensors (condition number beyond 1e10)
    fall back to the isotropic weights; the flag in the returned triple
    ``(indices, weights, fell_back)`` records this.
    """
    d_hat = np.asarray(d_hat, dtype=float)
    lam = np.linalg.eigvalsh(d_hat)
    if lam[0] <= 0.0 or lam[-1] > ANISO_CONDITION_LIMIT * lam[0]:
        idx, w = iso_weights(center, dims, spacing, h, threshold)
        return idx, w, True
    offsets, _ = kernel_offsets(h, spacing, threshold)
    center = np.asarray(center, dtype=int)
    idx = center[None, :] + offsets
    inside = np.all((idx >= 0) & (idx < np.asarray(dims)[None, :]), axis=1)
    idx, offsets = idx[inside], offsets[inside]
    delta = offsets * np.asarray(spacing, dtype=float)
    quad_form = np.trace(d_hat) * np.einsum(
        "ni,ij,nj->n", delta, np.linalg.inv(d_hat), delta
    )
    raw = gaussian_kernel(np.sqrt(quad_form) / h)
    keep = raw >= threshold
    idx, raw = idx[keep], raw[keep]
    return idx, raw / raw.sum(), False


def weight_profile(weights: np.ndarray) -> WeightProfile:
    """Distribution summary of one voxel's normalized weights."""
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0 or np.any(w <= 0.0):
        raise DomainError("weights must be a nonempty 1-D array of positive reals")
    if abs(w.sum() - 1.0) > 1e-8:
        raise DomainError("weights must be normalized to sum 1")
    desc = np.sort(w)[::-1]
    n99 = int(np.searchsorted(np.cumsum(desc), 0.99) + 1)
    return WeightProfile(
        size=int(w.size),
        n99=min(n99, int(w.size)),
        wmin=float(w.min()),
        median=float(np.median(w)),
        wmax=float(w.max()),
        entropy=float(-(w * np.log(w)).sum()),
    )


def interior_profile(h: float, spacing, threshold: float = KERNEL_TRUNCATION) -> WeightProfile:
    """Weight profile at a voxel far enough from every edge that nothing clips."""
    offsets, _ = kernel_offsets(h, spacing, threshold)
    reach = np.abs(offsets).max(axis=0)
    dims = 2 * reach + 1
    _, weights = iso_weights(reach, dims, spacing, h, threshold)
    return weight_profile(weights)


def _check_spd_field(mats: np.ndarray, what: str) -> None:
    eigvals = np.linalg.eigvalsh(mats)
    bad = eigvals[..., 0] <= 0.0
    if np.any(bad):
        x, y, z = np.argwhere(bad)[0]
        raise DomainError(
            "%s requires SPD tensors; voxel (x=%d, y=%d, z=%d) is not positive definite"
            % (what, x, y, z)
        )


def _guide_quadratic_forms(guide_mats: np.ndarray):
    """Per-voxel matrices tr(D)D^{-1} from the guide field, with iso fallback.

    Returns the (nx, ny, nz, 3, 3) array of quadratic forms (identity on
    fallback voxels, reproducing isotropic weights there) and the number
    of fallbacks.
    """
    lam, vec = np.linalg.eigh(guide_mats)
    fallback = (lam[..., 0] <= 0.0) | (lam[..., -1] > ANISO_CONDITION_LIMIT * lam[..., 0])
    trace = lam.sum(axis=-1)
    inv = np.einsum("...ij,...j,...kj->...ik", vec, 1.0 / lam, vec)
    q = trace[..., None, None] * inv
    q[fallback] = np.eye(3)
    return q, int(np.count_nonzero(fallback))


def _offset_weight_grid(q_forms, offset, spacing, h, threshold):
    # Raw anisotropic weight of neighbor at `offset` as seen from every voxel.
    delta = np.asarray(offset, dtype=float) * np.asarray(spacing, dtype=float)
    quad_form = np.einsum("...ij,i,j->...", q_forms, delta, delta)
    raw = np.exp(-0.5 * quad_form / h**2)
    raw[raw < threshold] = 0.0
    return raw


def _smooth_chart(values, dims, offsets, dist, h, spacing, threshold, q_forms):
    """Weighted-sum smoothing in a flat chart (Euclidean or log coordinates)."""
    nx, ny, nz = dims
    acc = np.zeros_like(values)
    wacc = np.zeros(dims)
    for offset, d in zip(offsets, dist):
        if any(abs(o) >= n for o, n in zip(offset, (nx, ny, nz))):
            continue
        if q_forms is None:
            w = gaussian_kernel(d / h)
        else:
            w = _offset_weight_grid(q_forms, offset, spacing, h, threshold)
        sl_dst = tuple(
            slice(max(0, -o), n - max(0, o)) for o, n in zip(offset, (nx, ny, nz))
        )
        sl_src = tuple(
            slice(max(0, o), n + min(0, o)) for o, n in zip(offset, (nx, ny, nz))
        )
        wpart = w if q_forms is None else w[sl_dst]
        acc[sl_dst] += (wpart[..., None] if q_forms is not None else w) * values[sl_src]
        wacc[sl_dst] += wpart
    return acc / wacc[..., None]


def _smooth_affine(mats, dims, offsets, dist, h, spacing, threshold, q_forms, threads, chunk_size):
    """Recursive geodesic-walk mean per voxel, neighbors in ascending distance."""
    nx, ny, nz = dims
    nvox = nx * ny * nz
    dims_arr = np.asarray(dims)
    deltas = offsets * np.asarray(spacing, dtype=float)
    iso_w = gaussian_kernel(dist / h)

    def run(lo, hi):
        flat = np.arange(lo, hi)
        ix = flat % nx
        iy = (flat // nx) % ny
        iz = flat // (nx * ny)
        mean = mats[ix, iy, iz].copy()
        if q_forms is None:
            raw = None
            wsum = np.full(hi - lo, iso_w[0])
        else:
            qc = q_forms[ix, iy, iz]
            quad_form = np.einsum("cij,ki,kj->ck", qc, deltas, deltas)
            raw = np.exp(-0.5 * quad_form / h**2)
            raw[raw < threshold] = 0.0
            wsum = raw[:, 0].copy()
        for k in range(1, len(offsets)):
            jx = ix + offsets[k, 0]
            jy = iy + offsets[k, 1]
            jz = iz + offsets[k, 2]
            valid = (
                (jx >= 0) & (jx < dims_arr[0])
                & (jy >= 0) & (jy < dims_arr[1])
                & (jz >= 0) & (jz < dims_arr[2])
            )
            if q_forms is None:
                w = np.where(valid, iso_w[k], 0.0)
            else:
                w = np.where(valid, raw[:, k], 0.0)
            upd = w > 0.0
            if not np.any(upd):
                continue
            y = mats[jx[upd], jy[upd], jz[upd]]
            t = w[upd] / (wsum[upd] + w[upd])
            mean[upd] = _geodesic_unchecked(mean[upd], y, t, floor=0.0)
            wsum[upd] += w[upd]
        return (mean,)

    parts = chunked_map(run, nvox, threads=threads, chunk_size=chunk_size)
    flat_means = np.concatenate([p[0] for p in parts], axis=0)
    # flat index is x + nx*y + nx*ny*z, so reshape as (z, y, x) and transpose
    return flat_means.reshape(nz, ny, nx, 3, 3).transpose(2, 1, 0, 3, 4)


def _smooth_once(field: TensorField, h, metric, threshold, guide, threads, chunk_size):
    mats = field.as_matrices()
    if metric in ("log_euclidean", "affine"):
        _check_spd_field(mats, "%s smoothing" % metric)
    q_forms = None
    fallbacks = 0
    if guide is not None:
        guide_mats = guide.as_matrices()
        _check_spd_field(guide_mats, "anisotropic weighting")
        q_forms, fallbacks = _guide_quadratic_forms(guide_mats)
    offsets, dist = kernel_offsets(h, field.spacing, threshold)
    order = _order_for_dims(offsets, dist, field.dims)
    offsets, dist = offsets[order], dist[order]
    if metric == "affine":
        out_mats = _smooth_affine(
            mats, field.dims, offsets, dist, h, field.spacing, threshold,
            q_forms, threads, chunk_size,
        )
        out_values = mat_to_sym6(out_mats)
    elif metric == "log_euclidean":
        chart = mat_to_sym6(mat_log(mats))
        sm = _smooth_chart(
            chart, field.dims, offsets, dist, h, field.spacing, threshold, q_forms
        )
        out_values = mat_to_sym6(mat_exp(sym6_to_mat(sm)))
    else:
        sm = _smooth_chart(
            field.values, field.dims, offsets, dist, h, field.spacing, threshold, q_forms
        )
        out_values = sm
    return field.with_values(out_values), fallbacks, len(offsets)


def smooth_field(field: TensorField, config: SmoothingConfig):
    """Smooth a tensor field; returns ``(smoothed, report)``.

    Isotropic scheme: one pass at bandwidth ``config.h``. Anisotropic
    scheme: an isotropic pass at ``h_iso``, then a second pass over the
    stage-1 field with weights shaped by the stage-1 tensors at
    bandwidth ``h_aniso``. Both passes use the same metric. Output is
    bit-identical for any ``threads``/``chunk_size`` combination.
    """
    if config.scheme == "isotropic":
        out, fallbacks, size = _smooth_once(
            field, config.h, config.metric, config.truncation,
            None, config.threads, config.chunk_size,
        )
    else:
        stage1, _, _ = _smooth_once(
            field, config.h_iso, config.metric, config.truncation,
            None, config.threads, config.chunk_size,
        )
        out, fallbacks, size = _smooth_once(
            stage1, config.h_aniso, config.metric, config.truncation,
            stage1, config.threads, config.chunk_size,
        )
    report = SmoothingReport(
        metric=config.metric,
        scheme=config.scheme,
        bandwidths=config.bandwidths(),
        neighborhood_size=size,
        aniso_fallbacks=fallbacks,
    )
    return out, report
