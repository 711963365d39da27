"""Error fields, region-wise robust summaries, and swelling diagnostics.

Estimation error is measured voxelwise with the affine-invariant distance
between truth and estimate. Summaries are the median and the median
absolute deviation about the median (MAD, no consistency factor), reported
for each fine region plus the whole set, all band voxels, and all
background voxels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .field import RegionMasks, TensorField
from .regression import project_spd
from .spd import dist_affine
from .validation import DomainError, sym6_to_mat

SUMMARY_REGIONS = (
    "whole_set",
    "bands",
    "background",
    "bands_interior",
    "bands_boundary",
    "bands_crossing",
    "background_interior",
    "background_boundary",
)

SWELLING_MARGIN = 0.01


@dataclass(frozen=True)
class RegionStats:
    """Median error, MAD and voxel count of one region."""

    region: str
    median: float
    mad: float
    count: int


def median_and_mad(values: np.ndarray) -> tuple[float, float]:
    """Median and median absolute deviation about the median."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise DomainError("cannot summarize an empty region")
    med = float(np.median(values))
    return med, float(np.median(np.abs(values - med)))


def error_field(truth: TensorField, estimate: TensorField):
    """Voxelwise affine-invariant distance between two fields.

    Estimates that are not positive definite are projected onto the SPD
    cone first (eigenvalue floor relative to trace); the returned dict
    carries the error array and the count of projected voxels.
    """
    if truth.dims != estimate.dims:
        raise DomainError(
            "field shapes differ: %r vs %r" % (truth.dims, estimate.dims)
        )
    projected, changed = project_spd(estimate.flat())
    errors_flat = dist_affine(sym6_to_mat(truth.flat()), sym6_to_mat(projected))
    nx, ny, nz = truth.dims
    errors = errors_flat.reshape(nz, ny, nx).transpose(2, 1, 0)
    return {"errors": errors, "projected": int(np.count_nonzero(changed))}


def region_summary(errors: np.ndarray, masks: RegionMasks) -> list[RegionStats]:
    """Median/MAD per fine region plus whole-set, bands, background."""
    errors = np.asarray(errors, dtype=float)
    if errors.shape != masks.labels.shape:
        raise DomainError("error field and masks have different shapes")
    out = []
    for region in SUMMARY_REGIONS:
        sel = masks.mask(region)
        if not np.any(sel):
            continue
        med, mad = median_and_mad(errors[sel])
        out.append(RegionStats(region=region, median=med, mad=mad, count=int(sel.sum())))
    return out


def determinant_field(field: TensorField) -> np.ndarray:
    """Per-voxel determinant."""
    return np.linalg.det(field.as_matrices())


def neighborhood_max(values: np.ndarray, radius: int = 1) -> np.ndarray:
    """Max over the Chebyshev ball of the given radius around each voxel."""
    out = values.copy()
    nx, ny, nz = values.shape
    for di in range(-radius, radius + 1):
        for dj in range(-radius, radius + 1):
            for dk in range(-radius, radius + 1):
                if di == dj == dk == 0:
                    continue
                dst = tuple(
                    slice(max(0, -o), n - max(0, o))
                    for o, n in zip((di, dj, dk), (nx, ny, nz))
                )
                src = tuple(
                    slice(max(0, o), n + min(0, o))
                    for o, n in zip((di, dj, dk), (nx, ny, nz))
                )
                np.maximum(out[dst], values[src], out=out[dst])
    return out


def swelling_fraction(
    input_field: TensorField,
    output_field: TensorField,
    masks: RegionMasks,
    margin: float = SWELLING_MARGIN,
) -> dict[str, float]:
    """Fraction of voxels whose determinant outgrew its input neighborhood.

    A voxel swells when ``det(output) > (1 + margin) * max`` of the input
    determinants over the surrounding 3x3x3 block. Weighted means that
    interpolate determinants (the geometric ones) never trip this;
    arithmetic averaging of anisotropic tensors does.
    """
    if input_field.dims != output_field.dims:
        raise DomainError("fields must share dimensions")
    ceiling = neighborhood_max(determinant_field(input_field)) * (1.0 + margin)
    swollen = determinant_field(output_field) > ceiling
    out = {}
    for region in SUMMARY_REGIONS:
        sel = masks.mask(region)
        if not np.any(sel):
            continue
        out[region] = float(np.count_nonzero(swollen & sel) / sel.sum())
    return out
