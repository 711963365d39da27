"""Synthetic phantom: two pairs of slices with crossing bands, plus region masks.

The layout follows the published band table verbatim (inclusive index ranges,
used directly as 0-based voxel indices). "Horizontal band (rows a-b)" means
x in [a, b] spanning all y; "vertical band (columns a-b)" means y in [a, b]
spanning all x; wherever a horizontal and a vertical band cross, the voxel
takes the horizontal band's tensor. As printed, the vertical bands of the
second slice pair carry the same tensors as the horizontal ones (principal
axis across the band); ``vertical_bands_x_oriented=True`` swaps the first two
diagonal entries there to restore along-band orientation.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .field import DEFAULT_SPACING, REGION_LABELS, RegionMasks, TensorField
from .validation import DomainError

# (lo, hi, diagonal) per band; ranges are inclusive on both ends.
_PAIR1_HORIZONTAL = (
    (20, 35, (0.25, 16.0, 0.25)),
    (60, 75, (0.5, 4.0, 0.5)),
    (90, 105, (0.7, 2.0, 0.7)),
)
_PAIR1_VERTICAL = (
    (20, 35, (16.0, 0.25, 0.25)),
    (60, 75, (4.0, 0.5, 0.5)),
    (90, 105, (2.0, 0.7, 0.7)),
)
_PAIR2_HORIZONTAL = (
    (40, 50, (0.25, 16.0, 0.25)),
    (80, 90, (0.5, 4.0, 0.5)),
    (110, 120, (0.7, 2.0, 0.7)),
)
# As printed; the x-oriented variant swaps the first two diagonal entries.
_PAIR2_VERTICAL = (
    (40, 50, (0.25, 16.0, 0.25)),
    (80, 90, (0.5, 4.0, 0.5)),
    (110, 120, (0.7, 2.0, 0.7)),
)

DEFAULT_DIMS = (128, 128, 4)


def band_table(slice_pair: int, vertical_bands_x_oriented: bool = False):
    """Horizontal and vertical band lists (lo, hi, diagonal) for a slice pair (1 or 2)."""
    if slice_pair == 1:
        return _PAIR1_HORIZONTAL, _PAIR1_VERTICAL
    if slice_pair == 2:
        vertical = _PAIR2_VERTICAL
        if vertical_bands_x_oriented:
            vertical = tuple((lo, hi, (d[1], d[0], d[2])) for lo, hi, d in vertical)
        return _PAIR2_HORIZONTAL, vertical
    raise DomainError(f"slice_pair must be 1 or 2, got {slice_pair}")


def _slice_pair_of(z: int, nz: int) -> int:
    # First half of the slices uses pair 1, second half pair 2.
    return 1 if z < (nz + 1) // 2 else 2


def _band_masks(dims, slice_pair: int):
    nx, ny, _ = dims
    horizontal, vertical = band_table(slice_pair)
    h_mask = np.zeros((nx, ny), dtype=bool)
    v_mask = np.zeros((nx, ny), dtype=bool)
    for lo, hi, _d in horizontal:
        h_mask[max(lo, 0) : hi + 1, :] = True
    for lo, hi, _d in vertical:
        v_mask[:, max(lo, 0) : hi + 1] = True
    return h_mask, v_mask


def build_phantom(
    dims=DEFAULT_DIMS,
    spacing=DEFAULT_SPACING,
    vertical_bands_x_oriented: bool = False,
) -> TensorField:
    """Noise-free phantom field; background tensors are the identity."""
    nx, ny, nz = dims
    values = np.zeros((nx, ny, nz, 6), dtype=np.float64)
    values[..., :3] = 1.0
    for z in range(nz):
        pair = _slice_pair_of(z, nz)
        horizontal, vertical = band_table(pair, vertical_bands_x_oriented)
        # Vertical bands first so crossings end up with the horizontal tensor.
        for lo, hi, diag in vertical:
            values[:, max(lo, 0) : hi + 1, z, :3] = diag
            values[:, max(lo, 0) : hi + 1, z, 3:] = 0.0
        for lo, hi, diag in horizontal:
            values[max(lo, 0) : hi + 1, :, z, :3] = diag
            values[max(lo, 0) : hi + 1, :, z, 3:] = 0.0
    return TensorField(values=values, spacing=spacing)


def _chebyshev_distance_to(target: np.ndarray, within: np.ndarray, cap: int = 4) -> np.ndarray:
    """In-plane Chebyshev distance from voxels of ``within`` to ``target``, capped.

    Returns an int array equal to cap + 1 where the distance exceeds ``cap``.
    """
    dist = np.full(target.shape, cap + 1, dtype=np.int16)
    structure = np.ones((3, 3), dtype=bool)
    reached = target.copy()
    for k in range(1, cap + 1):
        reached = ndimage.binary_dilation(reached, structure=structure)
        newly = within & reached & (dist == cap + 1)
        dist[newly] = k
    return dist


def region_masks(dims=DEFAULT_DIMS) -> RegionMasks:
    """Partition of the grid into the five analysis regions.

    Distances are in-plane Chebyshev and ignore z. Band voxels one step from
    the background form the interface ring, assigned to bands_crossing along
    with the band-band crossing rectangles; band voxels at distance 2-3 are
    bands_boundary, at distance >= 4 bands_interior. Background voxels at
    distance 1-3 from a band are background_boundary, else
    background_interior.
    """
    nx, ny, nz = dims
    labels = np.zeros((nx, ny, nz), dtype=np.int8)
    idx = {name: REGION_LABELS.index(name) for name in REGION_LABELS}
    plane_cache: dict[int, np.ndarray] = {}
    for z in range(nz):
        pair = _slice_pair_of(z, nz)
        if pair not in plane_cache:
            h_mask, v_mask = _band_masks(dims, pair)
            band = h_mask | v_mask
            crossing_rect = h_mask & v_mask
            background = ~band
            d_bg = _chebyshev_distance_to(background, band)
            d_band = _chebyshev_distance_to(band, background)
            plane = np.full((nx, ny), idx["background_interior"], dtype=np.int8)
            plane[background & (d_band <= 3)] = idx["background_boundary"]
            plane[band & (d_bg >= 4)] = idx["bands_interior"]
            plane[band & (d_bg >= 2) & (d_bg <= 3)] = idx["bands_boundary"]
            plane[band & (d_bg == 1)] = idx["bands_crossing"]
            plane[crossing_rect] = idx["bands_crossing"]
            plane_cache[pair] = plane
        labels[:, :, z] = plane_cache[pair]
    return RegionMasks(labels=labels)
