"""Containers for voxel grids of tensors, signals and region labels.

Grids have shape (nx, ny, nz) with the canonical linear (flat) ordering
x-fastest: flat index = x + nx * y + nx * ny * z. Tensors are stored as the
six upper-triangle components (dxx, dyy, dzz, dxy, dxz, dyz), which keeps
them symmetric by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .validation import DomainError, check_finite, mat_to_sym6, sym6_to_mat

DEFAULT_SPACING = (0.01875, 0.01875, 0.05)

REGION_LABELS = (
    "background_interior",
    "background_boundary",
    "bands_interior",
    "bands_boundary",
    "bands_crossing",
)


def _check_dims(values: np.ndarray, last: int, what: str) -> np.ndarray:
    values = check_finite(values, what)
    if values.ndim != 4 or values.shape[-1] != last:
        raise DomainError(f"{what} must have shape (nx, ny, nz, {last}), got {values.shape}")
    return values


def _check_spacing(spacing) -> tuple[float, float, float]:
    spacing = tuple(float(s) for s in spacing)
    if len(spacing) != 3 or any(not np.isfinite(s) or s <= 0 for s in spacing):
        raise DomainError(f"spacing must be three positive floats, got {spacing}")
    return spacing


def flatten_grid(values: np.ndarray) -> np.ndarray:
    """(nx, ny, nz, k) -> (nvox, k) in the canonical x-fastest order."""
    return np.ascontiguousarray(values.transpose(2, 1, 0, 3)).reshape(-1, values.shape[-1])


def unflatten_grid(flat: np.ndarray, dims: tuple[int, int, int]) -> np.ndarray:
    """(nvox, k) in canonical order -> (nx, ny, nz, k)."""
    nx, ny, nz = dims
    return flat.reshape(nz, ny, nx, flat.shape[-1]).transpose(2, 1, 0, 3)


def grid_coordinates(dims: tuple[int, int, int]) -> np.ndarray:
    """Integer voxel coordinates (nvox, 3) in the canonical flat order."""
    nx, ny, nz = dims
    z, y, x = np.meshgrid(np.arange(nz), np.arange(ny), np.arange(nx), indexing="ij")
    return np.column_stack([x.ravel(), y.ravel(), z.ravel()])


@dataclass(frozen=True)
class TensorField:
    """A (nx, ny, nz) grid of symmetric tensors with physical voxel spacing."""

    values: np.ndarray
    spacing: tuple[float, float, float] = DEFAULT_SPACING

    def __post_init__(self):
        object.__setattr__(self, "values", _check_dims(self.values, 6, "tensor field"))
        object.__setattr__(self, "spacing", _check_spacing(self.spacing))

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.values.shape[:3]

    @property
    def nvox(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    def as_matrices(self) -> np.ndarray:
        """Dense (nx, ny, nz, 3, 3) view of the tensors."""
        return sym6_to_mat(self.values)

    @classmethod
    def from_matrices(cls, mats: np.ndarray, spacing=DEFAULT_SPACING) -> "TensorField":
        return cls(values=mat_to_sym6(mats), spacing=spacing)

    def flat(self) -> np.ndarray:
        """(nvox, 6) components in the canonical flat order."""
        return flatten_grid(self.values)

    @classmethod
    def from_flat(cls, flat: np.ndarray, dims, spacing=DEFAULT_SPACING) -> "TensorField":
        return cls(values=unflatten_grid(np.asarray(flat, dtype=np.float64), tuple(dims)), spacing=spacing)

    def tensor_at(self, x: int, y: int, z: int) -> np.ndarray:
        """The (3, 3) tensor at voxel (x, y, z)."""
        return sym6_to_mat(self.values[x, y, z])

    def with_values(self, values: np.ndarray) -> "TensorField":
        return replace(self, values=values)


@dataclass(frozen=True)
class RegionMasks:
    """Per-voxel region labels partitioning the grid into the five classes."""

    labels: np.ndarray  # (nx, ny, nz) int8 indices into REGION_LABELS

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 3:
            raise DomainError(f"labels must have shape (nx, ny, nz), got {labels.shape}")
        if labels.min() < 0 or labels.max() >= len(REGION_LABELS):
            raise DomainError("labels out of range")
        object.__setattr__(self, "labels", labels.astype(np.int8))

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.labels.shape

    def mask(self, name: str) -> np.ndarray:
        """Boolean mask for one label, 'bands', 'background' or 'whole_set'."""
        if name == "whole_set":
            return np.ones(self.labels.shape, dtype=bool)
        if name == "bands":
            return self.labels >= REGION_LABELS.index("bands_interior")
        if name == "background":
            return self.labels < REGION_LABELS.index("bands_interior")
        if name not in REGION_LABELS:
            raise DomainError(f"unknown region {name!r}")
        return self.labels == REGION_LABELS.index(name)

    def counts(self) -> dict[str, int]:
        return {name: int(self.mask(name).sum()) for name in REGION_LABELS}


@dataclass(frozen=True)
class DwiVolume:
    """Diffusion-weighted signals on a voxel grid.

    ``signals`` has shape (nx, ny, nz, m) with measurement index
    m = direction_index * repeats + repeat.
    """

    signals: np.ndarray
    directions: np.ndarray  # (ndir, 3) unit vectors
    repeats: int
    s0: float
    spacing: tuple[float, float, float] = DEFAULT_SPACING

    def __post_init__(self):
        ndir = len(self.directions)
        signals = _check_dims(self.signals, ndir * self.repeats, "signals")
        object.__setattr__(self, "signals", signals)
        object.__setattr__(self, "directions", check_finite(self.directions, "directions"))
        object.__setattr__(self, "spacing", _check_spacing(self.spacing))
        if self.repeats < 1:
            raise DomainError("repeats must be >= 1")
        if not self.s0 > 0:
            raise DomainError("s0 must be positive")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.signals.shape[:3]

    @property
    def n_measurements(self) -> int:
        return self.signals.shape[-1]

    def flat(self) -> np.ndarray:
        return flatten_grid(self.signals)

    def design_matrix(self) -> np.ndarray:
        from .noise import GradientScheme

        return GradientScheme(self.directions, self.repeats).design_matrix()
