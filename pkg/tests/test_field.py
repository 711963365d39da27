"""Tests for the grid containers and the canonical flat ordering."""

import numpy as np
import pytest

from spdsmooth.field import (
    DEFAULT_SPACING,
    REGION_LABELS,
    DwiVolume,
    RegionMasks,
    TensorField,
    flatten_grid,
    grid_coordinates,
    unflatten_grid,
)
from spdsmooth.noise import default_scheme
from spdsmooth.validation import DomainError

from conftest import random_spd


def linear_index_grid(nx, ny, nz):
    vals = np.zeros((nx, ny, nz, 1))
    for z in range(nz):
        for y in range(ny):
            for x in range(nx):
                vals[x, y, z, 0] = x + nx * y + nx * ny * z
    return vals


class TestFlatOrdering:
    def test_x_fastest(self):
        vals = linear_index_grid(3, 4, 2)
        flat = flatten_grid(vals)
        np.testing.assert_array_equal(flat[:, 0], np.arange(24))

    def test_round_trip(self, rng):
        vals = rng.standard_normal((5, 3, 2, 6))
        np.testing.assert_array_equal(unflatten_grid(flatten_grid(vals), (5, 3, 2)), vals)

    def test_grid_coordinates_match_flat_index(self):
        nx, ny, nz = 3, 4, 2
        coords = grid_coordinates((nx, ny, nz))
        lin = coords[:, 0] + nx * coords[:, 1] + nx * ny * coords[:, 2]
        np.testing.assert_array_equal(lin, np.arange(nx * ny * nz))


class TestTensorField:
    def test_default_spacing(self):
        field = TensorField(values=np.ones((2, 2, 1, 6)))
        assert field.spacing == (0.01875, 0.01875, 0.05)
        assert DEFAULT_SPACING == (0.01875, 0.01875, 0.05)

    def test_dims_and_nvox(self):
        field = TensorField(values=np.ones((4, 3, 2, 6)))
        assert field.dims == (4, 3, 2)
        assert field.nvox == 24

    def test_matrix_round_trip(self, rng):
        mats = random_spd(rng, n=12).reshape(3, 2, 2, 3, 3)
        field = TensorField.from_matrices(mats)
        np.testing.assert_allclose(field.as_matrices(), mats, atol=1e-15)

    def test_tensor_at(self):
        vals = np.zeros((2, 2, 1, 6))
        vals[..., :3] = 1.0
        vals[1, 0, 0] = [1.0, 2.0, 3.0, 0.5, 0.25, 0.125]
        field = TensorField(values=vals)
        expected = np.array([[1.0, 0.5, 0.25], [0.5, 2.0, 0.125], [0.25, 0.125, 3.0]])
        np.testing.assert_array_equal(field.tensor_at(1, 0, 0), expected)

    def test_flat_round_trip(self, rng):
        vals = rng.standard_normal((4, 3, 2, 6))
        field = TensorField(values=vals)
        again = TensorField.from_flat(field.flat(), field.dims)
        np.testing.assert_array_equal(again.values, vals)

    def test_with_values_keeps_spacing(self):
        field = TensorField(values=np.ones((2, 2, 1, 6)), spacing=(1.0, 2.0, 3.0))
        other = field.with_values(2.0 * field.values)
        assert other.spacing == (1.0, 2.0, 3.0)

    def test_rejects_bad_shapes_and_values(self):
        with pytest.raises(DomainError):
            TensorField(values=np.ones((2, 2, 6)))
        with pytest.raises(DomainError):
            TensorField(values=np.ones((2, 2, 1, 5)))
        bad = np.ones((2, 2, 1, 6))
        bad[0, 0, 0, 0] = np.nan
        with pytest.raises(DomainError):
            TensorField(values=bad)
        with pytest.raises(DomainError):
            TensorField(values=np.ones((2, 2, 1, 6)), spacing=(1.0, 0.0, 1.0))


class TestRegionMasks:
    def make(self):
        labels = np.arange(5, dtype=np.int8).reshape(5, 1, 1) * np.ones((5, 2, 1), dtype=np.int8)
        return RegionMasks(labels=labels)

    def test_label_masks_partition(self):
        masks = self.make()
        total = np.zeros(masks.dims, dtype=int)
        for name in REGION_LABELS:
            total += masks.mask(name).astype(int)
        np.testing.assert_array_equal(total, np.ones(masks.dims, dtype=int))

    def test_composite_masks(self):
        masks = self.make()
        whole = masks.mask("whole_set")
        assert whole.all()
        np.testing.assert_array_equal(
            masks.mask("bands") | masks.mask("background"), whole
        )
        assert not (masks.mask("bands") & masks.mask("background")).any()
        bands = masks.mask("bands_interior") | masks.mask("bands_boundary") | masks.mask("bands_crossing")
        np.testing.assert_array_equal(masks.mask("bands"), bands)

    def test_counts(self):
        counts = self.make().counts()
        assert counts == {name: 2 for name in REGION_LABELS}

    def test_rejects_bad_labels(self):
        with pytest.raises(DomainError):
            RegionMasks(labels=np.full((2, 2, 1), 5, dtype=np.int8))
        with pytest.raises(DomainError):
            RegionMasks(labels=np.zeros((2, 2), dtype=np.int8))
        with pytest.raises(DomainError):
            self.make().mask("edges")


class TestDwiVolume:
    def make(self, rng):
        scheme = default_scheme()
        signals = rng.uniform(0.5, 10.0, size=(3, 2, 1, scheme.n_measurements))
        return DwiVolume(
            signals=signals,
            directions=scheme.directions,
            repeats=scheme.repeats,
            s0=10.0,
        )

    def test_measurement_layout(self, rng):
        vol = self.make(rng)
        assert vol.n_measurements == 18
        assert vol.dims == (3, 2, 1)

    def test_design_matrix_matches_scheme(self, rng):
        vol = self.make(rng)
        np.testing.assert_allclose(
            vol.design_matrix(), default_scheme().design_matrix(), atol=1e-14
        )

    def test_flat_matches_grid_order(self, rng):
        vol = self.make(rng)
        np.testing.assert_array_equal(vol.flat(), flatten_grid(vol.signals))

    def test_rejects_mismatched_measurements(self, rng):
        scheme = default_scheme()
        with pytest.raises(DomainError):
            DwiVolume(
                signals=np.ones((2, 2, 1, 17)),
                directions=scheme.directions,
                repeats=scheme.repeats,
                s0=10.0,
            )
        with pytest.raises(DomainError):
            DwiVolume(
                signals=np.ones((2, 2, 1, 18)),
                directions=scheme.directions,
                repeats=scheme.repeats,
                s0=0.0,
            )
