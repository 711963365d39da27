"""Tests for kernel weights and field smoothing under the three metrics."""

import numpy as np
import pytest

from spdsmooth.field import DEFAULT_SPACING, TensorField
from spdsmooth.smoothing import (
    SmoothingConfig,
    aniso_weights,
    gaussian_kernel,
    interior_profile,
    iso_weights,
    kernel_offsets,
    smooth_field,
    support_radius,
    weight_profile,
)
from spdsmooth.spd import mat_exp, mat_log
from spdsmooth.validation import DomainError, mat_to_sym6, sym6_to_mat

from conftest import random_spd


def field_from_diagonals(diags, spacing=DEFAULT_SPACING):
    """1-D field along x from a list of diagonal triples."""
    values = np.zeros((len(diags), 1, 1, 6))
    values[:, 0, 0, :3] = diags
    return TensorField(values=values, spacing=spacing)


class TestKernel:
    def test_values(self):
        assert gaussian_kernel(0.0) == 1.0
        assert gaussian_kernel(1.0) == pytest.approx(np.exp(-0.5), rel=1e-15)

    def test_support_radius_hits_threshold(self):
        for h in (0.005, 0.01, 0.025):
            r = support_radius(h)
            assert gaussian_kernel(r / h) == pytest.approx(1e-6, rel=1e-12)

    def test_offsets_sorted_and_symmetric(self):
        offsets, dist = kernel_offsets(0.01, DEFAULT_SPACING)
        assert tuple(offsets[0]) == (0, 0, 0)
        assert dist[0] == 0.0
        assert np.all(np.diff(dist) >= 0.0)
        have = {tuple(o) for o in offsets}
        assert have == {tuple(-o) for o in offsets}
        assert np.all(gaussian_kernel(dist / 0.01) >= 1e-6)

    def test_offsets_rejects_bad_bandwidth(self):
        with pytest.raises(DomainError):
            kernel_offsets(0.0, DEFAULT_SPACING)


class TestWeightProfile:
    def test_single_weight(self):
        p = weight_profile(np.array([1.0]))
        assert (p.size, p.n99, p.wmax, p.entropy) == (1, 1, 1.0, 0.0)

    def test_uniform_weights(self):
        p = weight_profile(np.full(4, 0.25))
        assert p.size == 4
        assert p.n99 == 4
        assert p.entropy == pytest.approx(np.log(4.0), rel=1e-12)

    def test_rejects_bad_weights(self):
        with pytest.raises(DomainError):
            weight_profile(np.array([0.5, 0.4]))
        with pytest.raises(DomainError):
            weight_profile(np.array([]))
        with pytest.raises(DomainError):
            weight_profile(np.array([1.5, -0.5]))

    def test_interior_profile_narrow_bandwidth(self):
        p = interior_profile(0.005, DEFAULT_SPACING)
        assert p.size == 5
        assert p.n99 == 1
        assert p.wmin == pytest.approx(0.0008807127186566458, rel=1e-12)
        assert p.median == pytest.approx(0.0008807127186566458, rel=1e-12)
        assert p.wmax == pytest.approx(0.9964771491253733, rel=1e-12)
        assert p.entropy == pytest.approx(0.028299115938022517, rel=1e-12)

    def test_interior_profile_default_bandwidth(self):
        p = interior_profile(0.01, DEFAULT_SPACING)
        assert p.size == 23
        assert p.n99 == 9
        assert p.wmin == pytest.approx(2.0551034496386575e-06, rel=1e-12)
        assert p.median == pytest.approx(0.0004873956358140194, rel=1e-12)
        assert p.wmax == pytest.approx(0.551460883195726, rel=1e-12)
        assert p.entropy == pytest.approx(1.5139581310069161, rel=1e-12)

    def test_interior_profile_wide_bandwidth(self):
        p = interior_profile(0.025, DEFAULT_SPACING)
        assert p.size == 561
        assert p.n99 == 141
        assert p.wmin == pytest.approx(7.2872038536883e-08, rel=1e-12)
        assert p.median == pytest.approx(8.42286243632327e-06, rel=1e-12)
        assert p.wmax == pytest.approx(0.07041768565522226, rel=1e-12)
        assert p.entropy == pytest.approx(4.083294538672557, rel=1e-12)

    def test_entropy_grows_with_bandwidth(self):
        ent = [interior_profile(h, DEFAULT_SPACING).entropy for h in (0.005, 0.01, 0.025, 0.035)]
        assert np.all(np.diff(ent) > 0.0)


class TestIsoWeights:
    def test_interior_normalized(self):
        idx, w = iso_weights((8, 8, 1), (17, 17, 3), DEFAULT_SPACING, 0.01)
        assert w.sum() == pytest.approx(1.0, rel=1e-14)
        assert len(idx) == 23

    def test_boundary_renormalizes_surviving_weights(self):
        # clipped corner keeps the interior raw weights of in-grid neighbors
        h = 0.01
        offsets, dist = kernel_offsets(h, DEFAULT_SPACING)
        raw = gaussian_kernel(dist / h)
        inside = np.all((offsets >= 0) & (offsets < 4), axis=1)
        expected = raw[inside] / raw[inside].sum()
        idx, w = iso_weights((0, 0, 0), (4, 4, 4), DEFAULT_SPACING, h)
        order = np.lexsort(idx.T)
        np.testing.assert_allclose(w[order], expected[np.lexsort(idx.T)], atol=0)
        lookup = {tuple(o): e for o, e in zip(offsets[inside], raw[inside] / raw[inside].sum())}
        for i, wi in zip(idx, w):
            assert wi == pytest.approx(lookup[tuple(i)], rel=1e-14)


class TestAnisoWeights:
    def test_isotropic_tensor_matches_iso_at_scaled_bandwidth(self):
        # trace(cI) * (cI)^-1 = 3I, so the deformed distance is the
        # physical one at bandwidth h / sqrt(3)
        h = 0.012
        center, dims = (8, 8, 1), (17, 17, 3)
        idx_a, w_a, fell = aniso_weights(center, 2.5 * np.eye(3), dims, DEFAULT_SPACING, h)
        idx_i, w_i = iso_weights(center, dims, DEFAULT_SPACING, h / np.sqrt(3.0))
        assert not fell
        np.testing.assert_array_equal(np.sort(idx_a, axis=0), np.sort(idx_i, axis=0))
        np.testing.assert_allclose(np.sort(w_a), np.sort(w_i), rtol=1e-12)

    def test_scale_invariant(self):
        d = np.diag([16.0, 0.25, 0.25])
        idx_1, w_1, _ = aniso_weights((8, 8, 1), d, (17, 17, 3), DEFAULT_SPACING, 0.01)
        idx_2, w_2, _ = aniso_weights((8, 8, 1), 10.0 * d, (17, 17, 3), DEFAULT_SPACING, 0.01)
        np.testing.assert_array_equal(idx_1, idx_2)
        np.testing.assert_allclose(w_1, w_2, rtol=1e-12)

    def test_neighborhood_stretches_along_principal_axis(self):
        d = np.diag([16.0, 0.25, 0.25])
        idx, w, _ = aniso_weights((8, 8, 0), d, (17, 17, 1), DEFAULT_SPACING, 0.01)
        have = {tuple(i) for i in idx}
        # the x neighbor survives truncation, the y neighbor does not
        assert (9, 8, 0) in have
        assert (8, 9, 0) not in have
        reach_x = max(abs(i[0] - 8) for i in idx)
        reach_y = max(abs(i[1] - 8) for i in idx)
        assert reach_x > reach_y
        assert w.sum() == pytest.approx(1.0, rel=1e-14)

    def test_singular_tensor_falls_back_to_iso(self):
        d = np.diag([1.0, 1.0, 0.0])
        idx, w, fell = aniso_weights((8, 8, 1), d, (17, 17, 3), DEFAULT_SPACING, 0.01)
        assert fell
        idx_i, w_i = iso_weights((8, 8, 1), (17, 17, 3), DEFAULT_SPACING, 0.01)
        np.testing.assert_array_equal(idx, idx_i)
        np.testing.assert_allclose(w, w_i, rtol=1e-15)


class TestSmoothFieldBasics:
    @pytest.mark.parametrize("metric", ["euclidean", "log_euclidean", "affine"])
    def test_constant_field_is_fixed_point(self, metric, rng):
        mat = random_spd(rng)
        values = np.broadcast_to(mat_to_sym6(mat), (5, 4, 2, 6)).copy()
        field = TensorField(values=values)
        out, report = smooth_field(field, SmoothingConfig(metric=metric, h=0.01))
        np.testing.assert_allclose(out.values, field.values, atol=1e-12)
        assert report.metric == metric

    @pytest.mark.parametrize("metric", ["euclidean", "log_euclidean", "affine"])
    def test_tiny_bandwidth_is_identity(self, metric, rng):
        mats = random_spd(rng, n=8).reshape(2, 2, 2, 3, 3)
        field = TensorField.from_matrices(mats)
        out, report = smooth_field(field, SmoothingConfig(metric=metric, h=1e-4))
        np.testing.assert_allclose(out.values, field.values, atol=1e-13)
        assert report.neighborhood_size == 1

    def test_two_voxel_euclidean_mean(self, rng):
        x, y = random_spd(rng, n=2)
        field = TensorField.from_matrices(np.stack([x, y]).reshape(2, 1, 1, 3, 3))
        h = 0.04
        out, _ = smooth_field(field, SmoothingConfig(metric="euclidean", h=h))
        k = gaussian_kernel(DEFAULT_SPACING[0] / h)
        expected = (x + k * y) / (1.0 + k)
        np.testing.assert_allclose(out.tensor_at(0, 0, 0), expected, atol=1e-12)

    def test_two_voxel_geometric_means_commuting(self):
        # diagonal pair: log-Euclidean and affine means both equal the
        # exponential of the weighted log
        diags = [(0.25, 16.0, 0.25), (4.0, 0.5, 0.5)]
        field = field_from_diagonals(diags)
        h = 0.04
        k = gaussian_kernel(DEFAULT_SPACING[0] / h)
        logs = np.log(np.array(diags))
        expected = np.exp((logs[0] + k * logs[1]) / (1.0 + k))
        for metric in ("log_euclidean", "affine"):
            out, _ = smooth_field(field, SmoothingConfig(metric=metric, h=h))
            np.testing.assert_allclose(
                np.diag(out.tensor_at(0, 0, 0)), expected, rtol=1e-10
            )
            assert np.max(np.abs(out.values[..., 3:])) < 1e-12

    def test_commuting_field_log_euclidean_equals_affine(self, rng):
        values = np.zeros((4, 3, 2, 6))
        values[..., :3] = rng.uniform(0.2, 8.0, size=(4, 3, 2, 3))
        field = TensorField(values=values)
        a, _ = smooth_field(field, SmoothingConfig(metric="log_euclidean", h=0.02))
        b, _ = smooth_field(field, SmoothingConfig(metric="affine", h=0.02))
        np.testing.assert_allclose(a.values, b.values, atol=1e-9)

    def test_geometric_metrics_reject_indefinite_input(self):
        values = np.zeros((2, 1, 1, 6))
        values[..., :3] = 1.0
        values[0, 0, 0, :3] = (1.0, -0.5, 1.0)
        field = TensorField(values=values)
        smooth_field(field, SmoothingConfig(metric="euclidean", h=0.01))
        for metric in ("log_euclidean", "affine"):
            with pytest.raises(DomainError):
                smooth_field(field, SmoothingConfig(metric=metric, h=0.01))


class TestSmoothFieldAgainstPerVoxelOracle:
    def weighted_means(self, field, h):
        """Per-voxel weighted Euclidean and log-Euclidean means via iso_weights."""
        dims = field.dims
        mats = field.as_matrices()
        logs = mat_log(mats)
        out_e = np.zeros_like(mats)
        out_le = np.zeros_like(mats)
        for x in range(dims[0]):
            for y in range(dims[1]):
                for z in range(dims[2]):
                    idx, w = iso_weights((x, y, z), dims, field.spacing, h)
                    sel = (idx[:, 0], idx[:, 1], idx[:, 2])
                    out_e[x, y, z] = np.einsum("k,kij->ij", w, mats[sel])
                    out_le[x, y, z] = mat_exp(np.einsum("k,kij->ij", w, logs[sel]))
        return out_e, out_le

    def test_matches_oracle_on_random_field(self, rng):
        mats = random_spd(rng, n=24).reshape(4, 3, 2, 3, 3)
        field = TensorField.from_matrices(mats)
        exp_e, exp_le = self.weighted_means(field, 0.02)
        out_e, _ = smooth_field(field, SmoothingConfig(metric="euclidean", h=0.02))
        out_le, _ = smooth_field(field, SmoothingConfig(metric="log_euclidean", h=0.02))
        np.testing.assert_allclose(out_e.as_matrices(), exp_e, atol=1e-11)
        np.testing.assert_allclose(out_le.as_matrices(), exp_le, atol=1e-11)

    def test_offsets_wider_than_grid(self, rng):
        # bandwidth whose support reaches past the grid on every axis
        mats = random_spd(rng, n=16).reshape(4, 2, 2, 3, 3)
        field = TensorField.from_matrices(mats)
        h = 0.06
        exp_e, _ = self.weighted_means(field, h)
        out_e, _ = smooth_field(field, SmoothingConfig(metric="euclidean", h=h))
        np.testing.assert_allclose(out_e.as_matrices(), exp_e, atol=1e-11)


class TestSchemesAndDeterminism:
    def test_anisotropic_constant_field_fixed_point(self, rng):
        mat = random_spd(rng)
        values = np.broadcast_to(mat_to_sym6(mat), (6, 6, 1, 6)).copy()
        field = TensorField(values=values)
        config = SmoothingConfig(
            metric="log_euclidean", scheme="anisotropic", h_iso=0.01, h_aniso=0.01
        )
        out, report = smooth_field(field, config)
        np.testing.assert_allclose(out.values, field.values, atol=1e-11)
        assert report.scheme == "anisotropic"
        assert report.bandwidths == (0.01, 0.01)
        assert report.aniso_fallbacks == 0

    def test_threads_do_not_change_bytes(self, rng):
        mats = random_spd(rng, n=36).reshape(6, 6, 1, 3, 3)
        field = TensorField.from_matrices(mats)
        outs = []
        for threads, chunk in ((1, 4096), (2, 7), (3, 1)):
            config = SmoothingConfig(
                metric="affine", h=0.02, threads=threads, chunk_size=chunk
            )
            out, _ = smooth_field(field, config)
            outs.append(out.values.tobytes())
        assert outs[0] == outs[1] == outs[2]

    def test_config_validation(self):
        with pytest.raises(DomainError):
            SmoothingConfig(metric="riemannian")
        with pytest.raises(DomainError):
            SmoothingConfig(scheme="adaptive")
        with pytest.raises(DomainError):
            SmoothingConfig(h=0.0)
        with pytest.raises(DomainError):
            SmoothingConfig(truncation=1.5)

    def test_smoothing_reduces_spectral_noise(self):
        from spdsmooth.noise import RngSpec, spectral_corrupt
        from spdsmooth.spd import dist_log_euclidean

        values = np.zeros((12, 12, 1, 6))
        values[..., :3] = (16.0, 0.25, 0.25)
        truth = TensorField(values=values)
        noisy, _ = spectral_corrupt(truth, 50, 0.1, RngSpec(2).stream("spectral"))
        out, _ = smooth_field(noisy, SmoothingConfig(metric="log_euclidean", h=0.01))
        before = dist_log_euclidean(noisy.as_matrices(), truth.as_matrices())
        after = dist_log_euclidean(out.as_matrices(), truth.as_matrices())
        assert np.median(after) < np.median(before)
