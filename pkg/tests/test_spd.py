"""Tests for the SPD matrix primitives, with scipy.linalg as the oracle."""

import numpy as np
import pytest
import scipy.linalg

from spdsmooth.spd import (
    affine_exp_map,
    affine_log_map,
    dist_affine,
    dist_euclidean,
    dist_log_euclidean,
    geodesic,
    mat_exp,
    mat_log,
    mat_sqrt,
    sym_eig,
)
from spdsmooth.validation import DomainError

from conftest import random_spd


def rotation_z(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


class TestSymEig:
    def test_identity(self):
        dec = sym_eig(np.eye(3))
        np.testing.assert_array_equal(dec.values, np.ones(3))
        np.testing.assert_array_equal(dec.vectors, np.eye(3))

    def test_diagonal_descending(self):
        dec = sym_eig(np.diag([3.0, 2.0, 1.0]))
        np.testing.assert_allclose(dec.values, [3.0, 2.0, 1.0])

    def test_rotated_spectrum_recovered(self):
        rot = rotation_z(np.pi / 6)
        mat = rot @ np.diag([3.0, 2.0, 1.0]) @ rot.T
        dec = sym_eig(mat)
        np.testing.assert_allclose(dec.values, [3.0, 2.0, 1.0], atol=1e-12)
        recon = dec.vectors @ np.diag(dec.values) @ dec.vectors.T
        np.testing.assert_allclose(recon, mat, atol=1e-12)
        # columns match the rotation up to the sign convention
        for k in range(3):
            col = dec.vectors[:, k]
            ref = rot[:, k]
            assert min(np.abs(col - ref).max(), np.abs(col + ref).max()) < 1e-12

    def test_orthonormal_and_reconstruction(self, rng):
        mats = random_spd(rng, 20)
        dec = sym_eig(mats)
        eye = np.einsum("nij,nik->njk", dec.vectors, dec.vectors)
        np.testing.assert_allclose(eye, np.broadcast_to(np.eye(3), (20, 3, 3)), atol=1e-12)
        recon = np.einsum("nij,nj,nkj->nik", dec.vectors, dec.values, dec.vectors)
        scale = np.abs(mats).max()
        assert np.abs(recon - mats).max() < 1e-10 * scale

    def test_sign_convention_deterministic(self, rng):
        mats = random_spd(rng, 5)
        a = sym_eig(mats).vectors
        b = sym_eig(mats.copy()).vectors
        np.testing.assert_array_equal(a, b)


class TestLogExpSqrt:
    def test_log_identity_is_zero(self):
        np.testing.assert_array_equal(mat_log(np.eye(3)), np.zeros((3, 3)))

    def test_log_of_diag_e(self):
        np.testing.assert_allclose(
            mat_log(np.diag([np.e, 1.0, 1.0])), np.diag([1.0, 0.0, 0.0]), atol=1e-15
        )

    def test_exp_inverse_pair(self):
        sym = np.diag(np.log([16.0, 0.25, 0.25]))
        np.testing.assert_allclose(mat_exp(sym), np.diag([16.0, 0.25, 0.25]), rtol=1e-14)

    def test_against_scipy(self, rng):
        mats = random_spd(rng, 20)
        for m in mats:
            np.testing.assert_allclose(mat_log(m), scipy.linalg.logm(m), atol=1e-10)
            np.testing.assert_allclose(mat_sqrt(m), scipy.linalg.sqrtm(m), atol=1e-10)
        syms = 0.5 * (mats + np.swapaxes(mats, -1, -2)) - 2.0 * np.eye(3)
        for s in syms:
            np.testing.assert_allclose(mat_exp(s), scipy.linalg.expm(s), atol=1e-10)

    def test_round_trip_high_condition(self, rng):
        # condition numbers up to 1e6
        mats = random_spd(rng, 10, lam_lo=1e-3, lam_hi=1e3)
        back = mat_exp(mat_log(mats))
        assert np.abs(back - mats).max() / np.abs(mats).max() < 1e-10

    def test_log_rejects_non_spd(self):
        with pytest.raises(DomainError):
            mat_log(np.diag([1.0, -1.0, 1.0]))


class TestDistances:
    def test_zero_at_equal_points(self, rng):
        mats = random_spd(rng, 5)
        for dist in (dist_euclidean, dist_log_euclidean, dist_affine):
            np.testing.assert_allclose(dist(mats, mats), np.zeros(5), atol=1e-7)

    def test_euclidean_closed_form(self):
        assert dist_euclidean(np.diag([2.0, 1.0, 1.0]), np.eye(3)) == pytest.approx(1.0)

    def test_affine_isotropic_pair(self):
        # log of diag(4,4,4) against I is (log 4) I, norm sqrt(3) log 4
        got = dist_affine(np.diag([4.0, 4.0, 4.0]), np.eye(3))
        assert got == pytest.approx(np.sqrt(3.0) * np.log(4.0), rel=1e-12)

    def test_log_euclidean_equals_affine_when_commuting(self):
        x = np.diag([4.0, 1.0, 1.0])
        y = np.diag([1.0, 2.0, 1.0])
        assert dist_log_euclidean(x, y) == pytest.approx(dist_affine(x, y), abs=1e-12)

    def test_commuting_pairs_random_diagonals(self, rng):
        lam = rng.uniform(0.1, 16.0, size=(20, 2, 3))
        for a, b in lam:
            x, y = np.diag(a), np.diag(b)
            assert dist_log_euclidean(x, y) == pytest.approx(dist_affine(x, y), abs=1e-12)

    def test_affine_invariance_under_congruence(self, rng):
        x = random_spd(rng, 20)
        y = random_spd(rng, 20)
        base = dist_affine(x, y)
        for _ in range(20):
            g = rng.standard_normal((3, 3))
            while np.linalg.det(g) <= 0:
                g = rng.standard_normal((3, 3))
            gx = np.einsum("ij,njk,lk->nil", g, x, g)
            gy = np.einsum("ij,njk,lk->nil", g, y, g)
            gx = 0.5 * (gx + np.swapaxes(gx, -1, -2))
            gy = 0.5 * (gy + np.swapaxes(gy, -1, -2))
            moved = dist_affine(gx, gy)
            np.testing.assert_allclose(moved, base, rtol=1e-9)

    def test_log_euclidean_similarity_invariance(self, rng):
        x = random_spd(rng, 10)
        y = random_spd(rng, 10)
        base = dist_log_euclidean(x, y)
        rot = rotation_z(0.7)
        rx = np.einsum("ij,njk,lk->nil", rot, x, rot)
        ry = np.einsum("ij,njk,lk->nil", rot, y, rot)
        np.testing.assert_allclose(dist_log_euclidean(rx, ry), base, rtol=1e-9)
        np.testing.assert_allclose(dist_log_euclidean(3.0 * x, 3.0 * y), base, rtol=1e-9)

    def test_triangle_inequality_sampled(self, rng):
        x = random_spd(rng, 100)
        y = random_spd(rng, 100)
        z = random_spd(rng, 100)
        for dist in (dist_euclidean, dist_log_euclidean, dist_affine):
            dxz = dist(x, z)
            dxy = dist(x, y)
            dyz = dist(y, z)
            assert np.all(dxz <= dxy + dyz + 1e-10)


class TestMaps:
    def test_log_map_at_identity(self):
        got = affine_log_map(np.eye(3), np.diag([np.e**2, 1.0, 1.0]))
        np.testing.assert_allclose(got, np.diag([2.0, 0.0, 0.0]), atol=1e-12)

    def test_exp_map_of_zero(self, rng):
        x = random_spd(rng, 4)
        np.testing.assert_allclose(affine_exp_map(x, np.zeros((4, 3, 3))), x, atol=1e-12)

    def test_log_exp_round_trip(self):
        x = np.diag([0.25, 16.0, 0.25])
        y = np.diag([16.0, 0.25, 0.25])
        back = affine_exp_map(x, affine_log_map(x, y))
        np.testing.assert_allclose(back, y, rtol=1e-11)

    def test_round_trip_random(self, rng):
        x = random_spd(rng, 20)
        y = random_spd(rng, 20)
        back = affine_exp_map(x, affine_log_map(x, y))
        np.testing.assert_allclose(back, y, rtol=1e-8, atol=1e-10)


class TestGeodesic:
    def test_endpoints(self, rng):
        x = random_spd(rng, 5)
        y = random_spd(rng, 5)
        np.testing.assert_allclose(geodesic(x, y, 0.0), x, atol=1e-11)
        np.testing.assert_allclose(geodesic(x, y, 1.0), y, rtol=1e-9, atol=1e-11)

    def test_commuting_midpoint(self):
        got = geodesic(np.eye(3), np.diag([4.0, 1.0, 1.0]), 0.5)
        np.testing.assert_allclose(got, np.diag([2.0, 1.0, 1.0]), atol=1e-12)

    def test_unit_determinant_preserved(self):
        x = np.diag([16.0, 0.25, 0.25])
        y = np.diag([0.25, 16.0, 0.25])
        mid = geodesic(x, y, 0.5)
        assert np.linalg.det(mid) == pytest.approx(1.0, rel=1e-12)

    def test_distance_scales_linearly(self, rng):
        x = random_spd(rng, 1)[0]
        y = random_spd(rng, 1)[0]
        full = dist_affine(x, y)
        part = dist_affine(x, geodesic(x, y, 0.25))
        assert part == pytest.approx(0.25 * full, rel=1e-9)
