"""Tests for the fit/transform estimator wrappers."""

import numpy as np
import pytest

from spdsmooth.estimators import DwiTensorFitter, TensorFieldSmoother
from spdsmooth.field import TensorField
from spdsmooth.noise import RngSpec, default_scheme, noiseless_dwi, rician_corrupt
from spdsmooth.smoothing import SmoothingConfig, smooth_field
from spdsmooth.validation import DomainError

from conftest import random_spd


def small_truth(rng):
    mats = random_spd(rng, n=12, lam_lo=0.5, lam_hi=4.0).reshape(3, 2, 2, 3, 3)
    return TensorField.from_matrices(mats)


class TestParams:
    def test_get_params_round_trip(self):
        fitter = DwiTensorFitter(method="linear", sigma=0.5, max_iter=7)
        params = fitter.get_params()
        assert params["method"] == "linear"
        assert params["sigma"] == 0.5
        assert params["max_iter"] == 7
        again = DwiTensorFitter(**params)
        assert again.get_params() == params

    def test_set_params_returns_self(self):
        smoother = TensorFieldSmoother()
        assert smoother.set_params(h=0.025, metric="euclidean") is smoother
        assert smoother.h == 0.025
        assert smoother.metric == "euclidean"

    def test_set_params_rejects_unknown(self):
        with pytest.raises(DomainError):
            DwiTensorFitter().set_params(bandwidth=0.01)

    def test_repr_lists_params(self):
        text = repr(TensorFieldSmoother(h=0.025))
        assert text.startswith("TensorFieldSmoother(")
        assert "h=0.025" in text


class TestDwiTensorFitter:
    def test_fit_recovers_noiseless_field(self, rng):
        truth = small_truth(rng)
        dwi = noiseless_dwi(truth, default_scheme())
        fitter = DwiTensorFitter(method="linear").fit(dwi)
        np.testing.assert_allclose(fitter.field_.values, truth.values, atol=1e-9)
        assert fitter.projected_ == 0
        assert fitter.result_.method == "linear"
        assert fitter.field_.spacing == truth.spacing

    def test_fit_transform_matches_fit(self, rng):
        truth = small_truth(rng)
        dwi = rician_corrupt(noiseless_dwi(truth, default_scheme()), 0.3,
                             RngSpec(4).stream("rician"))
        a = DwiTensorFitter(method="nonlinear").fit_transform(dwi)
        b = DwiTensorFitter(method="nonlinear").fit(dwi).field_
        np.testing.assert_array_equal(a.values, b.values)

    def test_projection_flag(self, rng):
        truth = small_truth(rng)
        dwi = rician_corrupt(noiseless_dwi(truth, default_scheme()), 3.0,
                             RngSpec(4).stream("rician"))
        projected = DwiTensorFitter(method="linear", project=True).fit(dwi)
        raw = DwiTensorFitter(method="linear", project=False).fit(dwi)
        assert projected.projected_ > 0
        assert raw.projected_ == 0
        assert np.linalg.eigvalsh(projected.field_.as_matrices()).min() > 0.0
        assert np.linalg.eigvalsh(raw.field_.as_matrices()).min() < 0.0

    def test_mle_requires_sigma(self, rng):
        truth = small_truth(rng)
        dwi = noiseless_dwi(truth, default_scheme())
        with pytest.raises(DomainError):
            DwiTensorFitter(method="mle").fit(dwi)

    def test_field_orientation_matches_grid(self, rng):
        # one voxel deviates; the estimate must deviate at the same (x, y, z)
        truth = small_truth(rng)
        values = truth.values.copy()
        values[2, 0, 1, :3] = (0.25, 16.0, 0.25)
        values[2, 0, 1, 3:] = 0.0
        truth = truth.with_values(values)
        dwi = noiseless_dwi(truth, default_scheme())
        fitter = DwiTensorFitter(method="linear").fit(dwi)
        np.testing.assert_allclose(
            fitter.field_.tensor_at(2, 0, 1), np.diag([0.25, 16.0, 0.25]), atol=1e-9
        )


class TestTensorFieldSmoother:
    def test_transform_matches_functional_api(self, rng):
        field = small_truth(rng)
        smoother = TensorFieldSmoother(metric="log_euclidean", h=0.02)
        out = smoother.fit_transform(field)
        expected, report = smooth_field(
            field, SmoothingConfig(metric="log_euclidean", h=0.02)
        )
        np.testing.assert_array_equal(out.values, expected.values)
        assert smoother.report_.neighborhood_size == report.neighborhood_size

    def test_invalid_config_fails_on_fit(self, rng):
        field = small_truth(rng)
        with pytest.raises(DomainError):
            TensorFieldSmoother(metric="geodesic").fit(field)
