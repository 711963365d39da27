"""Estimator-style wrappers around the fitting and smoothing pipelines.

Thin stateful adapters following the fit/transform convention: parameters
in ``__init__``, derived state on ``fit`` in trailing-underscore
attributes, ``get_params``/``set_params`` for introspection. The
underlying functions stay importable on their own.
"""

from __future__ import annotations

import inspect

import numpy as np

from .field import TensorField
from .noise import DwiVolume
from .regression import fit_tensors, project_spd
from .smoothing import SmoothingConfig, smooth_field
from .validation import DomainError


class BaseEstimator:
    """Parameter introspection shared by the pipeline estimators."""

    @classmethod
    def _param_names(cls):
        sig = inspect.signature(cls.__init__)
        return [name for name in sig.parameters if name != "self"]

    def get_params(self) -> dict:
        return {name: getattr(self, name) for name in self._param_names()}

    def set_params(self, **params):
        valid = set(self._param_names())
        for key, value in params.items():
            if key not in valid:
                raise DomainError(
                    "invalid parameter %r for %s" % (key, type(self).__name__)
                )
            setattr(self, key, value)
        return self

    def __repr__(self):
        args = ", ".join("%s=%r" % kv for kv in sorted(self.get_params().items()))
        return "%s(%s)" % (type(self).__name__, args)


class DwiTensorFitter(BaseEstimator):
    """Fits a tensor field from a diffusion-weighted volume.

    Parameters mirror :func:`spdsmooth.regression.fit_tensors`; ``project``
    controls whether non-SPD estimates are floored onto the SPD cone.
    After ``fit``, the results live in ``field_`` (TensorField),
    ``result_`` (per-voxel diagnostics) and ``projected_`` (count).
    """

    def __init__(self, method: str = "nonlinear", sigma: float | None = None,
                 project: bool = True, tol: float | None = None,
                 max_iter: int = 100):
        self.method = method
        self.sigma = sigma
        self.project = project
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, dwi: DwiVolume):
        kwargs = {}
        if self.method != "linear":
            kwargs["max_iter"] = self.max_iter
            if self.tol is not None:
                kwargs["tol"] = self.tol
        result = fit_tensors(
            dwi.flat(), dwi.design_matrix(), dwi.s0,
            method=self.method, sigma=self.sigma, **kwargs,
        )
        tensors = result.tensors
        projected = np.zeros(tensors.shape[0], dtype=bool)
        if self.project:
            tensors, projected = project_spd(tensors)
        nx, ny, nz = dwi.dims
        values = tensors.reshape(nz, ny, nx, 6).transpose(2, 1, 0, 3)
        self.field_ = TensorField(values=values, spacing=dwi.spacing)
        self.result_ = result
        self.projected_ = int(np.count_nonzero(projected))
        return self

    def fit_transform(self, dwi: DwiVolume) -> TensorField:
        return self.fit(dwi).field_


class TensorFieldSmoother(BaseEstimator):
    """Kernel-smooths a tensor field under a chosen metric and scheme."""

    def __init__(self, metric: str = "log_euclidean", scheme: str = "isotropic",
                 h: float = 0.01, h_iso: float = 0.01, h_aniso: float = 0.01,
                 truncation: float = 1e-6, threads: int = 1,
                 chunk_size: int = 4096):
        self.metric = metric
        self.scheme = scheme
        self.h = h
        self.h_iso = h_iso
        self.h_aniso = h_aniso
        self.truncation = truncation
        self.threads = threads
        self.chunk_size = chunk_size

    def _config(self) -> SmoothingConfig:
        return SmoothingConfig(**self.get_params())

    def fit(self, field: TensorField):
        self._config()
        return self

    def transform(self, field: TensorField) -> TensorField:
        smoothed, report = smooth_field(field, self._config())
        self.report_ = report
        return smoothed

    def fit_transform(self, field: TensorField) -> TensorField:
        return self.fit(field).transform(field)
