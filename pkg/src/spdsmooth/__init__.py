"""Denoising of SPD tensor fields by kernel smoothing under Euclidean,
log-Euclidean and affine-invariant geometries, with the synthetic phantom,
noise models, tensor regression and expansion checks used to validate it."""

__version__ = "0.1.0"

from .validation import DomainError
from . import spd, means, rician, regression, phantom, noise, smoothing, analysis, perturbation
from . import io, config, pipeline, verify
from .field import TensorField, RegionMasks
from .noise import GradientScheme, DwiVolume, RngSpec, default_scheme
from .estimators import DwiTensorFitter, TensorFieldSmoother

__all__ = [
    "DomainError",
    "TensorField",
    "RegionMasks",
    "GradientScheme",
    "DwiVolume",
    "RngSpec",
    "default_scheme",
    "DwiTensorFitter",
    "TensorFieldSmoother",
    "spd",
    "means",
    "rician",
    "regression",
    "phantom",
    "noise",
    "smoothing",
    "analysis",
    "perturbation",
    "io",
    "config",
    "pipeline",
    "verify",
]
