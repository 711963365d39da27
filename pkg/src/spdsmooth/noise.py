"""Measurement scheme, signal generation and the two noise models.

Randomness is drawn from numpy Generators seeded through a master seed and a
per-purpose stream key, and every noise array is materialized in one call in
the canonical voxel-major order. Determinism therefore depends only on the
seed, never on downstream chunking or thread counts.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from .field import DEFAULT_SPACING, DwiVolume, TensorField, flatten_grid, unflatten_grid
from .spd import sym_eig
from .validation import DomainError, check_finite, mat_to_sym6, sym6_to_mat

# Gradient directions as published; normalized to unit length on construction.
RAW_DIRECTIONS = (
    (1.0, 0.0, 1.0),
    (1.0, 1.0, 0.0),
    (0.0, 1.0, 1.0),
    (0.3, 0.2, 0.1),
    (0.9, 0.45, 0.2),
    (1.0, 0.0, 0.0),
    (0.0, 1.0, 0.0),
    (0.0, 0.0, 1.0),
    (2.0, 1.0, 1.3),
)

SPECTRAL_CONDITION_LIMIT = 1e12


@dataclass(frozen=True)
class RngSpec:
    """Reproducible random stream derivation from one master seed."""

    master_seed: int

    def stream(self, purpose: str) -> np.random.Generator:
        """Independent Generator for a named pipeline stage."""
        key = zlib.crc32(purpose.encode("utf-8"))
        return np.random.default_rng(np.random.SeedSequence((self.master_seed, key)))


@dataclass(frozen=True)
class GradientScheme:
    """Unit gradient directions with a repeat count per direction."""

    directions: np.ndarray
    repeats: int = 2

    def __post_init__(self):
        directions = check_finite(self.directions, "directions")
        if directions.ndim != 2 or directions.shape[1] != 3:
            raise DomainError(f"directions must have shape (ndir, 3), got {directions.shape}")
        norms = np.linalg.norm(directions, axis=1)
        if np.any(norms == 0):
            raise DomainError("zero gradient direction")
        object.__setattr__(self, "directions", directions / norms[:, None])
        if self.repeats < 1:
            raise DomainError("repeats must be >= 1")

    @property
    def n_measurements(self) -> int:
        return len(self.directions) * self.repeats

    def design_matrix(self) -> np.ndarray:
        """Rows x_b = (b1^2, b2^2, b3^2, 2 b1 b2, 2 b1 b3, 2 b2 b3), repeated.

        Measurement m = direction_index * repeats + repeat; x_b . d = b^T D b
        for d in the six-component convention.
        """
        b = self.directions
        x = np.column_stack(
            [
                b[:, 0] ** 2,
                b[:, 1] ** 2,
                b[:, 2] ** 2,
                2.0 * b[:, 0] * b[:, 1],
                2.0 * b[:, 0] * b[:, 2],
                2.0 * b[:, 1] * b[:, 2],
            ]
        )
        return np.repeat(x, self.repeats, axis=0)

    def measurement_index(self) -> np.ndarray:
        """(m, 2) array of (direction_index, repeat) per measurement."""
        ndir = len(self.directions)
        d = np.repeat(np.arange(ndir), self.repeats)
        r = np.tile(np.arange(self.repeats), ndir)
        return np.column_stack([d, r])


def default_scheme(repeats: int = 2) -> GradientScheme:
    """The published nine-direction scheme."""
    return GradientScheme(directions=np.array(RAW_DIRECTIONS), repeats=repeats)


def noiseless_dwi(field: TensorField, scheme: GradientScheme, s0: float = 10.0) -> DwiVolume:
    """Noise-free signals Sbar_b = s0 exp(-x_b . d) per voxel."""
    if not s0 > 0:
        raise DomainError("s0 must be positive")
    design = scheme.design_matrix()
    signals = s0 * np.exp(-np.einsum("xyzc,mc->xyzm", field.values, design))
    return DwiVolume(
        signals=signals,
        directions=scheme.directions,
        repeats=scheme.repeats,
        s0=float(s0),
        spacing=field.spacing,
    )


def rician_corrupt(volume: DwiVolume, sigma: float, rng: np.random.Generator) -> DwiVolume:
    """Rician magnitude corruption S = ||Sbar u + sigma eps||, eps ~ N(0, I_2).

    The phase direction u is fixed at (1, 0), so
    S = sqrt((Sbar + sigma e1)^2 + (sigma e2)^2). Draws are materialized
    voxel-major, measurement-minor, two per measurement.
    """
    sigma = float(sigma)
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    flat = volume.flat()
    eps = rng.standard_normal((flat.shape[0], flat.shape[1], 2))
    noisy = np.hypot(flat + sigma * eps[..., 0], sigma * eps[..., 1])
    return DwiVolume(
        signals=unflatten_grid(noisy, volume.dims),
        directions=volume.directions,
        repeats=volume.repeats,
        s0=volume.s0,
        spacing=volume.spacing,
    )


def spectral_corrupt(
    field: TensorField, nu: int, eta: float, rng: np.random.Generator
) -> tuple[TensorField, int]:
    """Spectral-domain corruption of a tensor field.

    Eigenvalues are scaled by independent chi-squared factors U = chi2_nu / nu
    (drawn as means of nu squared normals); the eigenvector frame E is rotated
    by the polar factor of (I + eta Z) with Z iid standard normal, i.e.
    Etilde = (I + eta Z) [(I + eta Z)^T (I + eta Z)]^(-1/2) E. Degenerate
    draws (condition number of I + eta Z above 1e12) are redrawn; the count of
    redraws is returned alongside the corrupted field.
    """
    nu = int(nu)
    eta = float(eta)
    if nu < 1:
        raise DomainError("nu must be >= 1")
    if eta < 0:
        raise DomainError("eta must be nonnegative")
    flat = flatten_grid(field.values)
    mats = sym6_to_mat(flat)
    dec = sym_eig(mats)
    lam, vec = dec.values, dec.vectors

    nvox = flat.shape[0]
    # chi-squared factors: one draw block per voxel, 3 eigenvalues x nu normals
    normals = rng.standard_normal((nvox, 3, nu))
    u = (normals**2).mean(axis=2)
    lam_noisy = lam * u

    z = rng.standard_normal((nvox, 3, 3))
    redraws = 0
    while True:
        a = np.eye(3) + eta * z
        gram_eigs = np.linalg.eigvalsh(np.swapaxes(a, -1, -2) @ a)
        bad = gram_eigs[:, 0] <= gram_eigs[:, 2] / SPECTRAL_CONDITION_LIMIT**2
        if not bad.any():
            break
        redraws += int(bad.sum())
        z[bad] = rng.standard_normal((int(bad.sum()), 3, 3))

    # Polar factor A (A^T A)^(-1/2), the inverse square root taken spectrally.
    gl, gv = np.linalg.eigh(np.swapaxes(a, -1, -2) @ a)
    invhalf = np.einsum("vij,vj,vkj->vik", gv, 1.0 / np.sqrt(gl), gv)
    rot = a @ invhalf
    frames = rot @ vec
    noisy = np.einsum("vij,vj,vkj->vik", frames, lam_noisy, frames)
    out = unflatten_grid(mat_to_sym6(noisy), field.dims)
    return TensorField(values=out, spacing=field.spacing), redraws
