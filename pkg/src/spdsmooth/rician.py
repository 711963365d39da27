"""Rician signal statistics: density, Fisher information and mean bias.

The magnitude signal S = ||zeta u + sigma eps|| with eps ~ N(0, I_2) has the
Rician density p(x) = (x / sigma^2) exp(-(x^2 + zeta^2) / (2 sigma^2))
I_0(x zeta / sigma^2). Everything here is computed through exponentially
scaled Bessel functions so large signal-to-noise ratios do not overflow.
"""

from __future__ import annotations

import numpy as np
from scipy import integrate, special

from .validation import DomainError, check_finite


def bessel_i0(t: np.ndarray) -> np.ndarray:
    """Modified Bessel function I_0."""
    return special.i0(check_finite(t, "t"))


def bessel_i1(t: np.ndarray) -> np.ndarray:
    """Modified Bessel function I_1."""
    return special.i1(check_finite(t, "t"))


def bessel_i0e(t: np.ndarray) -> np.ndarray:
    """Exponentially scaled e^-|t| I_0(t), the stable internal primitive."""
    return special.i0e(check_finite(t, "t"))


def bessel_i1e(t: np.ndarray) -> np.ndarray:
    """Exponentially scaled e^-|t| I_1(t)."""
    return special.i1e(check_finite(t, "t"))


def bessel_ratio(t: np.ndarray) -> np.ndarray:
    """F(t) = I_1(t) / I_0(t) for t >= 0; F(0) = 0, F(t) -> 1 from below."""
    t = check_finite(t, "t")
    if np.any(t < 0):
        raise DomainError("bessel_ratio requires t >= 0")
    return special.i1e(t) / special.i0e(t)


def bessel_ratio_derivative(t: np.ndarray) -> np.ndarray:
    """F'(t) from the Riccati identity F' = 1 - F/t - F^2; F'(0) = 1/2."""
    t = np.asarray(t, dtype=np.float64)
    f = bessel_ratio(t)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = 1.0 - f / t - f * f
    return np.where(t == 0.0, 0.5, out)


def _check_sigma(sigma: float) -> float:
    sigma = float(sigma)
    if not np.isfinite(sigma) or sigma <= 0:
        raise DomainError("sigma must be positive and finite")
    return sigma


def rician_logpdf(x: np.ndarray, zeta: np.ndarray, sigma: float) -> np.ndarray:
    """Log density of the Rician distribution; -inf outside the support x > 0."""
    sigma = _check_sigma(sigma)
    x = check_finite(x, "x")
    zeta = check_finite(zeta, "zeta")
    if np.any(zeta < 0):
        raise DomainError("zeta must be nonnegative")
    x, zeta = np.broadcast_arrays(x, zeta)
    t = x * zeta / sigma**2
    with np.errstate(divide="ignore", invalid="ignore"):
        core = (
            np.log(x / sigma**2)
            - (x - zeta) ** 2 / (2.0 * sigma**2)
            + np.log(special.i0e(np.abs(t)))
        )
    return np.where(x > 0, core, -np.inf)


def rician_pdf(x: np.ndarray, zeta: np.ndarray, sigma: float) -> np.ndarray:
    """Rician density; zero outside the support x > 0."""
    logp = rician_logpdf(x, zeta, sigma)
    with np.errstate(over="ignore"):
        return np.where(np.isneginf(logp), 0.0, np.exp(logp))


def _fisher_scaled(w: float, epsabs: float = 1e-10) -> float:
    """sigma^2 * Fisher information at signal-to-noise ratio w = zeta / sigma.

    Equals e^{-w^2/2} V(w) - w^2 with
    V(w) = int_0^inf u^3 I_1(uw)^2 / I_0(uw) e^{-u^2/2} du. The integrand of
    the scaled form, u^3 F(uw) i1e(uw) e^{-(u-w)^2/2}, concentrates in a
    width-O(1) window around u = w, which fixes the quadrature interval.
    """
    if w == 0.0:
        return 0.0

    def integrand(u):
        v = u * w
        return u**3 * (special.i1e(v) ** 2 / special.i0e(v)) * np.exp(-0.5 * (u - w) ** 2)

    lo = max(0.0, w - 12.0)
    hi = w + 12.0
    val, _ = integrate.quad(integrand, lo, hi, epsabs=epsabs, epsrel=1e-12, limit=200)
    return val - w * w


def fisher_scalar(zeta: float, sigma: float) -> float:
    """Fisher information of zeta for one Rician draw.

    J(zeta; sigma) = (1/sigma^2) [e^{-zeta^2/(2 sigma^2)} V(zeta/sigma)
    - zeta^2/sigma^2]; satisfies 0 < sigma^2 J < 1 for zeta > 0 and
    sigma^2 J -> 1 as sigma -> 0.
    """
    sigma = _check_sigma(sigma)
    zeta = float(zeta)
    if not np.isfinite(zeta) or zeta < 0:
        raise DomainError("zeta must be nonnegative and finite")
    return _fisher_scaled(zeta / sigma) / sigma**2


def rician_score(x: np.ndarray, zeta: np.ndarray, sigma: float) -> np.ndarray:
    """Score d/dzeta log p = -zeta/sigma^2 + (x/sigma^2) F(x zeta / sigma^2)."""
    sigma = _check_sigma(sigma)
    x = check_finite(x, "x")
    zeta = check_finite(zeta, "zeta")
    return -zeta / sigma**2 + (x / sigma**2) * bessel_ratio(x * zeta / sigma**2)


def fisher_matrix(d: np.ndarray, design: np.ndarray, s0: float, sigma: float) -> np.ndarray:
    """Fisher information of the tensor parameters for one voxel.

    I(D) = sum_b J(Sbar_b; sigma) Sbar_b^2 x_b x_b^T with Sbar_b =
    s0 exp(-x_b . D); approaches (1/sigma^2) sum_b Sbar_b^2 x_b x_b^T as
    sigma -> 0.
    """
    d = check_finite(d, "d")
    design = check_finite(design, "design")
    sbar = s0 * np.exp(-design @ d)
    j = np.array([_fisher_scaled(z / sigma) for z in sbar]) / sigma**2
    return np.einsum("b,bi,bj->ij", j * sbar**2, design, design)


def dwi_signal_bias(sbar: np.ndarray, sigma: float) -> np.ndarray:
    """Mean bias E(S) - Sbar of the Rician magnitude signal.

    E(S) = sigma sqrt(pi/2) L_{1/2}(-Sbar^2 / (2 sigma^2)) with the Laguerre
    function L_{1/2}(x) = e^{x/2} [(1 - x) I_0(-x/2) - x I_1(-x/2)], computed
    in scaled form. At Sbar = 0 the bias is the Rayleigh mean
    sigma sqrt(pi/2); it decays like sigma^2 / (2 Sbar) at high ratio.
    """
    sigma = _check_sigma(sigma)
    sbar = check_finite(sbar, "sbar")
    if np.any(sbar < 0):
        raise DomainError("sbar must be nonnegative")
    u = sbar**2 / (4.0 * sigma**2)
    laguerre = (1.0 + 2.0 * u) * special.i0e(u) + 2.0 * u * special.i1e(u)
    return sigma * np.sqrt(np.pi / 2.0) * laguerre - sbar
