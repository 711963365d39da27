"""Diffusion tensor estimation from noisy magnitude signals.

Implements three fitters sharing the exponential-decay signal model
``s_b = s0 * exp(-x_b . d)`` with the 6-vector ``d`` in (xx, yy, zz, xy,
xz, yz) order and design rows ``x_b = (g1^2, g2^2, g3^2, 2 g1 g2,
2 g1 g3, 2 g2 g3)``:

- ``fit_linear``: least squares on log-transformed signals,
- ``fit_nonlinear``: Gauss-Newton least squares on raw signals,
- ``fit_mle``: Newton ascent of the Rician log-likelihood.

Also provides the small-noise asymptotic covariance/bias formulas for the
linear and nonlinear estimators and the low-SNR limit of the log-linear
estimator, all of which the Monte Carlo tests check against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.special import i0e

from .rician import bessel_ratio, bessel_ratio_derivative
from .validation import DomainError, check_finite, mat_to_sym6, sym6_to_mat

SIGNAL_FLOOR_FACTOR = 1e-12
SPD_PROJECTION_FLOOR = 1e-6


@dataclass(frozen=True)
class FitResult:
    """Batched fit output.

    Attributes
    ----------
    tensors : ndarray, shape (n, 6)
        Estimated tensors, one row per voxel. Not necessarily positive
        definite; see ``spd`` and :func:`project_spd`.
    method : str
        One of "linear", "nonlinear", "mle".
    converged : ndarray of bool, shape (n,)
        Linear fits always converge. Iterative fits converge when the
        score (first-order condition) drops below tolerance.
    iterations : ndarray of int, shape (n,)
        Iterations used (0 for the linear fit).
    residual : ndarray, shape (n,)
        Max-abs score component at the returned iterate (0 for linear).
    spd : ndarray of bool, shape (n,)
        Whether the returned tensor is positive definite.
    clamped : ndarray of int, shape (n,)
        Signals clamped to the positivity floor before taking logs
        (linear fit and linear initialization only).
    """

    tensors: np.ndarray
    method: str
    converged: np.ndarray
    iterations: np.ndarray
    residual: np.ndarray
    spd: np.ndarray
    clamped: np.ndarray

    @property
    def n_voxels(self) -> int:
        return self.tensors.shape[0]

    def failure_fraction(self) -> float:
        return float(1.0 - np.mean(self.converged))


def _as_signal_matrix(signals: np.ndarray, design: np.ndarray) -> np.ndarray:
    signals = np.asarray(signals, dtype=float)
    if signals.ndim == 1:
        signals = signals[None, :]
    if signals.ndim != 2 or signals.shape[1] != design.shape[0]:
        raise DomainError(
            "signals must have shape (n, %d), got %r" % (design.shape[0], signals.shape)
        )
    check_finite(signals, "signals")
    return signals


def _check_design(design: np.ndarray) -> np.ndarray:
    design = np.asarray(design, dtype=float)
    if design.ndim != 2 or design.shape[1] != 6:
        raise DomainError("design must have shape (m, 6), got %r" % (design.shape,))
    if design.shape[0] < 6:
        raise DomainError("need at least 6 measurements to fit a tensor")
    check_finite(design, "design")
    return design


def _spd_flags(tensors: np.ndarray) -> np.ndarray:
    eigvals = np.linalg.eigvalsh(sym6_to_mat(tensors))
    return eigvals[..., 0] > 0.0


def project_spd(tensors: np.ndarray, floor_factor: float = SPD_PROJECTION_FLOOR):
    """Project 6-vector tensors onto the SPD cone by flooring eigenvalues.

    The floor is ``floor_factor * trace / 3`` for positive-trace tensors
    and ``floor_factor`` outright otherwise. Returns the projected array
    and a boolean mask of rows that changed.
    """
    tensors = np.asarray(tensors, dtype=float)
    mats = sym6_to_mat(tensors)
    eigvals, eigvecs = np.linalg.eigh(mats)
    trace = np.trace(mats, axis1=-2, axis2=-1)
    floor = np.where(trace > 0.0, floor_factor * trace / 3.0, floor_factor)
    changed = eigvals[..., 0] < floor
    if not np.any(changed):
        return tensors.copy(), changed
    clipped = np.maximum(eigvals, floor[..., None])
    fixed = np.einsum("...ij,...j,...kj->...ik", eigvecs, clipped, eigvecs)
    out = tensors.copy()
    out[changed] = mat_to_sym6(fixed[changed])
    return out, changed


def fit_linear(signals: np.ndarray, design: np.ndarray, s0: float) -> FitResult:
    """Least-squares fit of ``log(s0) - log(s_b) = x_b . d``.

    Signals at or below ``1e-12 * s0`` are clamped to that floor before
    the log; the number of clamped entries per voxel is reported.
    """
    design = _check_design(design)
    signals = _as_signal_matrix(signals, design)
    if s0 <= 0.0:
        raise DomainError("s0 must be positive")
    floor = SIGNAL_FLOOR_FACTOR * s0
    clamped = np.sum(signals < floor, axis=1).astype(np.int64)
    z = np.log(s0) - np.log(np.maximum(signals, floor))
    gram = design.T @ design
    tensors = np.linalg.solve(gram, design.T @ z.T).T
    n = signals.shape[0]
    return FitResult(
        tensors=tensors,
        method="linear",
        converged=np.ones(n, dtype=bool),
        iterations=np.zeros(n, dtype=np.int64),
        residual=np.zeros(n, dtype=float),
        spd=_spd_flags(tensors),
        clamped=clamped,
    )


def fit_nonlinear(
    signals: np.ndarray,
    design: np.ndarray,
    s0: float,
    tol: float = 1e-10,
    max_iter: int = 100,
    max_halvings: int = 50,
    init: np.ndarray | None = None,
) -> FitResult:
    """Gauss-Newton least squares on the raw signals.

    Minimizes ``sum_b (s_b - s0 exp(-x_b . d))^2`` per voxel. The score
    ``sum_b (s_b - sbar_b) sbar_b x_b`` vanishes at a stationary point;
    convergence requires every component below ``tol * s0**2``. Voxels
    that exhaust ``max_iter`` or stall in the line search are returned
    with ``converged=False`` rather than raising.
    """
    design = _check_design(design)
    signals = _as_signal_matrix(signals, design)
    if s0 <= 0.0:
        raise DomainError("s0 must be positive")
    if init is None:
        start = fit_linear(signals, design, s0)
        tensors = start.tensors.copy()
        clamped = start.clamped
    else:
        tensors = np.array(init, dtype=float)
        if tensors.ndim == 1:
            tensors = np.tile(tensors, (signals.shape[0], 1))
        clamped = np.zeros(signals.shape[0], dtype=np.int64)

    n = signals.shape[0]
    threshold = tol * s0**2
    converged = np.zeros(n, dtype=bool)
    iterations = np.zeros(n, dtype=np.int64)
    residual = np.full(n, np.inf)

    def sse_and_score(d, sig):
        sbar = s0 * np.exp(-d @ design.T)
        r = sig - sbar
        score = (r * sbar) @ design
        return sbar, np.sum(r * r, axis=1), score

    active = np.arange(n)
    d_act = tensors.copy()
    sig_act = signals
    sbar, sse, score = sse_and_score(d_act, sig_act)
    for it in range(max_iter):
        resid = np.max(np.abs(score), axis=1)
        done = resid <= threshold
        if np.any(done):
            idx = active[done]
            tensors[idx] = d_act[done]
            converged[idx] = True
            iterations[idx] = it
            residual[idx] = resid[done]
            keep = ~done
            active = active[keep]
            if active.size == 0:
                break
            d_act = d_act[keep]
            sig_act = sig_act[keep]
            sbar = sbar[keep]
            sse = sse[keep]
            score = score[keep]
        gram = np.einsum("vb,bi,bj->vij", sbar**2, design, design)
        try:
            step = -np.linalg.solve(gram, score[..., None])[..., 0]
        except np.linalg.LinAlgError:
            ridge = 1e-12 * np.trace(gram, axis1=1, axis2=2)[:, None, None] * np.eye(6)
            step = -np.linalg.solve(gram + ridge, score[..., None])[..., 0]
        # SSE gradient is +2*score, so the Gauss-Newton step is -gram^{-1} score
        scale = np.ones(len(active))
        stalled = np.zeros(len(active), dtype=bool)
        pending = np.ones(len(active), dtype=bool)
        cur_resid = np.max(np.abs(score), axis=1)
        # SSE evaluations carry rounding noise of order eps * sum(s^2); near
        # the optimum the true decrease sinks below it, so accept steps whose
        # SSE stays within that floor as long as the score still shrinks
        sse_floor = 32.0 * np.finfo(float).eps * (
            np.sum(sig_act * sig_act, axis=1) + sse
        )
        new_d = d_act.copy()
        for _ in range(max_halvings + 1):
            rows = np.nonzero(pending)[0]
            trial = d_act[rows] + scale[rows, None] * step[rows]
            sbar_t = s0 * np.exp(-trial @ design.T)
            sse_t = np.sum((sig_act[rows] - sbar_t) ** 2, axis=1)
            ok = sse_t < sse[rows]
            tie = ~ok & (sse_t <= sse[rows] + sse_floor[rows])
            if np.any(tie):
                r_t = sig_act[rows[tie]] - sbar_t[tie]
                score_t = (r_t * sbar_t[tie]) @ design
                ok[tie] = np.max(np.abs(score_t), axis=1) < cur_resid[rows[tie]]
            good = rows[ok]
            new_d[good] = trial[ok]
            pending[good] = False
            if not np.any(pending):
                break
            scale[pending] *= 0.5
        else:
            stalled = pending.copy()
        d_act = new_d
        sbar, sse, score = sse_and_score(d_act, sig_act)
        if np.any(stalled):
            resid = np.max(np.abs(score), axis=1)
            idx = active[stalled]
            tensors[idx] = d_act[stalled]
            iterations[idx] = it + 1
            residual[idx] = resid[stalled]
            converged[idx] = resid[stalled] <= threshold
            keep = ~stalled
            active = active[keep]
            if active.size == 0:
                break
            d_act = d_act[keep]
            sig_act = sig_act[keep]
            sbar = sbar[keep]
            sse = sse[keep]
            score = score[keep]
    if active.size:
        resid = np.max(np.abs(score), axis=1)
        tensors[active] = d_act
        iterations[active] = max_iter
        residual[active] = resid
        converged[active] = resid <= threshold
    return FitResult(
        tensors=tensors,
        method="nonlinear",
        converged=converged,
        iterations=iterations,
        residual=residual,
        spd=_spd_flags(tensors),
        clamped=clamped,
    )


def fit_mle(
    signals: np.ndarray,
    design: np.ndarray,
    s0: float,
    sigma: float,
    tol: float = 1e-8,
    max_iter: int = 100,
    max_halvings: int = 50,
    init: np.ndarray | None = None,
) -> FitResult:
    """Maximum likelihood under Rician magnitude noise.

    Newton ascent with Levenberg damping and step halving, started from
    the Gauss-Newton estimate. Per-signal derivatives of the
    log-likelihood in the noiseless amplitude ``zeta_b``:

    ``dl/dzeta = -zeta/sigma^2 + (s/sigma^2) F(s zeta / sigma^2)``

    with ``F`` the ratio I1/I0; the chain rule through
    ``dzeta/dd = -zeta x_b`` gives the score and Hessian in ``d``.
    Convergence requires every score component below
    ``tol * s0**2 / sigma**2``.
    """
    design = _check_design(design)
    signals = _as_signal_matrix(signals, design)
    if s0 <= 0.0 or sigma <= 0.0:
        raise DomainError("s0 and sigma must be positive")
    if init is None:
        start = fit_nonlinear(signals, design, s0)
        tensors = start.tensors.copy()
        clamped = start.clamped
    else:
        tensors = np.array(init, dtype=float)
        if tensors.ndim == 1:
            tensors = np.tile(tensors, (signals.shape[0], 1))
        clamped = np.zeros(signals.shape[0], dtype=np.int64)

    n = signals.shape[0]
    sig2 = sigma**2
    threshold = tol * s0**2 / sig2

    def loglik_score_hess(d, sig, want_hess=True):
        zeta = s0 * np.exp(-d @ design.T)
        t = sig * zeta / sig2
        ratio = bessel_ratio(t)
        # log density up to terms constant in d
        ll = np.sum(-((sig - zeta) ** 2) / (2.0 * sig2) + np.log(i0e(t)), axis=1)
        dl = -zeta / sig2 + (sig / sig2) * ratio
        score = -np.einsum("vb,bi->vi", dl * zeta, design)
        if not want_hess:
            return ll, score, None
        d2l = -1.0 / sig2 + (sig**2 / sig2**2) * bessel_ratio_derivative(t)
        w = d2l * zeta**2 + dl * zeta
        hess = np.einsum("vb,bi,bj->vij", w, design, design)
        return ll, score, hess

    converged = np.zeros(n, dtype=bool)
    iterations = np.zeros(n, dtype=np.int64)
    residual = np.full(n, np.inf)
    active = np.arange(n)
    d_act = tensors.copy()
    sig_act = signals
    ll, score, hess = loglik_score_hess(d_act, sig_act)
    eye = np.eye(6)
    for it in range(max_iter):
        resid = np.max(np.abs(score), axis=1)
        done = resid <= threshold
        if np.any(done):
            idx = active[done]
            tensors[idx] = d_act[done]
            converged[idx] = True
            iterations[idx] = it
            residual[idx] = resid[done]
            keep = ~done
            active = active[keep]
            if active.size == 0:
                break
            d_act, sig_act = d_act[keep], sig_act[keep]
            ll, score, hess = ll[keep], score[keep], hess[keep]
        # Newton direction on -hess; damp until it is an ascent direction
        step = np.empty_like(score)
        diag_scale = np.maximum(
            np.abs(np.diagonal(hess, axis1=1, axis2=2)).max(axis=1), 1e-300
        )
        solved = np.zeros(len(active), dtype=bool)
        try:
            cand = np.linalg.solve(-hess, score[..., None])[..., 0]
            solved = np.einsum("vi,vi->v", cand, score) > 0.0
            step[solved] = cand[solved]
        except np.linalg.LinAlgError:
            pass
        for v in np.nonzero(~solved)[0]:
            lam = 0.0
            for _ in range(60):
                try:
                    cand_v = np.linalg.solve(-hess[v] + lam * eye, score[v])
                except np.linalg.LinAlgError:
                    cand_v = None
                if cand_v is not None and np.dot(cand_v, score[v]) > 0.0:
                    step[v] = cand_v
                    break
                lam = max(lam * 10.0, 1e-8 * diag_scale[v])
            else:
                step[v] = score[v] / diag_scale[v]
        scale = np.ones(len(active))
        pending = np.ones(len(active), dtype=bool)
        stalled = np.zeros(len(active), dtype=bool)
        new_d = d_act.copy()
        new_ll = ll.copy()
        for _ in range(max_halvings + 1):
            trial = d_act[pending] + scale[pending, None] * step[pending]
            ll_t, _, _ = loglik_score_hess(trial, sig_act[pending], want_hess=False)
            ok = ll_t > ll[pending]
            rows = np.nonzero(pending)[0]
            good = rows[ok]
            new_d[good] = trial[ok]
            new_ll[good] = ll_t[ok]
            pending[good] = False
            if not np.any(pending):
                break
            scale[pending] *= 0.5
        else:
            stalled = pending.copy()
        d_act = new_d
        ll, score, hess = loglik_score_hess(d_act, sig_act)
        if np.any(stalled):
            resid = np.max(np.abs(score), axis=1)
            idx = active[stalled]
            tensors[idx] = d_act[stalled]
            iterations[idx] = it + 1
            residual[idx] = resid[stalled]
            converged[idx] = resid[stalled] <= threshold
            keep = ~stalled
            active = active[keep]
            if active.size == 0:
                break
            d_act, sig_act = d_act[keep], sig_act[keep]
            ll, score, hess = ll[keep], score[keep], hess[keep]
    if active.size:
        resid = np.max(np.abs(score), axis=1)
        tensors[active] = d_act
        iterations[active] = max_iter
        residual[active] = resid
        converged[active] = resid <= threshold
    return FitResult(
        tensors=tensors,
        method="mle",
        converged=converged,
        iterations=iterations,
        residual=residual,
        spd=_spd_flags(tensors),
        clamped=clamped,
    )


FIT_METHODS = ("linear", "nonlinear", "mle")


def fit_tensors(
    signals: np.ndarray,
    design: np.ndarray,
    s0: float,
    method: str = "nonlinear",
    sigma: float | None = None,
    **kwargs,
) -> FitResult:
    """Dispatch to one of the fitters by name."""
    if method == "linear":
        return fit_linear(signals, design, s0)
    if method == "nonlinear":
        return fit_nonlinear(signals, design, s0, **kwargs)
    if method == "mle":
        if sigma is None:
            raise DomainError("mle fitting requires sigma")
        return fit_mle(signals, design, s0, sigma, **kwargs)
    raise DomainError("unknown fit method %r; expected one of %r" % (method, FIT_METHODS))


def asymptotic_quantities(d0: np.ndarray, design: np.ndarray, s0: float) -> dict:
    """Leading-order moments of the linear and nonlinear estimators.

    For noise level ``sigma`` to leading order:

    - ``Var(d_linear) = sigma^2 * var_ls``
    - ``Var(d_nonlinear) = sigma^2 * var_nl``
    - ``E(d_nonlinear) - d0 = sigma^2 * bias_nl``

    ``var_ls - var_nl`` is positive semidefinite, with equality when the
    noiseless signals are all equal.
    """
    design = _check_design(design)
    d0 = np.asarray(d0, dtype=float)
    sbar = s0 * np.exp(-design @ d0)
    gram = design.T @ design
    gram_inv = np.linalg.inv(gram)
    w2 = np.einsum("b,bi,bj->ij", sbar**2, design, design)
    w2_inv = np.linalg.inv(w2)
    mid = np.einsum("b,bi,bj->ij", sbar**-2, design, design)
    var_ls = gram_inv @ mid @ gram_inv
    leverage = np.einsum("bi,ij,bj->b", design, w2_inv, design)
    bias_vec = np.einsum("b,bi->i", 1.0 - sbar**2 * leverage, design)
    bias_nl = -0.5 * w2_inv @ bias_vec
    return {"var_ls": var_ls, "var_nl": w2_inv, "bias_nl": bias_nl}


def expected_log_noncentral_chi2(c: float) -> float:
    """E[log(r + c)] for r ~ chi-square with 2 degrees of freedom."""
    if c < 0.0:
        raise DomainError("c must be nonnegative")
    val, _ = quad(lambda u: np.log(u + c) * 0.5 * np.exp(-u / 2.0), 0.0, np.inf)
    return val


def low_snr_ls_bias(
    d0: np.ndarray, design: np.ndarray, s0: float, sigma: float, cut: float = 1.0
) -> dict:
    """Limit of the log-linear estimator when some signals drown in noise.

    Measurements with noiseless amplitude below ``cut * sigma`` carry no
    directional information; their log-signal expectation is
    ``log(sigma) + E[log(chi2_2 + sbar^2/sigma^2)] / 2``. The remaining
    measurements recover ``x_b . d0`` exactly. Returns the resulting
    mean shift of the estimate and the uninformative-measurement mask.
    """
    design = _check_design(design)
    d0 = np.asarray(d0, dtype=float)
    if s0 <= 0.0 or sigma <= 0.0:
        raise DomainError("s0 and sigma must be positive")
    sbar = s0 * np.exp(-design @ d0)
    lost = sbar < cut * sigma
    gram_inv = np.linalg.inv(design.T @ design)
    if not np.any(lost):
        return {"bias": np.zeros(6), "lost": lost}
    xs = design[lost]
    gram_lost = xs.T @ xs
    elog = np.array(
        [expected_log_noncentral_chi2((sb / sigma) ** 2) for sb in sbar[lost]]
    )
    rhs = -gram_lost @ d0 + np.einsum(
        "b,bi->i", np.log(s0 / sigma) - 0.5 * elog, xs
    )
    return {"bias": gram_inv @ rhs, "lost": lost}
