"""Numerical verification suites for the expansion and asymptotic claims.

Four families of checks:

- perturbation grid: expansion residuals of the geometric-mean formulas
  must decay like t^3 (halving t divides the residual by about 8), with
  exactness anchors for commuting and isotropic ensembles;
- Fisher/Bessel: the scaled Fisher information lies in (0, 1), tends to 1
  at high SNR, and the information matrix collapses to the nonlinear
  least-squares normal matrix as sigma -> 0;
- regression Monte Carlo: empirical variance and bias of the linear and
  nonlinear fitters against their leading-order formulas;
- signal bias: the closed-form Rician magnitude bias against simulation.

Each suite returns plain dicts/rows so the CLI can serialize them and
tests can assert on them directly.
"""

from __future__ import annotations

import zlib

import numpy as np

from .means import mean_affine_fixed_point, mean_log_euclidean
from .noise import default_scheme
from .perturbation import (
    FAMILY_STYLES,
    expansion_affine,
    expansion_log_euclidean,
    affine_mean_prediction,
    logdet_expansions,
    make_family,
    mean_spectrum,
)
from .regression import asymptotic_quantities, fit_linear, fit_mle, fit_nonlinear
from .rician import dwi_signal_bias, fisher_matrix, fisher_scalar
from .spd import mat_log
from .validation import DomainError, mat_to_sym6

T_GRID = (0.1, 0.05, 0.025)
ORDER3_WINDOW = (6.0, 10.0)
ORDER2_WINDOW = (3.0, 5.0)

VERIFY_BASES = {
    "identity": np.eye(3),
    "diag(3,2,1)": np.diag([3.0, 2.0, 1.0]),
    "diag(0.25,16,0.25)": np.diag([0.25, 16.0, 0.25]),
}


def _stream(master_seed: int, purpose: str) -> np.random.Generator:
    key = zlib.crc32(purpose.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence((master_seed, key)))


def _logdet(mat: np.ndarray) -> float:
    sign, value = np.linalg.slogdet(mat)
    if sign <= 0:
        raise DomainError("log-determinant of a non-SPD matrix")
    return float(value)


def _family_residuals(fam, spec) -> dict[str, float]:
    """Frobenius residuals of every applicable expansion for one family."""
    log_mean = mat_log(fam.mean)
    le_mean = mean_log_euclidean(fam.members)
    aff_mean = mean_affine_fixed_point(fam.members, tol=1e-12)
    exact_le = mat_log(le_mean) - log_mean
    exact_aff = mat_log(aff_mean) - log_mean
    out = {}
    if spec.isotropic or spec.simple:
        pred_le = expansion_log_euclidean(fam, spec)
        aff = expansion_affine(fam, spec)
        out["prop1_log_le"] = float(np.linalg.norm(exact_le - pred_le))
        out["prop2_log_aff"] = float(np.linalg.norm(exact_aff - aff["log_prediction"]))
        out["prop2_mean_aff"] = float(np.linalg.norm(aff_mean - aff["mean_prediction"]))
        logdets = logdet_expansions(fam, spec)
        out["remark1_logdet_le"] = abs(
            _logdet(le_mean) - _logdet(fam.mean) - logdets["le"]
        )
        out["remark2_logdet_aff"] = abs(
            _logdet(aff_mean) - _logdet(fam.mean) - logdets["aff"]
        )
        if spec.isotropic:
            out["remark3_pred_identity"] = float(
                np.linalg.norm(pred_le - aff["log_prediction"])
            )
    else:
        out["prop2_mean_aff"] = float(
            np.linalg.norm(aff_mean - affine_mean_prediction(fam))
        )
    if fam.style == "multiplicative":
        out["remark4_commuting_anchor"] = float(np.linalg.norm(le_mean - aff_mean))
    return out


def _case_of(spec) -> str:
    if spec.isotropic:
        return "isotropic"
    if spec.simple:
        return "simple"
    return "mixed"


ANCHOR_TOLS = {
    "remark3_pred_identity": 1e-13,
    "remark4_commuting_anchor": 1e-11,
}

# Remark-level determinant expansions carry an absolute third-order bound
# instead of a ratio window: their t^3 trace coefficient can be accidentally
# tiny, which makes halving ratios noisy without weakening the order claim.
LOGDET_PROPS = ("remark1_logdet_le", "remark2_logdet_aff")
LOGDET_BOUND = 10.0


def perturbation_grid(
    family_size: int = 64,
    master_seed: int = 2,
    t_grid: tuple = T_GRID,
) -> list[dict]:
    """Expansion-order rows for every base x style x t combination.

    One seed per (base, style) is reused across the t grid, so additive
    families scale exactly with t and residual ratios isolate the
    remainder order. Anchors (commuting and isotropic identities) get
    absolute thresholds instead of ratios.
    """
    rows = []
    for base_name, base in VERIFY_BASES.items():
        for style in FAMILY_STYLES:
            purpose = "family|%s|%s" % (base_name, style)
            residuals: dict[str, list[float]] = {}
            cases = []
            bias_norms = []
            for t in t_grid:
                rng = _stream(master_seed, purpose)
                fam = make_family(base, t, family_size, style, rng)
                spec = mean_spectrum(fam.mean)
                cases.append(_case_of(spec))
                for name, value in _family_residuals(fam, spec).items():
                    residuals.setdefault(name, []).append(value)
                if style == "multiplicative":
                    bias_norms.append(float(np.linalg.norm(fam.mean - base)))
            case = cases[0]
            for name, series in residuals.items():
                if name in ANCHOR_TOLS:
                    for t, value in zip(t_grid, series):
                        rows.append(
                            {
                                "proposition": name,
                                "case": case,
                                "base": base_name,
                                "style": style,
                                "t": t,
                                "residual": value,
                                "ratio_vs_half_t": "",
                                "pass": value < ANCHOR_TOLS[name],
                            }
                        )
                    continue
                for i, (t, value) in enumerate(zip(t_grid, series)):
                    ratio = value / series[i + 1] if i + 1 < len(series) else ""
                    if name in LOGDET_PROPS:
                        ok = value < LOGDET_BOUND * t**3
                    elif ratio != "":
                        ok = ORDER3_WINDOW[0] <= ratio <= ORDER3_WINDOW[1]
                    else:
                        ok = True
                    rows.append(
                        {
                            "proposition": name,
                            "case": case,
                            "base": base_name,
                            "style": style,
                            "t": t,
                            "residual": value,
                            "ratio_vs_half_t": ratio,
                            "pass": ok,
                        }
                    )
            if style == "multiplicative":
                for i, (t, value) in enumerate(zip(t_grid, bias_norms)):
                    if i + 1 < len(bias_norms):
                        ratio = value / bias_norms[i + 1]
                        ok = ORDER2_WINDOW[0] <= ratio <= ORDER2_WINDOW[1]
                    else:
                        ratio = ""
                        ok = True
                    rows.append(
                        {
                            "proposition": "remark4_mean_bias",
                            "case": case,
                            "base": base_name,
                            "style": style,
                            "t": t,
                            "residual": value,
                            "ratio_vs_half_t": ratio,
                            "pass": ok,
                        }
                    )
    return rows


def mixed_case_guard(master_seed: int = 2, family_size: int = 64) -> bool:
    """The log expansions must refuse the mixed-multiplicity case."""
    rng = _stream(master_seed, "family|guard")
    fam = make_family(
        VERIFY_BASES["diag(0.25,16,0.25)"], 0.05, family_size, "additive_symmetric", rng
    )
    spec = mean_spectrum(fam.mean)
    for fn in (expansion_log_euclidean, expansion_affine):
        try:
            fn(fam, spec)
        except DomainError:
            continue
        return False
    return True


DEFAULT_D0 = np.array([0.7, 2.0, 0.7, 0.0, 0.0, 0.0])


def fisher_suite(s0: float = 10.0, sigma_small: float = 1e-3) -> dict:
    """Scaled-information range/limit checks and the sigma -> 0 collapse."""
    grid = np.array([0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0])
    scaled = np.array([fisher_scalar(w, 1.0) for w in grid])
    in_range = bool(np.all((scaled > 0.0) & (scaled < 1.0)))
    high_snr = abs(scaled[-1] - 1.0)
    design = default_scheme().design_matrix()
    info = fisher_matrix(DEFAULT_D0, design, s0, sigma_small)
    sbar = s0 * np.exp(-design @ DEFAULT_D0)
    target = np.einsum("b,bi,bj->ij", sbar**2, design, design)
    collapse = float(
        np.linalg.norm(sigma_small**2 * info - target) / np.linalg.norm(target)
    )
    return {
        "snr_grid": grid,
        "scaled_information": scaled,
        "in_unit_interval": in_range,
        "high_snr_gap": float(high_snr),
        "high_snr_pass": bool(high_snr <= 1e-3),
        "collapse_relative_error": collapse,
        "collapse_pass": bool(collapse <= 0.01),
    }


def variance_order_suite(n_tensors: int = 50, master_seed: int = 2,
                         s0: float = 10.0) -> dict:
    """var_ls - var_nl must be positive semidefinite; equal when isotropic."""
    rng = _stream(master_seed, "variance-order")
    design = default_scheme().design_matrix()
    min_eigs = []
    for _ in range(n_tensors):
        w = rng.standard_normal((3, 3))
        d_mat = w @ w.T + 0.05 * np.eye(3)
        d_mat *= 1.0 / np.trace(d_mat) * rng.uniform(0.5, 6.0)
        quant = asymptotic_quantities(mat_to_sym6(d_mat), design, s0)
        gap = quant["var_ls"] - quant["var_nl"]
        scale = np.linalg.norm(quant["var_ls"])
        min_eigs.append(np.linalg.eigvalsh(gap)[0] / scale)
    min_eigs = np.array(min_eigs)
    iso = asymptotic_quantities(mat_to_sym6(0.8 * np.eye(3)), design, s0)
    iso_gap = float(
        np.linalg.norm(iso["var_ls"] - iso["var_nl"]) / np.linalg.norm(iso["var_ls"])
    )
    return {
        "min_relative_eigenvalues": min_eigs,
        "psd_pass": bool(min_eigs.min() > -1e-10),
        "isotropic_equality_gap": iso_gap,
        "isotropic_pass": bool(iso_gap < 1e-12),
    }


def _rician_draws(sbar: np.ndarray, sigma: float, rng: np.random.Generator,
                  n: int) -> np.ndarray:
    e1 = rng.standard_normal((n, sbar.size))
    e2 = rng.standard_normal((n, sbar.size))
    return np.hypot(sbar[None, :] + sigma * e1, sigma * e2)


def _mc_moments(fit_fn, sbar, sigma, replicates, rng, chunk=100_000):
    n_done = 0
    total = np.zeros(6)
    outer = np.zeros((6, 6))
    while n_done < replicates:
        n = min(chunk, replicates - n_done)
        signals = _rician_draws(sbar, sigma, rng, n)
        est = fit_fn(signals)
        total += est.sum(axis=0)
        outer += est.T @ est
        n_done += n
    mean = total / replicates
    cov = (outer - replicates * np.outer(mean, mean)) / (replicates - 1)
    return mean, cov


def regression_mc_suite(
    var_replicates: int = 100_000,
    bias_replicates: int = 1_000_000,
    master_seed: int = 2,
    s0: float = 10.0,
    sigma_var: float = 0.01,
    sigma_bias: float = 0.2,
    d0: np.ndarray = DEFAULT_D0,
) -> dict:
    """Monte Carlo variance and bias of the fitters against their formulas."""
    design = default_scheme().design_matrix()
    sbar = s0 * np.exp(-design @ d0)
    quant = asymptotic_quantities(d0, design, s0)

    rng = _stream(master_seed, "mc-variance")
    mean_ls, cov_ls = _mc_moments(
        lambda sig: fit_linear(sig, design, s0).tensors,
        sbar, sigma_var, var_replicates, rng,
    )
    rng = _stream(master_seed, "mc-variance")
    mean_nl, cov_nl = _mc_moments(
        lambda sig: fit_nonlinear(sig, design, s0).tensors,
        sbar, sigma_var, var_replicates, rng,
    )
    var_ls_err = np.abs(
        np.diag(cov_ls) / sigma_var**2 - np.diag(quant["var_ls"])
    ) / np.diag(quant["var_ls"])
    var_nl_err = np.abs(
        np.diag(cov_nl) / sigma_var**2 - np.diag(quant["var_nl"])
    ) / np.diag(quant["var_nl"])

    rng = _stream(master_seed, "mc-bias")
    mean_b, cov_b = _mc_moments(
        lambda sig: fit_nonlinear(sig, design, s0).tensors,
        sbar, sigma_bias, bias_replicates, rng,
    )
    emp_bias = (mean_b - d0) / sigma_bias**2
    se = np.sqrt(np.diag(cov_b) / bias_replicates) / sigma_bias**2
    testable = np.abs(emp_bias) > 3.0 * se
    bias_rel_err = np.where(
        quant["bias_nl"] != 0.0,
        np.abs(emp_bias - quant["bias_nl"]) / np.abs(quant["bias_nl"]),
        np.abs(emp_bias - quant["bias_nl"]),
    )
    bias_pass = bool(np.all(bias_rel_err[testable] <= 0.15)) if testable.any() else True
    return {
        "var_ls_relative_errors": var_ls_err,
        "var_nl_relative_errors": var_nl_err,
        "var_pass": bool(max(var_ls_err.max(), var_nl_err.max()) <= 0.05),
        "empirical_bias": emp_bias,
        "predicted_bias": quant["bias_nl"],
        "bias_standard_errors": se,
        "bias_testable": testable,
        "bias_relative_errors": bias_rel_err,
        "bias_pass": bias_pass,
    }


def mle_mc_suite(
    replicates: int = 20_000,
    master_seed: int = 2,
    s0: float = 10.0,
    sigma: float = 0.05,
    d0: np.ndarray = DEFAULT_D0,
) -> dict:
    """Monte Carlo variance of the likelihood fitter against the NL asymptote."""
    design = default_scheme().design_matrix()
    sbar = s0 * np.exp(-design @ d0)
    quant = asymptotic_quantities(d0, design, s0)
    rng = _stream(master_seed, "mc-mle")
    _, cov = _mc_moments(
        lambda sig: fit_mle(sig, design, s0, sigma).tensors,
        sbar, sigma, replicates, rng, chunk=10_000,
    )
    rel_err = np.abs(
        np.diag(cov) / sigma**2 - np.diag(quant["var_nl"])
    ) / np.diag(quant["var_nl"])
    return {
        "relative_errors": rel_err,
        "pass": bool(rel_err.max() <= 0.10),
    }


def signal_bias_suite(
    replicates: int = 1_000_000,
    master_seed: int = 2,
    sigma: float = 1.0,
    snr_grid: tuple = (0.0, 0.5, 1.0, 2.0, 5.0),
) -> dict:
    """Closed-form magnitude bias versus simulation on an SNR grid."""
    rng = _stream(master_seed, "signal-bias")
    rows = []
    ok = True
    for w in snr_grid:
        sbar = w * sigma
        draws = np.hypot(
            sbar + sigma * rng.standard_normal(replicates),
            sigma * rng.standard_normal(replicates),
        )
        mc_bias = float(draws.mean() - sbar)
        se = float(draws.std(ddof=1) / np.sqrt(replicates))
        pred = float(dwi_signal_bias(np.array(sbar), sigma))
        gap_in_se = abs(pred - mc_bias) / se
        rows.append(
            {
                "snr": w,
                "predicted": pred,
                "monte_carlo": mc_bias,
                "standard_error": se,
                "gap_in_se": gap_in_se,
                "pass": bool(gap_in_se <= 4.0),
            }
        )
        ok = ok and rows[-1]["pass"]
    return {"rows": rows, "pass": ok}


def run_all_suites(config) -> tuple[dict, bool]:
    """Every suite at the configured sizes; (payload, all passed)."""
    seed = config.seeds[0]
    pert_rows = perturbation_grid(config.family_size, seed)
    guard_ok = mixed_case_guard(seed, config.family_size)
    fisher = fisher_suite(s0=config.s0)
    order = variance_order_suite(master_seed=seed, s0=config.s0)
    reg = regression_mc_suite(
        var_replicates=config.var_replicates,
        bias_replicates=config.bias_replicates,
        master_seed=seed,
        s0=config.s0,
    )
    mle = mle_mc_suite(
        replicates=config.mle_replicates, master_seed=seed, s0=config.s0
    )
    bias = signal_bias_suite(master_seed=seed)
    ok = (
        all(row["pass"] for row in pert_rows if row["pass"] != "")
        and guard_ok
        and fisher["in_unit_interval"]
        and fisher["high_snr_pass"]
        and fisher["collapse_pass"]
        and order["psd_pass"]
        and order["isotropic_pass"]
        and reg["var_pass"]
        and reg["bias_pass"]
        and mle["pass"]
        and bias["pass"]
    )
    payload = {
        "perturbation": pert_rows,
        "mixed_case_guard": guard_ok,
        "fisher": fisher,
        "variance_order": order,
        "regression_mc": reg,
        "mle_mc": mle,
        "signal_bias": bias,
    }
    return payload, ok
