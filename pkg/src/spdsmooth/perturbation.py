"""Second-order expansions of geometric means under small perturbations.

Builds finite ensembles ``S_i = S_bar + B_i`` whose perturbations have an
exactly zero ensemble mean and operator norms bounded by ``t / C``, where
``C`` is the spectral constant ``max(max_j 1/lambda_j,
max_{k != j} 1/|lambda_k - lambda_j|)`` of the ensemble mean (``1/lambda_1``
in the isotropic case). For such ensembles the log-Euclidean and
affine-invariant means admit closed-form expansions around the Euclidean
mean with third-order remainders; this module evaluates the expansion
terms so tests can confirm the remainder order by halving ``t``.

Two ensemble styles are provided: dense symmetric additive perturbations,
and multiplicative spectral perturbations ``G diag(delta_j e^{Z_j}) G^T``
that scale each eigenvalue while keeping a common eigenframe.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spd import _symmetrize, mat_log, sym_eig
from .validation import DomainError, check_spd

CLUSTER_TOL = 1e-9
GAP_FACTOR = 10.0
FAMILY_STYLES = ("additive_symmetric", "multiplicative")


@dataclass(frozen=True)
class MeanSpectrum:
    """Distinct-eigenvalue decomposition of an ensemble mean.

    ``eigenvalues`` are the distinct eigenvalues in decreasing order,
    ``projections[j]`` the eigenprojection onto the j-th eigenspace and
    ``resolvents[j]`` the reduced resolvent
    ``H_j = sum_{k != j} (lambda_k - lambda_j)^{-1} P_k``, so that
    ``P_j H_j = H_j P_j = 0``.
    """

    eigenvalues: np.ndarray
    multiplicities: np.ndarray
    projections: np.ndarray
    resolvents: np.ndarray
    constant: float
    isotropic: bool

    @property
    def simple(self) -> bool:
        """True when every distinct eigenvalue has multiplicity one."""
        return bool(np.all(self.multiplicities == 1))


@dataclass(frozen=True)
class PerturbationFamily:
    """Finite ensemble with exact mean and bounded spread.

    ``mean`` is the exact Euclidean ensemble mean, ``spread`` the bound
    parameter t of the construction: every perturbation ``S_i - mean``
    has operator norm below ``t / constant``.
    """

    members: np.ndarray
    mean: np.ndarray
    spread: float
    style: str
    constant: float

    @property
    def size(self) -> int:
        return self.members.shape[0]

    def perturbations(self) -> np.ndarray:
        return self.members - self.mean


def mean_spectrum(mean: np.ndarray, cluster_tol: float = CLUSTER_TOL) -> MeanSpectrum:
    """Group the eigenvalues of an SPD mean into distinct clusters.

    Eigenvalues closer than ``cluster_tol`` times the spectral radius are
    treated as one distinct eigenvalue.
    """
    mean = check_spd(np.asarray(mean, dtype=float), name="mean")
    eig = sym_eig(mean)
    lam, vec = eig.values, eig.vectors
    scale = lam[0]
    groups: list[list[int]] = [[0]]
    for i in range(1, lam.size):
        if lam[groups[-1][0]] - lam[i] <= cluster_tol * scale:
            groups[-1].append(i)
        else:
            groups.append([i])
    g = len(groups)
    values = np.array([lam[idx].mean() for idx in groups])
    mult = np.array([len(idx) for idx in groups])
    proj = np.zeros((g, mean.shape[0], mean.shape[0]))
    for j, idx in enumerate(groups):
        v = vec[:, idx]
        proj[j] = v @ v.T
    resolv = np.zeros_like(proj)
    for j in range(g):
        for k in range(g):
            if k != j:
                resolv[j] += proj[k] / (values[k] - values[j])
    if g == 1:
        constant = 1.0 / values[0]
    else:
        gaps = np.abs(values[:, None] - values[None, :])[~np.eye(g, dtype=bool)]
        constant = max(1.0 / values.min(), (1.0 / gaps).max())
    return MeanSpectrum(
        eigenvalues=values,
        multiplicities=mult,
        projections=proj,
        resolvents=resolv,
        constant=float(constant),
        isotropic=(g == 1),
    )


def _op_norm(sym: np.ndarray) -> np.ndarray:
    return np.abs(np.linalg.eigvalsh(sym)).max(axis=-1)


def _check_family(members, mean, t, constant):
    if np.linalg.eigvalsh(members)[..., 0].min() <= 0.0:
        raise DomainError("family member is not positive definite; reduce t")
    supnorm = _op_norm(members - mean).max()
    if supnorm >= t / constant:
        raise DomainError(
            "spread condition violated: sup |B| = %g >= t/C = %g" % (supnorm, t / constant)
        )


def make_family(
    mean: np.ndarray,
    t: float,
    size: int,
    style: str,
    rng: np.random.Generator,
    gap_factor: float = GAP_FACTOR,
    diagonal_only: bool = False,
) -> PerturbationFamily:
    """Draw an ensemble of SPD matrices with exact-mean perturbations.

    additive_symmetric: centered symmetric draws rescaled so the largest
    operator norm is ``0.9 t / C``; the ensemble mean is exactly ``mean``.
    With ``diagonal_only`` the draws are diagonal in the eigenbasis of
    ``mean``, producing a commuting ensemble.

    multiplicative: ``G diag(delta_j exp(c_j t u_i)) G^T`` with a shared
    draw vector ``u`` (centered, max-abs one) and ``c_j = 1/(4 C delta_j)``;
    the returned ``mean`` is the ensemble's Euclidean mean, which differs
    from the noiseless base by O(t^2).

    Means whose smallest distinct-eigenvalue gap is below
    ``gap_factor * t`` are rejected: the expansion constant blows up
    there. Because the draws depend only on ``rng``, reusing one seed
    across several ``t`` produces families that scale exactly with ``t``.
    """
    mean = check_spd(np.asarray(mean, dtype=float), name="mean")
    if t < 0.0:
        raise DomainError("t must be nonnegative")
    if size < 2:
        raise DomainError("family size must be at least 2")
    if style not in FAMILY_STYLES:
        raise DomainError("style must be one of %r, got %r" % (FAMILY_STYLES, style))
    base_spec = mean_spectrum(mean)
    if not base_spec.isotropic:
        gaps = np.abs(np.diff(base_spec.eigenvalues))
        if gaps.min() < gap_factor * t:
            raise DomainError(
                "eigenvalue gap %g below %g * t; expansion constants degenerate"
                % (gaps.min(), gap_factor)
            )
    n = mean.shape[0]
    if style == "additive_symmetric":
        if diagonal_only:
            eig = sym_eig(mean)
            d = rng.standard_normal((size, n))
            d -= d.mean(axis=0)
            draws = np.einsum("ij,sj,kj->sik", eig.vectors, d, eig.vectors)
        else:
            draws = _symmetrize(rng.standard_normal((size, n, n)))
            draws -= draws.mean(axis=0)
        if t == 0.0:
            members = np.broadcast_to(mean, (size, n, n)).copy()
            return PerturbationFamily(members, mean.copy(), 0.0, style, base_spec.constant)
        scale = 0.9 * t / (base_spec.constant * _op_norm(draws).max())
        members = mean + scale * draws
        fam_mean = mean.copy()
        constant = base_spec.constant
    else:
        eig = sym_eig(mean)
        delta, frame = eig.values, eig.vectors
        u = rng.uniform(-1.0, 1.0, size=size)
        u -= u.mean()
        u /= np.abs(u).max()
        c = 1.0 / (4.0 * base_spec.constant * delta)
        z = t * u[:, None] * c[None, :]
        members = np.einsum("ij,sj,kj->sik", frame, delta * np.exp(z), frame)
        fam_mean = members.mean(axis=0)
        constant = mean_spectrum(fam_mean).constant
    members = _symmetrize(members)
    if t > 0.0:
        _check_family(members, fam_mean, t, constant)
    return PerturbationFamily(members, fam_mean, float(t), style, float(constant))


def _require_handled_case(spec: MeanSpectrum, what: str) -> None:
    if not (spec.isotropic or spec.simple):
        raise DomainError(
            "%s is stated only for simple or fully degenerate spectra; "
            "mean has multiplicities %s" % (what, spec.multiplicities.tolist())
        )


def expansion_log_euclidean(fam: PerturbationFamily, spec: MeanSpectrum) -> np.ndarray:
    """Predicted ``log S_bar_LE - log S_bar`` through second order.

    Isotropic mean: ``-E(B^2) / (2 lambda_1^2)``. Simple spectrum: the
    full four-group expansion with trace terms, ``log lambda_j`` terms
    and reduced-resolvent products. Mixed multiplicities raise.
    """
    b = fam.perturbations()
    if spec.isotropic:
        lam = spec.eigenvalues[0]
        return -np.mean(b @ b, axis=0) / (2.0 * lam**2)
    _require_handled_case(spec, "log-mean expansion")
    lam = spec.eigenvalues
    out = np.zeros_like(fam.mean)
    for j in range(lam.size):
        pj, hj = spec.projections[j], spec.resolvents[j]
        hj2 = hj @ hj
        pbhb = np.einsum("ab,sbc,cd,sda->s", pj, b, hj, b)
        trpb = np.einsum("ab,sba->s", pj, b)
        term3 = (
            np.einsum("ab,sbc,cd,sde,ef->saf", pj, b, hj, b, hj)
            + np.einsum("ab,sbc,cd,sde,ef->saf", hj, b, pj, b, hj)
            + np.einsum("ab,sbc,cd,sde,ef->saf", hj, b, hj, b, pj)
            - np.einsum("ab,sbc,cd,sde,ef->saf", pj, b, pj, b, hj2)
            - np.einsum("ab,sbc,cd,sde,ef->saf", pj, b, hj2, b, pj)
            - np.einsum("ab,sbc,cd,sde,ef->saf", hj2, b, pj, b, pj)
        )
        term4 = np.einsum("s,sab->sab", trpb, np.einsum("ab,sbc,cd->sad", pj, b, hj))
        term4 = term4 + np.swapaxes(term4, -1, -2)
        out = out + (
            -(1.0 / lam[j]) * pbhb.mean() * pj
            - 0.5 / lam[j] ** 2 * np.mean(trpb**2) * pj
            + np.log(lam[j]) * term3.mean(axis=0)
            - (1.0 / lam[j]) * term4.mean(axis=0)
        )
    return _symmetrize(out)


def affine_mean_prediction(fam: PerturbationFamily) -> np.ndarray:
    """``S_bar - E(B S_bar^{-1} B) / 2``: second-order affine mean, any spectrum."""
    b = fam.perturbations()
    inv = np.linalg.inv(fam.mean)
    return fam.mean - 0.5 * np.mean(b @ inv @ b, axis=0)


def expansion_affine(fam: PerturbationFamily, spec: MeanSpectrum) -> dict:
    """Affine-invariant mean expansions through second order.

    Returns ``mean_prediction`` (valid for any spectrum) and
    ``log_prediction`` (``log S_bar_Aff - log S_bar``; isotropic or
    simple spectra only).
    """
    b = fam.perturbations()
    result = {"mean_prediction": affine_mean_prediction(fam)}
    if spec.isotropic:
        lam = spec.eigenvalues[0]
        result["log_prediction"] = -np.mean(b @ b, axis=0) / (2.0 * lam**2)
        return result
    _require_handled_case(spec, "affine log-mean expansion")
    inv = np.linalg.inv(fam.mean)
    lam = spec.eigenvalues
    out = np.zeros_like(fam.mean)
    for j in range(lam.size):
        pj, hj = spec.projections[j], spec.resolvents[j]
        pbsb = np.einsum("ab,sbc,cd,sda->s", pj, b, inv, b)
        cross = np.einsum("ab,sbc,cd,sde,ef->saf", pj, b, inv, b, hj)
        cross = cross + np.swapaxes(cross, -1, -2)
        out = out + (
            -0.5 / lam[j] * pbsb.mean() * pj
            + 0.5 * np.log(lam[j]) * cross.mean(axis=0)
        )
    result["log_prediction"] = _symmetrize(out)
    return result


def logdet_expansions(fam: PerturbationFamily, spec: MeanSpectrum) -> dict:
    """Predicted ``log det`` shifts of the geometric means versus the mean."""
    b = fam.perturbations()
    if spec.isotropic:
        lam = spec.eigenvalues[0]
        val = -np.trace(np.mean(b @ b, axis=0)) / (2.0 * lam**2)
        return {"le": float(val), "aff": float(val)}
    _require_handled_case(spec, "log-determinant expansion")
    lam = spec.eigenvalues
    inv = np.linalg.inv(fam.mean)
    le = 0.0
    aff = 0.0
    for j in range(lam.size):
        pj, hj = spec.projections[j], spec.resolvents[j]
        pbhb = np.einsum("ab,sbc,cd,sda->s", pj, b, hj, b).mean()
        trpb2 = np.mean(np.einsum("ab,sba->s", pj, b) ** 2)
        pbsb = np.einsum("ab,sbc,cd,sda->s", pj, b, inv, b).mean()
        le += -pbhb / lam[j] - 0.5 * trpb2 / lam[j] ** 2
        aff += -0.5 * pbsb / lam[j]
    return {"le": float(le), "aff": float(aff)}


def multiplicative_bias_spectrum(fam: PerturbationFamily, base: np.ndarray) -> dict:
    """Eigenvalue-wise bias of the Euclidean mean of a multiplicative family.

    For members ``G diag(delta_j e^{Z_j}) G^T`` the Euclidean mean shares
    the frame ``G`` and its eigenvalues are ``delta_j * avg(e^{Z_j})``, so
    the bias against the noiseless base is ``delta_j (avg(e^{Z_j}) - 1)``
    per eigenvalue: second order in the spread. The continuum analogue
    for ``Z_j`` uniform on ``[-c_j t, c_j t]`` is
    ``delta_j (sinh(c_j t)/(c_j t) - 1)``.
    """
    if fam.style != "multiplicative":
        raise DomainError("bias spectrum applies to multiplicative families")
    base = np.asarray(base, dtype=float)
    base_eig = sym_eig(base)
    mean_in_frame = base_eig.vectors.T @ fam.mean @ base_eig.vectors
    realized = np.diag(mean_in_frame) - base_eig.values
    return {
        "base_eigenvalues": base_eig.values,
        "bias_eigenvalues": realized,
        "off_diagonal_norm": float(
            np.linalg.norm(mean_in_frame - np.diag(np.diag(mean_in_frame)))
        ),
    }


def log_of_mean(mean: np.ndarray) -> np.ndarray:
    """Matrix log of an SPD mean; convenience for residual computations."""
    return mat_log(np.asarray(mean, dtype=float))
