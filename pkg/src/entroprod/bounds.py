"""Entropy-rate formulas, inequality certificates, and moment propagation.

The entropy production rate of a Stratonovich-form model splits into a
drift term that can carry either sign and a diffusion term that is a
positive semidefinite quadratic form in B^T grad f.  For constant
diffusion the rate collapses to (1/2) tr[D F] with F the Fisher
information matrix, and classical information-theoretic inequalities
(Cramer-Rao, entropy power, Fisher convolution) turn into computable
certificates on grid densities.

Every certificate carries an explicit tolerance and never passes on a
non-finite slack.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import (
    BoundViolation,
    DegenerateDensity,
    NotPD,
    ShapeMismatch,
    SingularF,
    UnsupportedDomain,
)
from .fpe import FpeProblem, _apply, _Coefficients, solve
from .grids import (
    FLOOR_REL,
    DomainSpec,
    GridDensity,
    MomentSummary,
    chart_gradient,
    convolve,
    entropy,
    fisher_information,
    moments,
)
from .sde import ITO, STRATONOVICH, SdeModel, as_interpretation

DEFAULT_TOL = 1e-6


@dataclass(frozen=True)
class BoundsCertificate:
    """One checked inequality: pass iff slack >= -tolerance and finite."""

    inequality: str
    lhs: float
    rhs: float
    tolerance: float
    relation: str = ">="

    @property
    def slack(self) -> float:
        return self.lhs - self.rhs if self.relation == ">=" else self.rhs - self.lhs

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.slack) and self.slack >= -self.tolerance)


def certificate(inequality, lhs, rhs, tolerance=DEFAULT_TOL, relation=">="):
    return BoundsCertificate(inequality, float(lhs), float(rhs),
                             float(tolerance), relation)


# ---------------------------------------------------------------------------
# entropy rate


@dataclass(frozen=True)
class EntropyRateBreakdown:
    total: float
    drift_term: float
    diffusion_term: float


def _noise_divergence(model: SdeModel, x: np.ndarray, t: float) -> np.ndarray:
    """div_k = sum_j dB_jk/dx_j, shape (..., m)."""
    from .sde import _noise_jacobian_fd

    jac = (model.noise_jacobian(x, t) if model.noise_jacobian is not None
           else _noise_jacobian_fd(model, x, t))
    return np.einsum("...jkj->...k", jac)


def entropy_rate_theorem1(d: GridDensity, model: SdeModel,
                          t: float = 0.0) -> EntropyRateBreakdown:
    """Entropy production rate for a Stratonovich-form model on a
    Euclidean-type or circle domain.

    drift term:     int sum_i (-a_i^s + (1/2) sum_jk B_ik dB_jk/dx_j) d_i f
    diffusion term: (1/2) int |B^T grad f|^2 / f  (always >= 0)
    """
    if model.interpretation != STRATONOVICH:
        raise ValueError("theorem-1 rate needs the Stratonovich form; convert first")
    dom = d.domain
    if dom.kind not in ("euclidean_box", "slab", "circle"):
        raise UnsupportedDomain(f"entropy rate stencil undefined on {dom.kind}")
    pts = dom.points
    w = np.broadcast_to(dom.weights, d.values.shape)
    grads = np.stack(chart_gradient(d), axis=-1)  # (..., d)
    a = model.drift(pts, t)
    b = model.noise(pts, t)
    corr = 0.5 * np.einsum("...ik,...k->...i", b, _noise_divergence(model, pts, t))
    drift_term = float(np.sum(np.einsum("...i,...i->...", corr - a, grads) * w))

    f = d.values
    mask = f > FLOOR_REL * f.max()
    floored_mass = float(np.sum((f * w)[~mask]))
    if floored_mass > 0.5:
        raise DegenerateDensity(f"{floored_mass:.2%} of mass below floor")
    bt_grad = np.einsum("...ik,...i->...k", b, grads)
    quad = np.einsum("...k,...k->...", bt_grad, bt_grad)
    diffusion_term = 0.5 * float(np.sum((quad[mask] / f[mask]) * w[mask]))
    return EntropyRateBreakdown(drift_term + diffusion_term, drift_term,
                                diffusion_term)


def entropy_rate_constant_d(dmat, fmat) -> float:
    """(1/2) tr[D F] for constant diffusion D = BB^T."""
    dmat = np.atleast_2d(np.asarray(dmat, dtype=float))
    fmat = np.atleast_2d(np.asarray(fmat, dtype=float))
    if dmat.shape != fmat.shape or dmat.shape[0] != dmat.shape[1]:
        raise ShapeMismatch(f"D {dmat.shape} vs F {fmat.shape}")
    if np.linalg.eigvalsh(0.5 * (dmat + dmat.T)).min() < -1e-12:
        raise NotPD("D must be positive semidefinite")
    return 0.5 * float(np.trace(dmat @ fmat))


@dataclass(frozen=True, eq=False)
class DriftConditionReport:
    divergence: np.ndarray  # per-cell div of the effective drift
    verdict: str            # constant_vector | nonnegative | indefinite


def drift_condition(model: SdeModel, domain: DomainSpec,
                    tol: float = 1e-9) -> DriftConditionReport:
    """Classify the effective drift g_i = a_i^s - (1/2) sum_jk B_ik dB_jk/dx_j.

    div g >= 0 everywhere makes the theorem-1 drift term nonnegative;
    constant g makes it vanish (the equality case)."""
    if model.interpretation != STRATONOVICH:
        model = as_interpretation(model, STRATONOVICH)
    pts = domain.points
    a = model.drift(pts, 0.0)
    b = model.noise(pts, 0.0)
    g = a - 0.5 * np.einsum("...ik,...k->...i", b,
                            _noise_divergence(model, pts, 0.0))
    from .fpe import _central_diff

    div = np.zeros(domain.resolution)
    for i in range(domain.ndim):
        div += _central_diff(g[..., i], i, domain.spacing[i], domain.periodic[i])
    scale = max(1.0, float(np.max(np.abs(g))))
    if all(np.ptp(g[..., i]) <= tol * scale for i in range(domain.ndim)):
        verdict = "constant_vector"
    elif div.min() >= -tol * scale:
        verdict = "nonnegative"
    else:
        verdict = "indefinite"
    return DriftConditionReport(div, verdict)


@dataclass(frozen=True, eq=False)
class D0Floor:
    """Isotropic floor D0 = lambda* I with D0 <= BB^T on the whole grid."""

    matrix: np.ndarray
    lambda_star: float
    degenerate: bool
    min_gap: float  # min over grid of lambda_min(BB^T - D0)


def d0_floor(model: SdeModel, domain: DomainSpec) -> D0Floor:
    dmat = model.diffusion(domain.points, 0.0)
    eigs = np.linalg.eigvalsh(dmat)
    lam_star = float(eigs[..., 0].min())
    degenerate = lam_star <= 0
    lam = max(lam_star, 0.0)
    gap = float((eigs[..., 0] - lam).min())
    return D0Floor(lam * np.eye(model.dim), lam, degenerate, gap)


# ---------------------------------------------------------------------------
# inequality certificates


def crb_certificate(sigma, fmat, dmat=None,
                    tol: float = 1e-3) -> list[BoundsCertificate]:
    """Cramer-Rao: lambda_min(Sigma - F^{-1}) >= -tol, plus the trace
    cascade tr[DF] >= lam_min(D) tr F >= lam_min(D) tr Sigma^{-1} when a
    diffusion matrix is supplied."""
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    fmat = np.atleast_2d(np.asarray(fmat, dtype=float))
    if sigma.shape != fmat.shape:
        raise ShapeMismatch(f"Sigma {sigma.shape} vs F {fmat.shape}")
    cond = np.linalg.cond(fmat)
    if not np.isfinite(cond) or cond > 1e12:
        raise SingularF(f"Fisher matrix condition number {cond:g}")
    slack = float(np.linalg.eigvalsh(sigma - np.linalg.inv(fmat)).min())
    certs = [certificate("cramer_rao", slack, 0.0, tol)]
    tr_f = float(np.trace(fmat))
    tr_sig_inv = float(np.trace(np.linalg.inv(sigma)))
    certs.append(certificate("fisher_trace_vs_covariance", tr_f, tr_sig_inv, tol))
    if dmat is not None:
        dmat = np.atleast_2d(np.asarray(dmat, dtype=float))
        lam_min = float(np.linalg.eigvalsh(dmat).min())
        tr_df = float(np.trace(dmat @ fmat))
        certs.append(certificate("cascade_trDF_vs_lminD_trF",
                                 tr_df, lam_min * tr_f, tol))
        certs.append(certificate("cascade_lminD_trF_vs_lminD_trSigmaInv",
                                 lam_min * tr_f, lam_min * tr_sig_inv, tol))
    return certs


def entropy_power(d: GridDensity) -> float:
    """N(f) = exp(2 S / d) / (2 pi e) on a Euclidean domain."""
    if d.domain.kind not in ("euclidean_box", "slab"):
        raise UnsupportedDomain("entropy power needs a Euclidean domain")
    dim = d.domain.ndim
    return math.exp(2.0 * entropy(d) / dim) / (2 * math.pi * math.e)


def epi_certificate(f1: GridDensity, f2: GridDensity,
                    tol: float = DEFAULT_TOL) -> BoundsCertificate:
    """Entropy power inequality N(f1*f2) >= N(f1) + N(f2)."""
    conv = convolve(f1, f2)
    return certificate("entropy_power", entropy_power(conv),
                       entropy_power(f1) + entropy_power(f2), tol)


def fisher_conv_certificate(f1: GridDensity, f2: GridDensity, pmat,
                            tol: float = DEFAULT_TOL) -> BoundsCertificate:
    """Fisher convolution inequality
    1/tr[F(f1*f2) P] >= 1/tr[F(f1) P] + 1/tr[F(f2) P] for any symmetric
    positive definite P."""
    pmat = np.atleast_2d(np.asarray(pmat, dtype=float))
    if not np.allclose(pmat, pmat.T, atol=1e-12):
        raise NotPD("P not symmetric")
    if np.linalg.eigvalsh(pmat).min() <= 0:
        raise NotPD("P not positive definite")
    if f1.domain.kind not in ("euclidean_box", "slab"):
        raise UnsupportedDomain("Fisher convolution needs a Euclidean domain")
    conv = convolve(f1, f2)
    lhs = 1.0 / float(np.trace(fisher_information(conv) @ pmat))
    rhs = sum(1.0 / float(np.trace(fisher_information(f) @ pmat))
              for f in (f1, f2))
    return certificate("fisher_convolution", lhs, rhs, tol)


# ---------------------------------------------------------------------------
# moment propagation


def moment_ode_rhs(d: GridDensity, p: FpeProblem,
                   form: str = ITO) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature of the applied FPE operator against x and
    (x - mu)(x - mu)^T; no symbolic closure required."""
    dom = d.domain
    if dom.kind not in ("euclidean_box", "slab"):
        raise UnsupportedDomain("moment ODE needs a Euclidean-type domain")
    coeffs = _Coefficients(dom, p.model, form)
    df = _apply(dom, coeffs, d.values, 0.0)
    pts = dom.points.reshape(-1, dom.ndim)
    dfw = (df * np.broadcast_to(dom.weights, df.shape)).ravel()
    mu = moments(d).mean
    dmean = pts.T @ dfw
    centered = pts - mu
    dcov = (centered * dfw[:, None]).T @ centered
    return dmean, 0.5 * (dcov + dcov.T)


def propagate_moments(p: FpeProblem, t_end: float, dt: float,
                      rhs: Optional[Callable] = None,
                      form: str = ITO,
                      n_snapshots: int = 9):
    """Moment trajectory [(t, MomentSummary), ...].

    With an analytic rhs(t, mean, cov) -> (dmean, dcov) the ODE is
    integrated by RK4 at step dt; otherwise the density itself is evolved
    and its quadrature moments are reported at the snapshots."""
    if rhs is None:
        sol = solve(p, t_end, dt, form=form, n_snapshots=n_snapshots)
        return [(t, moments(dens)) for t, dens in zip(sol.times, sol.densities)]
    m0 = moments(p.initial)
    mean = m0.mean.astype(float)
    cov = m0.covariance.astype(float)
    scalar = mean.size == 1
    out = [(0.0, MomentSummary(mean.copy(), cov.copy()))]
    n = max(1, int(round(t_end / dt)))
    h = t_end / n
    t = 0.0
    for k in range(n):
        if scalar:
            y = (float(mean[0]), float(cov[0, 0]))
            k1 = rhs(t, *y)
            k2 = rhs(t + h / 2, y[0] + h / 2 * k1[0], y[1] + h / 2 * k1[1])
            k3 = rhs(t + h / 2, y[0] + h / 2 * k2[0], y[1] + h / 2 * k2[1])
            k4 = rhs(t + h, y[0] + h * k3[0], y[1] + h * k3[1])
            mean = np.array([y[0] + (h / 6) * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])])
            cov = np.array([[y[1] + (h / 6) * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])]])
        else:
            k1 = rhs(t, mean, cov)
            k2 = rhs(t + h / 2, mean + h / 2 * k1[0], cov + h / 2 * k1[1])
            k3 = rhs(t + h / 2, mean + h / 2 * k2[0], cov + h / 2 * k2[1])
            k4 = rhs(t + h, mean + h * k3[0], cov + h * k3[1])
            mean = mean + (h / 6) * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
            cov = cov + (h / 6) * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        t = (k + 1) * h
        out.append((t, MomentSummary(mean.copy(), np.atleast_2d(cov).copy())))
    return out


# ---------------------------------------------------------------------------
# report


@dataclass(frozen=True)
class BoundColumn:
    """A per-sample bound column with its declared direction."""

    name: str
    values: np.ndarray
    relation: str  # "le" (target <= bound) or "ge" (target >= bound)
    target: str    # which report column it bounds: "S" or "Sdot"
    tolerance: float = DEFAULT_TOL


@dataclass(frozen=True, eq=False)
class EntropyReport:
    """Time series of entropy, entropy-rate estimates, Fisher/covariance
    matrices and certified bound columns.  Construction fails if any
    bound column violates its declared direction beyond tolerance."""

    times: np.ndarray
    entropy: np.ndarray
    sdot_fd: np.ndarray
    sdot_thm1: np.ndarray
    sdot_tr_df: np.ndarray
    fisher: np.ndarray       # (n, d, d)
    covariance: np.ndarray   # (n, d, d)
    bound_columns: tuple[BoundColumn, ...] = ()

    def __post_init__(self):
        targets = {"S": self.entropy, "Sdot": self.sdot_tr_df}
        for col in self.bound_columns:
            tgt = targets[col.target]
            gap = (col.values - tgt) if col.relation == "le" else (tgt - col.values)
            worst = float(np.nanmin(gap))
            if not np.isfinite(worst) or worst < -col.tolerance:
                raise BoundViolation(
                    f"bound column {col.name!r}: worst slack {worst:g} "
                    f"below -{col.tolerance:g}")

    def certificates(self) -> list[BoundsCertificate]:
        targets = {"S": self.entropy, "Sdot": self.sdot_tr_df}
        out = []
        for col in self.bound_columns:
            tgt = targets[col.target]
            gap = (col.values - tgt) if col.relation == "le" else (tgt - col.values)
            i = int(np.argmin(gap))
            lhs, rhs = ((tgt[i], col.values[i]) if col.relation == "ge"
                        else (col.values[i], tgt[i]))
            out.append(certificate(col.name, lhs, rhs, col.tolerance))
        return out
