"""Hamiltonian phase-space stochastic mechanics.

State is z = (q, p) with p = M(q) qdot.  The Hamilton SDE forced by
noise and viscous damping puts noise only in the momentum rows, so the
Ito and Stratonovich readings coincide even for configuration-dependent
B(q).  The Boltzmann density e^{-beta H}/Z is stationary exactly when
the fluctuation-dissipation condition C = (beta/2) B B^T holds.

Note the momentum drift is -dH/dq - C M^{-1} p; for a q-dependent mass
matrix dH/dq carries +(1/2) p^T M^{-1} (dM/dq_i) M^{-1} p (the sign that
keeps the Hamiltonian flow divergence-free and the Boltzmann density
stationary).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .bounds import BoundsCertificate, certificate
from .errors import DomainTooSmall, SingularJ, SingularMass
from .grids import DomainSpec, GridDensity, normalize
from .sde import ITO, SdeModel

FD_STEP = 1e-6


@dataclass(frozen=True, eq=False)
class HamiltonianSystem:
    """n-DOF mechanical system with mass M(q), potential V(q), damping
    C(q), noise B(q) and inverse temperature beta (k_B = 1; entropies in
    nats)."""

    n: int
    mass: Callable[[np.ndarray], np.ndarray]       # (..., n, n)
    potential: Callable[[np.ndarray], np.ndarray]  # (...,)
    damping: Callable[[np.ndarray], np.ndarray]    # (..., n, n)
    noise: Callable[[np.ndarray], np.ndarray]      # (..., n, n)
    beta: float
    mass_grad: Optional[Callable] = None       # (..., n, n, n): dM_ij/dq_k
    potential_grad: Optional[Callable] = None   # (..., n)

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be positive")


def constant_coeff(value):
    arr = np.atleast_2d(np.asarray(value, dtype=float))

    def evaluator(q):
        return np.broadcast_to(arr, q.shape[:-1] + arr.shape)

    return evaluator


def oscillator_system(mass=1.0, stiffness=1.0, damping=1.0, noise=1.0,
                      beta=1.0) -> HamiltonianSystem:
    """1-DOF spring-mass-damper with constant coefficients."""

    def potential(q):
        return 0.5 * stiffness * q[..., 0] ** 2

    def potential_grad(q):
        return stiffness * q

    return HamiltonianSystem(
        1, constant_coeff([[mass]]), potential, constant_coeff([[damping]]),
        constant_coeff([[noise]]), beta,
        mass_grad=lambda q: np.zeros(q.shape[:-1] + (1, 1, 1)),
        potential_grad=potential_grad)


def double_well_system(mass=1.0, damping=1.0, noise=1.0,
                       beta=1.0) -> HamiltonianSystem:
    """1-DOF double well V(q) = (q^2 - 1)^2."""

    def potential(q):
        return (q[..., 0] ** 2 - 1.0) ** 2

    def potential_grad(q):
        return 4.0 * q * (q ** 2 - 1.0)

    return HamiltonianSystem(
        1, constant_coeff([[mass]]), potential, constant_coeff([[damping]]),
        constant_coeff([[noise]]), beta,
        mass_grad=lambda q: np.zeros(q.shape[:-1] + (1, 1, 1)),
        potential_grad=potential_grad)


def _mass_inv(sys: HamiltonianSystem, q: np.ndarray) -> np.ndarray:
    m = sys.mass(q)
    try:
        return np.linalg.inv(m)
    except np.linalg.LinAlgError as exc:
        raise SingularMass(str(exc)) from exc


def _mass_grad(sys: HamiltonianSystem, q: np.ndarray) -> np.ndarray:
    if sys.mass_grad is not None:
        return sys.mass_grad(q)
    out = np.empty(q.shape[:-1] + (sys.n, sys.n, sys.n))
    for k in range(sys.n):
        h = FD_STEP * (1.0 + np.abs(q[..., k]))
        qp, qm = q.copy(), q.copy()
        qp[..., k] += h
        qm[..., k] -= h
        out[..., k] = (sys.mass(qp) - sys.mass(qm)) / (2 * h)[..., None, None]
    return out


def _potential_grad(sys: HamiltonianSystem, q: np.ndarray) -> np.ndarray:
    if sys.potential_grad is not None:
        return sys.potential_grad(q)
    out = np.empty_like(q)
    for k in range(sys.n):
        h = FD_STEP * (1.0 + np.abs(q[..., k]))
        qp, qm = q.copy(), q.copy()
        qp[..., k] += h
        qm[..., k] -= h
        out[..., k] = (sys.potential(qp) - sys.potential(qm)) / (2 * h)
    return out


def hamiltonian(sys: HamiltonianSystem, p, q) -> np.ndarray:
    """H = (1/2) p^T M^{-1}(q) p + V(q)."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    minv = _mass_inv(sys, q)
    kinetic = 0.5 * np.einsum("...i,...ij,...j->...", p, minv, p)
    return kinetic + sys.potential(q)


def phase_sde(sys: HamiltonianSystem) -> SdeModel:
    """SDE on z = (q, p): dq = M^{-1} p dt,
    dp = (-dH/dq - C M^{-1} p) dt + B(q) dw."""
    n = sys.n

    def drift(z, t):
        q, p = z[..., :n], z[..., n:]
        minv = _mass_inv(sys, q)
        alpha = np.einsum("...ij,...j->...i", minv, p)
        dm = _mass_grad(sys, q)
        # +(1/2) p^T M^{-1} dM/dq_i M^{-1} p = -(1/2) p^T dM^{-1}/dq_i p
        quad = 0.5 * np.einsum("...i,...ijk,...j->...k", alpha, dm, alpha)
        gamma = quad - _potential_grad(sys, q) \
            - np.einsum("...ij,...j->...i", sys.damping(q), alpha)
        return np.concatenate([alpha, gamma], axis=-1)

    def noise(z, t):
        q = z[..., :n]
        b = sys.noise(q)
        out = np.zeros(z.shape[:-1] + (2 * n, n))
        out[..., n:, :] = b
        return out

    # noise rows live in p but depend only on q, whose own noise rows are
    # zero, so the Ito-Stratonovich correction vanishes identically
    def jac(z, t):
        out = np.zeros(z.shape[:-1] + (2 * n, n, 2 * n))
        db = _noise_grad(sys, z[..., :n])
        out[..., n:, :, :n] = db
        return out

    return SdeModel(2 * n, n, ITO, drift, noise, noise_jacobian=jac)


def _noise_grad(sys: HamiltonianSystem, q: np.ndarray) -> np.ndarray:
    out = np.empty(q.shape[:-1] + (sys.n, sys.n, sys.n))
    for k in range(sys.n):
        h = FD_STEP * (1.0 + np.abs(q[..., k]))
        qp, qm = q.copy(), q.copy()
        qp[..., k] += h
        qm[..., k] -= h
        out[..., k] = (sys.noise(qp) - sys.noise(qm)) / (2 * h)[..., None, None]
    return out


def phase_drift_divergence(sys: HamiltonianSystem, q, p) -> np.ndarray:
    """sum_i (d alpha_i / d q_i + d gamma_i / d p_i); the Hamiltonian part
    is divergence-free, leaving -tr(C M^{-1})."""
    model = phase_sde(sys)
    z = np.concatenate([np.asarray(q, dtype=float),
                        np.asarray(p, dtype=float)], axis=-1)
    n = sys.n
    div = np.zeros(z.shape[:-1])
    for i in range(2 * n):
        h = FD_STEP * (1.0 + np.abs(z[..., i]))
        zp, zm = z.copy(), z.copy()
        zp[..., i] += h
        zm[..., i] -= h
        div += (model.drift(zp, 0.0)[..., i]
                - model.drift(zm, 0.0)[..., i]) / (2 * h)
    return div


# ---------------------------------------------------------------------------
# Boltzmann equilibrium


def phase_domain(q_extents, p_extents, resolution) -> DomainSpec:
    """Euclidean box over (q, p)."""
    return DomainSpec.box(tuple(q_extents) + tuple(p_extents), resolution)


def partition_function(sys: HamiltonianSystem, domain: DomainSpec) -> float:
    n = sys.n
    pts = domain.points
    q, p = pts[..., :n], pts[..., n:]
    energy = hamiltonian(sys, p, q)
    return float(np.sum(np.exp(-sys.beta * energy) * domain.weights))


def boltzmann_density(sys: HamiltonianSystem, domain: DomainSpec,
                      boundary_tol: float = 1e-12) -> GridDensity:
    """f_inf = e^{-beta H} / Z on the phase box; the box must contain the
    support (boundary values below boundary_tol of the peak)."""
    n = sys.n
    if domain.ndim != 2 * n:
        raise ValueError("phase domain dimension must be 2n")
    pts = domain.points
    q, p = pts[..., :n], pts[..., n:]
    weight = np.exp(-sys.beta * hamiltonian(sys, p, q))
    peak = weight.max()
    for ax in range(2 * n):
        lo = weight.take(0, axis=ax).max()
        hi = weight.take(-1, axis=ax).max()
        if max(lo, hi) > boundary_tol * peak:
            raise DomainTooSmall(
                f"Boltzmann weight not decayed on axis {ax} boundary")
    return normalize(GridDensity(domain, weight))


def fdt_certificate(sys: HamiltonianSystem, probe_q: np.ndarray,
                    tol: float = 1e-9) -> BoundsCertificate:
    """Pass iff C(q) = (beta/2) B(q) B(q)^T at every probe point."""
    probe_q = np.atleast_2d(np.asarray(probe_q, dtype=float))
    c = sys.damping(probe_q)
    b = sys.noise(probe_q)
    gap = c - 0.5 * sys.beta * (b @ np.swapaxes(b, -1, -2))
    worst = float(np.max(np.abs(gap)))
    return certificate("fluctuation_dissipation", worst, 0.0, tol,
                       relation="<=")


# ---------------------------------------------------------------------------
# marginals


@dataclass(frozen=True, eq=False)
class ConfigMarginal:
    """Configurational density f(q) = |det M|^{-1/2} int f dp, normalized
    against the sqrt(det M(q)) weighted measure (which DomainSpec's fixed
    weight rules cannot carry, hence the dedicated holder)."""

    q_centers: tuple[np.ndarray, ...]
    values: np.ndarray
    metric_weights: np.ndarray  # sqrt(det M) * cell volume per q cell

    def integral(self) -> float:
        return float(np.sum(self.values * self.metric_weights))

    def entropy(self) -> float:
        mask = self.values > 1e-12 * self.values.max()
        v = self.values[mask]
        return float(-np.sum(v * np.log(v) * self.metric_weights[mask]))


def configurational_marginal(f: GridDensity,
                             sys: HamiltonianSystem) -> ConfigMarginal:
    n = sys.n
    dom = f.domain
    if dom.ndim != 2 * n:
        raise ValueError("phase density dimension must be 2n")
    p_vol = float(np.prod(dom.spacing[n:]))
    q_vol = float(np.prod(dom.spacing[:n]))
    marg = f.values.sum(axis=tuple(range(n, 2 * n))) * p_vol
    q_axes = tuple(dom.axis_centers(i) for i in range(n))
    qc = np.stack(np.meshgrid(*q_axes, indexing="ij"), axis=-1)
    root_det = np.sqrt(np.abs(np.linalg.det(sys.mass(qc))))
    return ConfigMarginal(q_axes, marg / root_det, root_det * q_vol)


def momentum_marginal(f: GridDensity, sys: HamiltonianSystem):
    """f(p) = int f sqrt(det M) dq on the p-subgrid (plain Lebesgue cell
    weights in p)."""
    n = sys.n
    dom = f.domain
    q_axes = tuple(dom.axis_centers(i) for i in range(n))
    qc = np.stack(np.meshgrid(*q_axes, indexing="ij"), axis=-1)
    root_det = np.sqrt(np.abs(np.linalg.det(sys.mass(qc))))
    q_vol = float(np.prod(dom.spacing[:n]))
    vals = np.tensordot(root_det, f.values, axes=(tuple(range(n)),
                                                  tuple(range(n)))) * q_vol
    p_axes = tuple(dom.axis_centers(i) for i in range(n, 2 * n))
    return p_axes, vals


def config_entropy(f: GridDensity, sys: HamiltonianSystem) -> float:
    return configurational_marginal(f, sys).entropy()


# ---------------------------------------------------------------------------
# the zero-mass conundrum


@dataclass(frozen=True, eq=False)
class ZeroMassReport:
    """Residuals of the overdamped Ito (delta1) and Stratonovich (delta2)
    stationary operators on the exact configurational Boltzmann density."""

    x: np.ndarray
    delta1: np.ndarray
    delta2: np.ndarray

    @property
    def ratio(self) -> np.ndarray:
        out = np.full_like(self.delta1, np.nan)
        ok = np.abs(self.delta2) > 1e-12
        out[ok] = self.delta1[ok] / self.delta2[ok]
        return out


def zero_mass_discrepancy(b: Callable, stiffness: float, beta: float,
                          x_grid: np.ndarray, bp: Optional[Callable] = None,
                          bpp: Optional[Callable] = None) -> ZeroMassReport:
    """Evaluate both zero-mass stationary operators on
    f_inf(x) = sqrt(beta k / 2 pi) e^{-beta k x^2 / 2}.

    The overdamped SDE dx = -k c^{-1} x dt + 2 beta^{-1} b^{-1} dw with
    c = (beta/2) b^2 has Ito residual
      delta1 = k (c^{-1} x f)' + 2 beta^{-2} (-2 b^{-3} b' f + b^{-2} f')'
    and Stratonovich residual with -b^{-3} b' f in place of the doubled
    term; all derivatives are taken analytically (supply bp and bpp for
    derivative-exact results; central differences otherwise).
    """
    x = np.asarray(x_grid, dtype=float)
    k = float(stiffness)
    bv = np.asarray(b(x), dtype=float)
    if bp is None:
        h = FD_STEP * (1.0 + np.abs(x))
        bpv = (np.asarray(b(x + h)) - np.asarray(b(x - h))) / (2 * h)
    else:
        bpv = np.asarray(bp(x), dtype=float)
    if bpp is None:
        h = FD_STEP * (1.0 + np.abs(x))
        bppv = (np.asarray(b(x + h)) - 2 * bv + np.asarray(b(x - h))) / h ** 2
    else:
        bppv = np.asarray(bpp(x), dtype=float)

    f = math.sqrt(beta * k / (2 * math.pi)) * np.exp(-beta * k * x ** 2 / 2)
    binv = 1.0 / bv
    # common restoring part k d/dx(c^{-1} x f), c^{-1} = 2 / (beta b^2)
    term1 = (2 * k / beta) * f * (-2 * binv ** 3 * bpv * x + binv ** 2
                                  - beta * k * binv ** 2 * x ** 2)
    # diffusion parts, scale 2 beta^{-2}, with f' = -beta k x f
    strat_core = (3 * binv ** 4 * bpv ** 2 - binv ** 3 * bppv
                  + 3 * beta * k * binv ** 3 * bpv * x
                  - beta * k * binv ** 2
                  + (beta * k) ** 2 * binv ** 2 * x ** 2)
    ito_core = (6 * binv ** 4 * bpv ** 2 - 2 * binv ** 3 * bppv
                + 4 * beta * k * binv ** 3 * bpv * x
                - beta * k * binv ** 2
                + (beta * k) ** 2 * binv ** 2 * x ** 2)
    delta1 = term1 + (2 / beta ** 2) * f * ito_core
    delta2 = term1 + (2 / beta ** 2) * f * strat_core
    return ZeroMassReport(x, delta1, delta2)


# ---------------------------------------------------------------------------
# phase-volume invariance


def phase_volume_identity(jmat, coupling) -> float:
    """Determinant of [[J^{-T}, d(J^{-T} p)/dq], [0, J]]; equals 1 for any
    invertible J, which is why phase volume needs no metric weight."""
    jmat = np.atleast_2d(np.asarray(jmat, dtype=float))
    coupling = np.atleast_2d(np.asarray(coupling, dtype=float))
    n = jmat.shape[0]
    if abs(np.linalg.det(jmat)) < 1e-12:
        raise SingularJ("coordinate-change Jacobian is singular")
    block = np.zeros((2 * n, 2 * n))
    block[:n, :n] = np.linalg.inv(jmat).T
    block[:n, n:] = coupling
    block[n:, n:] = jmat
    return float(np.linalg.det(block))
