"""Ito / Stratonovich SDE models, drift interconversion and seeded
ensemble simulation.

Drift and noise are vectorized evaluators: drift(x, t) maps an array of
states with shape (..., d) to (..., d); noise(x, t) maps it to
(..., d, m).  Simulation draws its Gaussian increments from per-step
Philox streams keyed on (seed, step), so a run is bitwise reproducible
for a fixed seed regardless of how the particle loop is scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import CoverageError, NonFinite
from .grids import DomainSpec, GridDensity, MomentSummary, normalize

ITO = "ito"
STRATONOVICH = "stratonovich"

# relative finite-difference step for noise Jacobians
FD_REL_STEP = 1e-5


@dataclass(frozen=True, eq=False)
class SdeModel:
    """dx = a(x,t) dt + B(x,t) dw, read in the stated interpretation.

    noise_jacobian, when given, evaluates dB_ij/dx_k with output shape
    (..., d, m, d); otherwise central differences with step
    1e-5 * (1 + |x_k|) are used.  time_dependent=False lets consumers
    cache coefficient fields.
    """

    dim: int
    noise_dim: int
    interpretation: str
    drift: Callable[[np.ndarray, float], np.ndarray]
    noise: Callable[[np.ndarray, float], np.ndarray]
    noise_jacobian: Optional[Callable[[np.ndarray, float], np.ndarray]] = None
    time_dependent: bool = False

    def __post_init__(self):
        if self.interpretation not in (ITO, STRATONOVICH):
            raise ValueError(f"bad interpretation {self.interpretation!r}")

    def diffusion(self, x: np.ndarray, t: float = 0.0) -> np.ndarray:
        """BB^T with shape (..., d, d)."""
        b = self.noise(x, t)
        return b @ np.swapaxes(b, -1, -2)


def constant_noise_model(dim, drift, b, interpretation=ITO) -> SdeModel:
    """Convenience constructor for constant coupling matrices."""
    b = np.atleast_2d(np.asarray(b, dtype=float))
    m = b.shape[1]

    def noise(x, t):
        return np.broadcast_to(b, x.shape[:-1] + b.shape)

    def jac(x, t):
        return np.zeros(x.shape[:-1] + (dim, m, dim))

    return SdeModel(dim, m, interpretation, drift, noise, noise_jacobian=jac)


def _noise_jacobian_fd(model: SdeModel, x: np.ndarray, t: float) -> np.ndarray:
    """Central-difference dB_ij/dx_k, shape (..., d, m, d)."""
    d = model.dim
    out = np.empty(x.shape[:-1] + (d, model.noise_dim, d))
    for k in range(d):
        h = FD_REL_STEP * (1.0 + np.abs(x[..., k]))
        xp = x.copy()
        xm = x.copy()
        xp[..., k] += h
        xm[..., k] -= h
        out[..., k] = (model.noise(xp, t) - model.noise(xm, t)) / (2 * h)[..., None, None]
    return out


def drift_correction(model: SdeModel, x: np.ndarray, t: float = 0.0) -> np.ndarray:
    """(1/2) sum_{j,k} (dB_ij/dx_k) B_kj, the Ito-minus-Stratonovich drift."""
    jac = (model.noise_jacobian(x, t) if model.noise_jacobian is not None
           else _noise_jacobian_fd(model, x, t))
    b = model.noise(x, t)
    return 0.5 * np.einsum("...ijk,...kj->...i", jac, b)


def ito_from_stratonovich(m: SdeModel) -> SdeModel:
    if m.interpretation != STRATONOVICH:
        raise ValueError("model is not in Stratonovich form")

    def drift(x, t, _m=m):
        return _m.drift(x, t) + drift_correction(_m, x, t)

    return replace(m, interpretation=ITO, drift=drift)


def stratonovich_from_ito(m: SdeModel) -> SdeModel:
    if m.interpretation != ITO:
        raise ValueError("model is not in Ito form")

    def drift(x, t, _m=m):
        return _m.drift(x, t) - drift_correction(_m, x, t)

    return replace(m, interpretation=STRATONOVICH, drift=drift)


def as_interpretation(m: SdeModel, interpretation: str) -> SdeModel:
    if m.interpretation == interpretation:
        return m
    if interpretation == ITO:
        return ito_from_stratonovich(m)
    return stratonovich_from_ito(m)


# ---------------------------------------------------------------------------
# simulation


@dataclass(frozen=True, eq=False)
class EnsembleState:
    """A snapshot of N sample paths."""

    time: float
    particles: np.ndarray  # (N, d)
    seed: int
    step_index: int

    def __post_init__(self):
        p = np.asarray(self.particles, dtype=float)
        if p.ndim != 2 or p.shape[0] < 1:
            raise ValueError("particles must be a nonempty (N, d) array")
        object.__setattr__(self, "particles", p)


def step_rng(seed: int, step: int) -> np.random.Generator:
    """Philox stream for one (seed, step) pair; counter-derived, so the
    stream layout is independent of execution schedule."""
    return np.random.Generator(np.random.Philox(key=np.uint64(seed),
                                                counter=(step + 1) << 128))


def _check_finite(x: np.ndarray, step: int):
    bad = ~np.isfinite(x)
    if bad.any():
        idx = int(np.argwhere(bad.any(axis=1))[0, 0])
        raise NonFinite(f"particle {idx} left finite range at step {step}",
                        step=step, index=idx)


def simulate(model: SdeModel, init, dt: float, n_steps: int, n_particles: int,
             seed: int, store_every: int = 0) -> list[EnsembleState]:
    """Integrate the ensemble; returns [initial, (intermediates), final].

    Ito models use Euler-Maruyama; Stratonovich models use the Heun
    (stochastic trapezoidal) predictor-corrector, which converges to the
    Stratonovich solution without prior drift conversion.  init is either
    an (N, d) array or a callable sampler(rng, n) -> (n, d).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if n_particles < 1:
        raise ValueError("need at least one particle")
    if callable(init):
        x = np.asarray(init(step_rng(seed, 0), n_particles), dtype=float)
    else:
        x = np.broadcast_to(np.asarray(init, dtype=float),
                            (n_particles, model.dim)).copy()
    if x.shape != (n_particles, model.dim):
        raise ValueError(f"init produced shape {x.shape}")

    heun = model.interpretation == STRATONOVICH
    sqrt_dt = math.sqrt(dt)
    states = [EnsembleState(0.0, x.copy(), seed, 0)]
    t = 0.0
    for s in range(n_steps):
        dw = step_rng(seed, s + 1).standard_normal((n_particles, model.noise_dim)) * sqrt_dt
        if heun:
            a0 = model.drift(x, t)
            b0 = model.noise(x, t)
            pred = x + a0 * dt + np.einsum("nij,nj->ni", b0, dw)
            a1 = model.drift(pred, t + dt)
            b1 = model.noise(pred, t + dt)
            x = x + 0.5 * (a0 + a1) * dt + np.einsum(
                "nij,nj->ni", 0.5 * (b0 + b1), dw)
        else:
            x = x + model.drift(x, t) * dt + np.einsum(
                "nij,nj->ni", model.noise(x, t), dw)
        _check_finite(x, s + 1)
        t = (s + 1) * dt
        if store_every and (s + 1) % store_every == 0 and s + 1 != n_steps:
            states.append(EnsembleState(t, x.copy(), seed, s + 1))
    states.append(EnsembleState(n_steps * dt, x, seed, n_steps))
    return states


# ---------------------------------------------------------------------------
# ensemble -> density / moments


def histogram_density(e: EnsembleState, domain: DomainSpec,
                      min_coverage: float = 0.99) -> GridDensity:
    """Bin particles into the domain cells; periodic axes wrap first."""
    x = e.particles.copy()
    n, d = x.shape
    if d != domain.ndim:
        raise ValueError("particle dimension != domain dimension")
    idx = np.empty((n, d), dtype=np.int64)
    inside = np.ones(n, dtype=bool)
    for ax in range(d):
        lo, hi = domain.extents[ax]
        h = domain.spacing[ax]
        col = x[:, ax]
        if domain.periodic[ax]:
            col = lo + np.mod(col - lo, hi - lo)
            i = np.floor((col - lo) / h).astype(np.int64)
            i = np.clip(i, 0, domain.resolution[ax] - 1)  # guard hi roundoff
        else:
            i = np.floor((col - lo) / h).astype(np.int64)
            inside &= (i >= 0) & (i < domain.resolution[ax])
            i = np.clip(i, 0, domain.resolution[ax] - 1)
        idx[:, ax] = i
    escaped = 1.0 - inside.mean()
    if escaped > 1.0 - min_coverage:
        raise CoverageError(
            f"{escaped:.2%} of particles outside the domain",
            escaped_fraction=escaped)
    flat = np.ravel_multi_index(idx[inside].T, domain.resolution)
    counts = np.bincount(flat, minlength=int(np.prod(domain.resolution)))
    counts = counts.reshape(domain.resolution).astype(float)
    return normalize(GridDensity(domain, counts / (n * domain.weights)))


def sample_moments(e: EnsembleState) -> MomentSummary:
    """Sample mean and unbiased covariance (divisor N-1)."""
    x = e.particles
    if x.shape[0] < 2:
        raise ValueError("need at least two particles for a covariance")
    mean = x.mean(axis=0)
    c = x - mean
    cov = (c.T @ c) / (x.shape[0] - 1)
    return MomentSummary(mean, 0.5 * (cov + cov.T))
