"""Closed-form heat kernels on the circle and SO(3), the noisy kinematic
cart on SE(2), noninertial rotational diffusion, Lie-group entropy rates
and the generalized de Bruijn identity check.

Both kernel representations are provided everywhere: a folded (wrapped)
Gaussian that converges fast for small diffusion times and an
eigenfunction series that converges fast for large ones.  Truncations
are certified: series terms are kept until the next-term bound drops
below 1e-14, and folded sums keep |k| <= ceil(5 sigma / 2 pi) + 1 wraps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (
    SingularB0,
    TruncationBudget,
    UnsupportedDomain,
)
from .grids import (
    DomainSpec,
    GridDensity,
    entropy,
    fisher_information,
    gaussian_density,
    normalize,
)
from .bounds import BoundsCertificate, certificate, entropy_rate_constant_d
from .liegroups import rotation_angle
from .sde import ITO, SdeModel, step_rng

TAIL_TOL = 1e-14
MAX_TERMS = 200_000
REP_SWITCH = 0.5  # folded below, fourier above (in units of Dt or Kt)
SMALL_ANGLE = 1e-6


def _resolve_rep(rep: str, diffusion_time: float) -> str:
    if rep == "auto":
        return "folded" if diffusion_time < REP_SWITCH else "fourier"
    if rep not in ("folded", "fourier"):
        raise ValueError(f"unknown representation {rep!r}")
    return rep


# ---------------------------------------------------------------------------
# circle heat kernel


def circle_kernel(theta, t: float, d: float = 1.0, rep: str = "auto") -> np.ndarray:
    """Heat kernel on the circle from a delta at 0, against measure dtheta.

    Folded form sums the line Gaussian over wraps; Fourier form is
    1/2pi + (1/pi) sum e^{-d t n^2 / 2} cos(n theta).
    """
    if t <= 0:
        raise ValueError("diffusion time must be positive")
    theta = np.asarray(theta, dtype=float)
    dt = d * t
    rep = _resolve_rep(rep, dt)
    if rep == "folded":
        th = np.mod(theta + math.pi, 2 * math.pi) - math.pi
        k_max = math.ceil(5.0 * math.sqrt(dt) / (2 * math.pi)) + 1
        out = np.zeros_like(th)
        for k in range(-k_max, k_max + 1):
            out += np.exp(-((th - 2 * math.pi * k) ** 2) / (2 * dt))
        return out / math.sqrt(2 * math.pi * dt)
    n_max = _fourier_terms_circle(dt)
    out = np.full_like(theta, 1.0 / (2 * math.pi))
    for n in range(1, n_max + 1):
        out += math.exp(-dt * n * n / 2) * np.cos(n * theta) / math.pi
    return out


def _fourier_terms_circle(dt: float) -> int:
    n = 1
    while math.exp(-dt * n * n / 2) >= TAIL_TOL:
        n += 1
        if n > MAX_TERMS:
            raise TruncationBudget("circle Fourier tail will not reach 1e-14")
    return n


def circle_kernel_density(domain: DomainSpec, t: float, d: float = 1.0,
                          rep: str = "auto") -> GridDensity:
    if domain.kind != "circle":
        raise UnsupportedDomain("need a circle domain")
    vals = circle_kernel(domain.axis_centers(0), t, d, rep)
    return normalize(GridDensity(domain, np.clip(vals, 0.0, None)))


def circle_variance(t: float, d: float = 1.0) -> float:
    """sigma^2(t) = pi^2/3 + 4 sum (-1)^n n^-2 e^{-d t n^2 / 2}."""
    if t <= 0:
        raise ValueError("diffusion time must be positive")
    dt = d * t
    total = math.pi ** 2 / 3
    n = 1
    while True:
        term = 4.0 * (-1) ** n / n ** 2 * math.exp(-dt * n * n / 2)
        total += term
        if abs(term) < TAIL_TOL:
            break
        n += 1
        if n > MAX_TERMS:
            raise TruncationBudget("circle variance series will not converge")
    return total


def circle_entropy_bounds(t: float, d: float = 1.0) -> tuple[float, float]:
    """Two upper bounds on the circle-kernel entropy: the cross-entropy
    against the unwrapped line Gaussian, and the uniform maximum."""
    dt = d * t
    line_bound = 0.5 * math.log(2 * math.pi * dt) + circle_variance(t, d) / (2 * dt)
    return line_bound, math.log(2 * math.pi)


# ---------------------------------------------------------------------------
# SO(3) isotropic heat kernel


def so3_character(l: int, theta) -> np.ndarray:
    """chi_l(theta) = sin((l + 1/2) theta) / sin(theta / 2)."""
    theta = np.asarray(theta, dtype=float)
    a = l + 0.5
    small = np.abs(theta) < SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    out = np.sin(a * safe) / np.sin(safe / 2)
    taylor = (2 * l + 1) * (1.0 + (0.25 - a * a) * theta ** 2 / 6.0)
    return np.where(small, taylor, out)


def _fourier_terms_so3(kt: float) -> int:
    l = 1
    while (2 * l + 1) ** 2 * math.exp(-l * (l + 1) * kt) >= TAIL_TOL:
        l += 1
        if l > MAX_TERMS:
            raise TruncationBudget("SO(3) Fourier tail will not reach 1e-14")
    return l


def so3_kernel(theta, t: float, k: float = 1.0, rep: str = "auto") -> np.ndarray:
    """Isotropic heat kernel on SO(3) from a delta at the identity,
    normalized against the unit-volume Haar measure.

    Fourier: sum (2l+1) chi_l(theta) e^{-l(l+1) K t}.
    Folded:  (sqrt(pi)/2) e^{Kt/4} (Kt)^{-3/2} (sin theta/2)^{-1}
             sum_k (-1)^k (theta + 2 pi k) e^{-(theta + 2 pi k)^2 / 4 K t}.

    The (-1)^k wrap sign makes the Poisson dual of the folded sum land on
    the odd half-integer frequencies of the character series; without it
    the folded candidate is a different function (it decays to 0 instead
    of 1 at large Kt) and the representations agree only while the extra
    wraps are negligible.
    """
    if t <= 0:
        raise ValueError("diffusion time must be positive")
    theta = np.asarray(theta, dtype=float)
    kt = k * t
    rep = _resolve_rep(rep, kt)
    if rep == "fourier":
        l_max = _fourier_terms_so3(kt)
        out = np.zeros_like(theta)
        for l in range(l_max + 1):
            out += (2 * l + 1) * so3_character(l, theta) * math.exp(-l * (l + 1) * kt)
        return out
    pref = 0.5 * math.sqrt(math.pi) * math.exp(kt / 4) / kt ** 1.5
    k_max = math.ceil(5.0 * math.sqrt(2 * kt) / (2 * math.pi)) + 1
    small = np.abs(theta) < SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    tot = np.zeros_like(theta)
    for kk in range(-k_max, k_max + 1):
        arg = safe + 2 * math.pi * kk
        tot += (-1.0) ** kk * arg * np.exp(-(arg ** 2) / (4 * kt))
    out = pref * tot / np.sin(safe / 2)
    # removable singularity at theta = 0: sum_k d/dtheta[...] / (1/2)
    limit = 0.0
    for kk in range(-k_max, k_max + 1):
        arg = 2 * math.pi * kk
        limit += (-1.0) ** kk * (1.0 - arg ** 2 / (2 * kt)) \
            * math.exp(-(arg ** 2) / (4 * kt))
    return np.where(small, pref * 2.0 * limit, out)


def so3_kernel_density(domain: DomainSpec, t: float, k: float = 1.0,
                       rep: str = "auto") -> GridDensity:
    if domain.kind != "so3_radial":
        raise UnsupportedDomain("need an so3_radial domain")
    vals = so3_kernel(domain.axis_centers(0), t, k, rep)
    return normalize(GridDensity(domain, np.clip(vals, 0.0, None)))


# -- character transform on the radial grid ---------------------------------


def so3_radial_coeffs(f: GridDensity, l_max: int) -> np.ndarray:
    """a_l = int f chi_l dR (characters are orthonormal under the
    normalized Haar measure)."""
    if f.domain.kind != "so3_radial":
        raise UnsupportedDomain("need an so3_radial density")
    th = f.domain.axis_centers(0)
    w = f.domain.weights
    return np.array([float(np.sum(f.values * so3_character(l, th) * w))
                     for l in range(l_max + 1)])


def so3_radial_synthesize(domain: DomainSpec, coeffs: np.ndarray) -> GridDensity:
    th = domain.axis_centers(0)
    vals = np.zeros_like(th)
    for l, a in enumerate(coeffs):
        vals += a * so3_character(l, th)
    return normalize(GridDensity(domain, np.clip(vals, 0.0, None)))


def so3_convolve_characters(f1: GridDensity, f2: GridDensity,
                            l_max: int = 60) -> GridDensity:
    """Radial convolution via the character algebra:
    chi_l * chi_m = delta_lm chi_l / (2l + 1)."""
    a1 = so3_radial_coeffs(f1, l_max)
    a2 = so3_radial_coeffs(f2, l_max)
    return so3_radial_synthesize(f1.domain, a1 * a2 / (2 * np.arange(l_max + 1) + 1))


def so3_smooth_with_kernel(alpha: GridDensity, t: float, k: float = 1.0,
                           l_max: int = 60) -> GridDensity:
    """alpha * k_t without an explicit kernel grid: the kernel's character
    coefficients are (2l+1) e^{-l(l+1) K t}."""
    a = so3_radial_coeffs(alpha, l_max)
    decay = np.array([math.exp(-l * (l + 1) * k * t) for l in range(l_max + 1)])
    return so3_radial_synthesize(alpha.domain, a * decay)


# ---------------------------------------------------------------------------
# the noisy kinematic cart


@dataclass(frozen=True)
class CartParams:
    wheel_radius: float = 1.0
    wheelbase: float = 2.0
    wheel_rate: float = 1.0
    wheel_noise: float = 1.0

    def __post_init__(self):
        if self.wheel_radius <= 0 or self.wheelbase <= 0:
            raise ValueError("wheel radius and wheelbase must be positive")
        if self.wheel_noise < 0:
            raise ValueError("wheel noise strength must be nonnegative")


@dataclass(frozen=True, eq=False)
class CartModel:
    sde: SdeModel
    coupling: np.ndarray           # body-frame 3x2 wheel coupling A
    compact_diffusion: np.ndarray  # diag(r^2 D / 2, 0, 2 r^2 D / L^2)
    params: CartParams


def cart_model(p: CartParams) -> CartModel:
    """Chart-coordinate SDE of the two-wheel cart.  The wheel-noise
    contributions to the (x, theta) and (y, theta) couplings cancel, so
    the Ito and Stratonovich readings coincide despite B depending on
    theta."""
    r, lw, om, dn = (p.wheel_radius, p.wheelbase, p.wheel_rate, p.wheel_noise)
    root = math.sqrt(dn)

    def drift(x, t):
        out = np.zeros_like(x)
        out[..., 0] = r * om * np.cos(x[..., 2])
        out[..., 1] = r * om * np.sin(x[..., 2])
        return out

    def noise(x, t):
        th = x[..., 2]
        b = np.zeros(x.shape[:-1] + (3, 2))
        b[..., 0, 0] = b[..., 0, 1] = (r / 2) * np.cos(th) * root
        b[..., 1, 0] = b[..., 1, 1] = (r / 2) * np.sin(th) * root
        b[..., 2, 0] = (r / lw) * root
        b[..., 2, 1] = -(r / lw) * root
        return b

    def jac(x, t):
        th = x[..., 2]
        out = np.zeros(x.shape[:-1] + (3, 2, 3))
        out[..., 0, 0, 2] = out[..., 0, 1, 2] = -(r / 2) * np.sin(th) * root
        out[..., 1, 0, 2] = out[..., 1, 1, 2] = (r / 2) * np.cos(th) * root
        return out

    sde = SdeModel(3, 2, ITO, drift, noise, noise_jacobian=jac)
    coupling = (r / 2) * np.array([[1.0, 1.0], [0.0, 0.0],
                                   [2 / lw, -2 / lw]])
    compact = np.diag([r * r * dn / 2, 0.0, 2 * r * r * dn / (lw * lw)])
    return CartModel(sde, coupling, compact, p)


@dataclass(eq=False)
class CartEvolution:
    domain: DomainSpec
    times: list[float]
    densities: list[GridDensity]      # FPE snapshots
    ensembles: list                   # EnsembleState at matching times
    model: CartModel


def cart_domain(p: CartParams, t_end: float,
                resolution=(64, 64, 64)) -> DomainSpec:
    """Box sized from the nominal arc plus a 5-sigma spread margin."""
    r, lw, om, dn = (p.wheel_radius, p.wheelbase, p.wheel_rate, p.wheel_noise)
    s_xy = math.sqrt(r * r * dn / 2 * t_end)
    s_th = math.sqrt(2 * r * r * dn / (lw * lw) * t_end)
    swing = r * abs(om) * t_end
    pad = 5.0 * s_xy + swing * min(1.0, s_th)
    return DomainSpec.se2_box((-pad, swing + pad), (-pad - 0.25 * swing,
                                                    pad + 0.75 * swing),
                              resolution)


def cart_initial(domain: DomainSpec, sigma_xy: float = 0.1,
                 sigma_th: float = 0.15) -> GridDensity:
    """Near-delta start at the identity pose."""
    pts = domain.points
    vals = np.exp(-(pts[..., 0] ** 2 + pts[..., 1] ** 2) / (2 * sigma_xy ** 2)
                  - pts[..., 2] ** 2 / (2 * sigma_th ** 2))
    return normalize(GridDensity(domain, vals))


def cart_evolve(p: CartParams, t_end: float, resolution=(64, 64, 64),
                n_particles: int = 100_000, seed: int = 0,
                n_snapshots: int = 5, sigma_xy: float = 0.1,
                sigma_th: float = 0.15) -> CartEvolution:
    """Evolve the cart density by the FPE and, in parallel, an ensemble
    of sample paths from the matching near-delta start."""
    from .fpe import make_problem, solve, stability_limit
    from .sde import simulate

    cm = cart_model(p)
    dom = cart_domain(p, t_end, resolution)
    # a start narrower than ~3 cells rings on the cross-diffusion stencil
    sigma_xy = max(sigma_xy, 3.0 * max(dom.spacing[0], dom.spacing[1]))
    sigma_th = max(sigma_th, 3.0 * dom.spacing[2])
    init = cart_initial(dom, sigma_xy, sigma_th)
    prob = make_problem(dom, cm.sde, init)
    dt = 0.9 * stability_limit(prob)
    sol = solve(prob, t_end, dt, n_snapshots=n_snapshots)

    def sampler(rng, n):
        out = np.zeros((n, 3))
        out[:, 0] = sigma_xy * rng.standard_normal(n)
        out[:, 1] = sigma_xy * rng.standard_normal(n)
        out[:, 2] = sigma_th * rng.standard_normal(n)
        return out

    n_steps = 400
    sde_dt = t_end / n_steps
    states = simulate(cm.sde, sampler, sde_dt, n_steps, n_particles, seed,
                      store_every=max(1, n_steps // (len(sol.times) - 1)))
    # align ensemble snapshots to the stored density times
    aligned = []
    for t in sol.times:
        best = min(states, key=lambda s: abs(s.time - t))
        aligned.append(best)
    return CartEvolution(dom, sol.times, sol.densities, aligned, cm)


# ---------------------------------------------------------------------------
# Lie-group entropy rate


@dataclass(frozen=True, eq=False)
class GroupEntropyRate:
    rate: float
    lower: float
    upper: float
    fisher: np.ndarray


def group_entropy_rate(f: GridDensity, dmat) -> GroupEntropyRate:
    """S-dot = (1/2) tr[D F] with the group Fisher matrix, bracketed by
    (1/2) lambda_min(D) tr F <= S-dot <= (1/2) lambda_max(D) tr F."""
    dmat = np.atleast_2d(np.asarray(dmat, dtype=float))
    fmat = fisher_information(f)
    rate = entropy_rate_constant_d(dmat, fmat)
    eigs = np.linalg.eigvalsh(dmat)
    tr_f = float(np.trace(fmat))
    return GroupEntropyRate(rate, 0.5 * eigs[0] * tr_f, 0.5 * eigs[-1] * tr_f,
                            fmat)


# ---------------------------------------------------------------------------
# generalized de Bruijn identity


def _smoothed(alpha: GridDensity, dmat, drift, t: float) -> GridDensity:
    from .grids import convolve

    kind = alpha.domain.kind
    if kind == "circle":
        d = float(np.atleast_2d(dmat)[0, 0])
        th = alpha.domain.axis_centers(0)
        shift = (drift[0] if drift is not None else 0.0) * t
        vals = circle_kernel(th - shift, t, d)
        kern = normalize(GridDensity(alpha.domain, np.clip(vals, 0.0, None)))
        return convolve(alpha, kern)
    if kind == "so3_radial":
        dmat = np.atleast_2d(np.asarray(dmat, dtype=float))
        if drift is not None and np.any(np.asarray(drift) != 0):
            raise UnsupportedDomain("radial SO(3) smoothing needs zero drift")
        if not np.allclose(dmat, dmat[0, 0] * np.eye(3), atol=1e-12):
            raise UnsupportedDomain("radial SO(3) smoothing needs isotropic D")
        return so3_smooth_with_kernel(alpha, t, k=dmat[0, 0] / 2.0)
    raise UnsupportedDomain(f"de Bruijn check undefined on {kind}")


@dataclass(frozen=True, eq=False)
class DeBruijnReport:
    times: np.ndarray
    sdot_fd: np.ndarray
    sdot_tr_df: np.ndarray
    pointwise: list[BoundsCertificate]
    integrated: BoundsCertificate

    @property
    def passed(self) -> bool:
        return self.integrated.passed and all(c.passed for c in self.pointwise)


def debruijn_check(alpha: GridDensity, dmat, drift=None, t_grid=None,
                   rel_tol: float = 1e-3, fd_step: float = 1e-3) -> DeBruijnReport:
    """Verify d/dt S(alpha * k_t) = (1/2) tr[D F(alpha * k_t)] pointwise
    on t_grid and in integrated form between the grid endpoints."""
    if t_grid is None:
        t_grid = np.linspace(0.1, 1.0, 7)
    t_grid = np.asarray(t_grid, dtype=float)
    dmat = np.atleast_2d(np.asarray(dmat, dtype=float))

    def s_at(t):
        return entropy(_smoothed(alpha, dmat, drift, t))

    sdot_fd = np.empty_like(t_grid)
    sdot_tr = np.empty_like(t_grid)
    certs = []
    for i, t in enumerate(t_grid):
        rho = _smoothed(alpha, dmat, drift, t)
        sdot_tr[i] = entropy_rate_constant_d(dmat, fisher_information(rho))
        sdot_fd[i] = (s_at(t + fd_step) - s_at(t - fd_step)) / (2 * fd_step)
        rel = abs(sdot_fd[i] - sdot_tr[i]) / max(abs(sdot_tr[i]), 1e-30)
        certs.append(certificate(f"de_bruijn_pointwise_t={t:g}", rel, rel_tol,
                                 tolerance=0.0, relation="<="))
    # integrated form on a refined grid (Simpson)
    n_fine = 64
    tf = np.linspace(t_grid[0], t_grid[-1], n_fine + 1)
    rates = np.array([entropy_rate_constant_d(
        dmat, fisher_information(_smoothed(alpha, dmat, drift, t))) for t in tf])
    h = (tf[-1] - tf[0]) / n_fine
    integral = (h / 3) * (rates[0] + rates[-1] + 4 * rates[1:-1:2].sum()
                          + 2 * rates[2:-1:2].sum())
    ds = s_at(t_grid[-1]) - s_at(t_grid[0])
    rel = abs(ds - integral) / max(abs(integral), 1e-30)
    integrated = certificate("de_bruijn_integrated", rel, rel_tol,
                             tolerance=0.0, relation="<=")
    return DeBruijnReport(t_grid, sdot_fd, sdot_tr, certs, integrated)


# ---------------------------------------------------------------------------
# noninertial rotational diffusion


@dataclass(frozen=True, eq=False)
class RotationDiffusion:
    """Geometric stepper for omega dt = B1 dw on SO(3)."""

    b1: np.ndarray
    beta: float

    @property
    def dmat(self) -> np.ndarray:
        return self.b1 @ self.b1.T

    @property
    def isotropic_k(self) -> Optional[float]:
        d = self.dmat
        if np.allclose(d, d[0, 0] * np.eye(3), atol=1e-12):
            return float(d[0, 0]) / 2.0
        return None


def noninertial_rotation_model(beta: float, b0) -> RotationDiffusion:
    """Zero-inertia reduction of damped noisy rotation: B1 = (2/beta) B0^{-T}."""
    b0 = np.atleast_2d(np.asarray(b0, dtype=float))
    if b0.shape != (3, 3):
        raise ValueError("B0 must be 3x3")
    if abs(np.linalg.det(b0)) < 1e-12:
        raise SingularB0("B0 must be invertible")
    return RotationDiffusion((2.0 / beta) * np.linalg.inv(b0).T, beta)


def so3_exp_batch(w: np.ndarray) -> np.ndarray:
    """Rodrigues for a batch of rotation vectors (..., 3)."""
    th = np.linalg.norm(w, axis=-1)
    small = th < 1e-6
    safe = np.where(small, 1.0, th)
    zeros = np.zeros_like(th)
    k = np.stack([np.stack([zeros, -w[..., 2], w[..., 1]], axis=-1),
                  np.stack([w[..., 2], zeros, -w[..., 0]], axis=-1),
                  np.stack([-w[..., 1], w[..., 0], zeros], axis=-1)], axis=-2)
    a = np.where(small, 1.0 - th * th / 6.0, np.sin(safe) / safe)
    b = np.where(small, 0.5 - th * th / 24.0, (1.0 - np.cos(safe)) / safe ** 2)
    eye = np.broadcast_to(np.eye(3), k.shape)
    return eye + a[..., None, None] * k + b[..., None, None] * (k @ k)


def simulate_rotations(rd: RotationDiffusion, dt: float, n_steps: int,
                       n: int, seed: int = 0,
                       renorm_every: int = 200) -> np.ndarray:
    """R <- R exp(hat(B1 dw)); returns the final (n, 3, 3) batch."""
    from .liegroups import orthonormalize

    r = np.broadcast_to(np.eye(3), (n, 3, 3)).copy()
    sqrt_dt = math.sqrt(dt)
    for s in range(n_steps):
        dw = step_rng(seed, s + 1).standard_normal((n, 3)) * sqrt_dt
        r = r @ so3_exp_batch(dw @ rd.b1.T)
        if (s + 1) % renorm_every == 0:
            u, _, vt = np.linalg.svd(r)
            r = u @ vt
            flip = np.linalg.det(r) < 0
            if flip.any():
                u[flip, :, -1] *= -1
                r = u @ vt
    return r


def rotation_angle_histogram(rotations: np.ndarray,
                             domain: DomainSpec) -> GridDensity:
    """Bin rotation angles into an so3_radial grid (density against the
    normalized Haar measure)."""
    if domain.kind != "so3_radial":
        raise UnsupportedDomain("need an so3_radial domain")
    th = rotation_angle(rotations)
    h = domain.spacing[0]
    n_cells = domain.resolution[0]
    idx = np.clip((th / h).astype(int), 0, n_cells - 1)
    counts = np.bincount(idx, minlength=n_cells).astype(float)
    return normalize(GridDensity(domain, counts / (len(th) * domain.weights)))


# -- anisotropic densities on an axis-angle chart (reduced accuracy) ---------


def _to_axis_angle(rotations: np.ndarray):
    """(theta, nu, lambda) chart coordinates of a rotation batch; the axis
    of a near-identity or near-pi rotation is poorly conditioned, which is
    acceptable for histogram work (those chart cells carry little Haar
    measure)."""
    th = rotation_angle(rotations)
    skew = 0.5 * (rotations - np.swapaxes(rotations, -1, -2))
    axis = np.stack([skew[..., 2, 1], skew[..., 0, 2], skew[..., 1, 0]], axis=-1)
    norm = np.linalg.norm(axis, axis=-1)
    ok = norm > 1e-12
    axis = np.where(ok[..., None], axis / np.where(ok, norm, 1.0)[..., None],
                    np.array([0.0, 0.0, 1.0]))
    nu = np.arccos(np.clip(axis[..., 2], -1.0, 1.0))
    lam = np.arctan2(axis[..., 1], axis[..., 0])
    return th, nu, lam


def so3_chart_histogram(rotations: np.ndarray, n_theta: int = 20,
                        n_nu: int = 12, n_lam: int = 24):
    """Histogram of a rotation ensemble on the axis-angle product chart.
    Returns (values, So3EulerGrid); values are a density against the
    normalized Haar measure."""
    from .liegroups import so3_euler_grid

    grid = so3_euler_grid(n_theta, n_nu, n_lam)
    th, nu, lam = _to_axis_angle(rotations)
    ht = math.pi / n_theta
    hn = math.pi / n_nu
    hl = 2 * math.pi / n_lam
    it = np.clip((th / ht).astype(int), 0, n_theta - 1)
    inu = np.clip((nu / hn).astype(int), 0, n_nu - 1)
    il = np.clip(((lam + math.pi) / hl).astype(int), 0, n_lam - 1)
    flat = (it * n_nu + inu) * n_lam + il
    counts = np.bincount(flat, minlength=n_theta * n_nu * n_lam).astype(float)
    counts = counts.reshape(n_theta, n_nu, n_lam)
    vals = counts / (len(th) * grid.weights)
    vals /= float(np.sum(vals * grid.weights))
    return vals, grid


def so3_chart_fisher(values: np.ndarray, grid, step: float = 0.05) -> np.ndarray:
    """Group Fisher matrix of a chart density by central differences along
    R exp(+-h E_i) with trilinear chart interpolation.  Accuracy is
    limited by the chart singularities at theta = 0, pi and nu = 0, pi;
    use for bracketing checks, not tight tolerances."""
    nt, nn, nl = values.shape
    rots = grid.rotations.reshape(-1, 3, 3)

    def chart_lookup(r_batch):
        th, nu, lam = _to_axis_angle(r_batch)
        return _trilinear_chart(values, grid, th, nu, lam)

    derivs = []
    for i in range(3):
        w = np.zeros(3)
        w[i] = step
        gen_p = so3_exp_batch(w)
        gen_m = so3_exp_batch(-w)
        fp = chart_lookup(rots @ gen_p)
        fm = chart_lookup(rots @ gen_m)
        derivs.append(((fp - fm) / (2 * step)).reshape(values.shape))
    f = values
    mask = f > 1e-12 * f.max()
    w_haar = grid.weights
    fisher = np.empty((3, 3))
    for i in range(3):
        for j in range(i, 3):
            val = float(np.sum((derivs[i][mask] * derivs[j][mask]
                                / f[mask]) * w_haar[mask]))
            fisher[i, j] = fisher[j, i] = val
    return fisher


def _trilinear_chart(values: np.ndarray, grid, th, nu, lam) -> np.ndarray:
    """Trilinear interpolation on the (theta, nu, lambda) chart: lambda is
    periodic, theta and nu clamp to the nearest cell at the chart edges."""
    nt, nn, nl = values.shape
    ht, hn, hl = math.pi / nt, math.pi / nn, 2 * math.pi / nl
    x = th / ht - 0.5
    y = nu / hn - 0.5
    z = (lam + math.pi) / hl - 0.5
    fx = np.clip(np.floor(x).astype(int), 0, nt - 2)
    fy = np.clip(np.floor(y).astype(int), 0, nn - 2)
    fz = np.floor(z).astype(int)
    rx = np.clip(x - fx, 0.0, 1.0)
    ry = np.clip(y - fy, 0.0, 1.0)
    rz = z - fz
    out = np.zeros(th.shape)
    for ox, wx in ((0, 1 - rx), (1, rx)):
        for oy, wy in ((0, 1 - ry), (1, ry)):
            for oz, wz in ((0, 1 - rz), (1, rz)):
                out += wx * wy * wz * values[fx + ox, fy + oy,
                                             (fz + oz) % nl]
    return out
