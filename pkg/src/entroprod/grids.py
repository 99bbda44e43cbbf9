"""Measured grids, densities on them, and the primitive functionals.

A DomainSpec is a cell-centered discretization of one of five state spaces
(Euclidean box, circle, half-bounded slab, SO(3) rotation-angle radius,
SE(2) box) together with per-cell quadrature weights against the natural
measure of that space.  GridDensity holds nonnegative values on such a
grid; entropy, Fisher information, moments and convolution are plain
functions of GridDensity.

Conventions:
  * every axis samples cell centers lower + (j + 1/2) h; periodic axes
    put the seam on a cell edge and never duplicate the endpoint sample,
  * convolution requires the origin on the sample lattice, which for
    symmetric boxes and the circle means an odd cell count,
  * the circle carries the un-normalized measure dtheta (total 2*pi),
  * the SO(3) radial grid carries normalized Haar weight
    (2/pi) sin^2(theta/2) dtheta on theta in [0, pi] (total 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import (
    DegenerateDensity,
    DomainMismatch,
    NotNormalized,
    NotPD,
    UnsupportedDomain,
    ZeroMass,
)

# Cells with f below FLOOR_REL * max(f) are excluded from 1/f integrands;
# the true integrand vanishes there for smooth decaying densities.
FLOOR_REL = 1e-12

DOMAIN_KINDS = ("euclidean_box", "circle", "slab", "so3_radial", "se2_box")
WEIGHT_RULES = ("lebesgue", "so3_haar_radial", "haar_se2")


@dataclass(frozen=True)
class DomainSpec:
    """A measured discretization of a supported state space."""

    kind: str
    extents: tuple[tuple[float, float], ...]
    resolution: tuple[int, ...]
    periodic: tuple[bool, ...]
    weight_rule: str = "lebesgue"

    def __post_init__(self):
        if self.kind not in DOMAIN_KINDS:
            raise UnsupportedDomain(f"unknown domain kind {self.kind!r}")
        if self.weight_rule not in WEIGHT_RULES:
            raise UnsupportedDomain(f"unknown weight rule {self.weight_rule!r}")
        if not (len(self.extents) == len(self.resolution) == len(self.periodic)):
            raise ValueError("extents/resolution/periodic lengths differ")
        for (lo, hi), n in zip(self.extents, self.resolution):
            if n < 8:
                raise ValueError(f"resolution {n} < 8")
            if not hi > lo:
                raise ValueError(f"empty axis extent ({lo}, {hi})")

    # -- constructors -----------------------------------------------------

    @staticmethod
    def box(extents, resolution) -> "DomainSpec":
        extents = tuple((float(lo), float(hi)) for lo, hi in extents)
        resolution = tuple(int(n) for n in resolution)
        return DomainSpec("euclidean_box", extents, resolution,
                          (False,) * len(extents), "lebesgue")

    @staticmethod
    def circle(n: int) -> "DomainSpec":
        return DomainSpec("circle", ((-math.pi, math.pi),), (int(n),),
                          (True,), "lebesgue")

    @staticmethod
    def slab(x_extent, y_extent, resolution) -> "DomainSpec":
        """2D slab: x unbounded in spirit (decay), y in a bounded strip."""
        extents = (tuple(map(float, x_extent)), tuple(map(float, y_extent)))
        return DomainSpec("slab", extents, tuple(map(int, resolution)),
                          (False, False), "lebesgue")

    @staticmethod
    def so3_radial(n: int) -> "DomainSpec":
        return DomainSpec("so3_radial", ((0.0, math.pi),), (int(n),),
                          (False,), "so3_haar_radial")

    @staticmethod
    def se2_box(x_extent, y_extent, resolution) -> "DomainSpec":
        extents = (tuple(map(float, x_extent)), tuple(map(float, y_extent)),
                   (-math.pi, math.pi))
        return DomainSpec("se2_box", extents, tuple(map(int, resolution)),
                          (False, False, True), "haar_se2")

    # -- geometry ----------------------------------------------------------

    @property
    def ndim(self) -> int:
        return len(self.resolution)

    @cached_property
    def spacing(self) -> tuple[float, ...]:
        return tuple((hi - lo) / n
                     for (lo, hi), n in zip(self.extents, self.resolution))

    def axis_centers(self, i: int) -> np.ndarray:
        (lo, _), n, h = self.extents[i], self.resolution[i], self.spacing[i]
        return lo + h * (np.arange(n) + 0.5)

    @cached_property
    def mesh(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*(self.axis_centers(i) for i in range(self.ndim)),
                                 indexing="ij"))

    @cached_property
    def points(self) -> np.ndarray:
        """Cell centers stacked as an array of shape resolution + (ndim,)."""
        return np.stack(self.mesh, axis=-1)

    @cached_property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @cached_property
    def weights(self) -> np.ndarray:
        if self.weight_rule == "so3_haar_radial":
            theta = self.axis_centers(0)
            return (2.0 / math.pi) * np.sin(theta / 2) ** 2 * self.spacing[0]
        return np.full(self.resolution, self.cell_volume)

    @cached_property
    def total_measure(self) -> float:
        total = float(self.weights.sum())
        if not np.isfinite(total) or total <= 0:
            raise ZeroMass("domain has nonpositive total measure")
        return total

    def same_as(self, other: "DomainSpec") -> bool:
        return self == other


@dataclass(frozen=True, eq=False)
class GridField:
    """Signed per-cell values on a DomainSpec (operator outputs,
    directional derivatives)."""

    domain: DomainSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.domain.resolution:
            raise ValueError(
                f"values shape {v.shape} != resolution {self.domain.resolution}")
        object.__setattr__(self, "values", v)

    def integral(self) -> float:
        return float(np.sum(self.values * self.domain.weights))


@dataclass(frozen=True, eq=False)
class GridDensity:
    """Nonnegative density values on a DomainSpec, one per cell."""

    domain: DomainSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.domain.resolution:
            raise ValueError(
                f"values shape {v.shape} != resolution {self.domain.resolution}")
        if np.any(v < 0):
            raise ValueError("density values must be nonnegative")
        object.__setattr__(self, "values", v)

    def integral(self) -> float:
        return float(np.sum(self.values * self.domain.weights))

    def with_values(self, values) -> "GridDensity":
        return GridDensity(self.domain, values)


@dataclass(frozen=True, eq=False)
class MomentSummary:
    """Mean and covariance of a density; chart moments are flagged."""

    mean: np.ndarray
    covariance: np.ndarray
    on_chart: bool = False

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.mean, dtype=float))
        c = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        if not np.allclose(c, c.T, atol=1e-12):
            raise ValueError("covariance not symmetric")
        if np.linalg.eigvalsh(c).min() < -1e-10:
            raise ValueError("covariance has a significantly negative eigenvalue")
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "covariance", c)


# ---------------------------------------------------------------------------
# basic functionals


def normalize(d: GridDensity) -> GridDensity:
    total = d.integral()
    if not np.isfinite(total) or total <= 0:
        raise ZeroMass(f"cannot normalize: integral = {total}")
    return d.with_values(d.values / total)


def _require_normalized(d: GridDensity, tol: float = 1e-6):
    total = d.integral()
    if abs(total - 1.0) > tol:
        raise NotNormalized(f"density integrates to {total}, not 1")


def _floor_mask(values: np.ndarray) -> np.ndarray:
    return values > FLOOR_REL * values.max()


def entropy(d: GridDensity) -> float:
    """-int f log f dmu with natural log; sub-floor cells contribute 0."""
    _require_normalized(d)
    f, w = d.values, d.domain.weights
    mask = _floor_mask(f)
    fm = f[mask]
    return float(-np.sum(fm * np.log(fm) * np.broadcast_to(w, f.shape)[mask]))


def l2_norm_sq(d: GridDensity) -> float:
    _require_normalized(d)
    return float(np.sum(d.values ** 2 * d.domain.weights))


def jensen_lower_bound(d: GridDensity) -> float:
    """Convexity of -log gives S >= -log ||f||^2."""
    return float(-np.log(l2_norm_sq(d)))


# ---------------------------------------------------------------------------
# gradients

def chart_gradient(d: GridDensity) -> list[np.ndarray]:
    """Per-axis central differences; periodic wrap on periodic axes,
    one-sided second order at bounded ends, even mirror on so3_radial."""
    f = d.values
    dom = d.domain
    grads = []
    for ax in range(dom.ndim):
        h = dom.spacing[ax]
        if dom.periodic[ax]:
            g = (np.roll(f, -1, axis=ax) - np.roll(f, 1, axis=ax)) / (2 * h)
        else:
            g = np.empty_like(f)
            # interior
            mid = tuple(slice(1, -1) if a == ax else slice(None)
                        for a in range(dom.ndim))
            hi = tuple(slice(2, None) if a == ax else slice(None)
                       for a in range(dom.ndim))
            lo = tuple(slice(None, -2) if a == ax else slice(None)
                       for a in range(dom.ndim))
            g[mid] = (f[hi] - f[lo]) / (2 * h)
            first = tuple(0 if a == ax else slice(None) for a in range(dom.ndim))
            last = tuple(-1 if a == ax else slice(None) for a in range(dom.ndim))
            if dom.kind == "so3_radial":
                # f is even about theta = 0 and theta = pi
                second = tuple(1 if a == ax else slice(None) for a in range(dom.ndim))
                penult = tuple(-2 if a == ax else slice(None) for a in range(dom.ndim))
                g[first] = (f[second] - f[first]) / (2 * h)
                g[last] = (f[last] - f[penult]) / (2 * h)
            else:
                i1 = tuple(1 if a == ax else slice(None) for a in range(dom.ndim))
                i2 = tuple(2 if a == ax else slice(None) for a in range(dom.ndim))
                j1 = tuple(-2 if a == ax else slice(None) for a in range(dom.ndim))
                j2 = tuple(-3 if a == ax else slice(None) for a in range(dom.ndim))
                g[first] = (-3 * f[first] + 4 * f[i1] - f[i2]) / (2 * h)
                g[last] = (3 * f[last] - 4 * f[j1] + f[j2]) / (2 * h)
        grads.append(g)
    return grads


def _check_degenerate(d: GridDensity, mask: np.ndarray):
    w = np.broadcast_to(d.domain.weights, d.values.shape)
    floored_mass = float(np.sum(d.values[~mask] * w[~mask]))
    if floored_mass > 0.5:
        raise DegenerateDensity(
            f"{floored_mass:.2%} of mass below the density floor")


def fisher_information(d: GridDensity) -> np.ndarray:
    """F = int (grad f)(grad f)^T / f dmu, symmetric PSD.

    Chart gradients on Euclidean/circle/slab domains; on se2_box the
    gradients are right Lie derivatives; on so3_radial the matrix is
    (1/3) I tr F with tr F = int f'(theta)^2 / f dR (isotropy).
    """
    _require_normalized(d)
    dom = d.domain
    if dom.kind == "se2_box":
        from .liegroups import lie_derivative
        grads = [lie_derivative(d, i).values for i in range(3)]
    else:
        grads = chart_gradient(d)
    f = d.values
    mask = _floor_mask(f)
    _check_degenerate(d, mask)
    w = np.broadcast_to(dom.weights, f.shape)
    inv_f = np.zeros_like(f)
    inv_f[mask] = 1.0 / f[mask]
    if dom.kind == "so3_radial":
        tr = float(np.sum(grads[0] ** 2 * inv_f * w))
        return (tr / 3.0) * np.eye(3)
    n = dom.ndim
    fmat = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            fij = float(np.sum(grads[i] * grads[j] * inv_f * w))
            fmat[i, j] = fij
            fmat[j, i] = fij
    return fmat


def moments(d: GridDensity) -> MomentSummary:
    """Mean and covariance against the domain measure.

    Compact angular axes (circle, the theta axis of SE(2)) use the chart
    coordinate on [-pi, pi) and the result is flagged on_chart.
    """
    _require_normalized(d)
    dom = d.domain
    if dom.kind == "so3_radial":
        raise UnsupportedDomain("moments are not defined on the SO(3) radial grid")
    on_chart = any(dom.periodic)
    pts = dom.points.reshape(-1, dom.ndim)
    fw = (d.values * np.broadcast_to(dom.weights, d.values.shape)).ravel()
    mean = pts.T @ fw
    centered = pts - mean
    cov = (centered * fw[:, None]).T @ centered
    cov = 0.5 * (cov + cov.T)
    return MomentSummary(mean, cov, on_chart=on_chart)


# ---------------------------------------------------------------------------
# convolution

def _origin_index(dom: DomainSpec, ax: int) -> int:
    """Lattice index of coordinate 0 along an axis; DomainMismatch if the
    origin does not sit on the sample lattice (convolution offsets live on
    the lattice of center differences, which must contain 0)."""
    c0 = float(dom.axis_centers(ax)[0])
    h = dom.spacing[ax]
    k = -c0 / h
    ki = round(k)
    if abs(k - ki) > 1e-9:
        raise DomainMismatch(
            f"axis {ax}: origin is off-lattice (symmetric extents need an "
            "odd cell count)")
    return int(ki)


def convolve(f1: GridDensity, f2: GridDensity) -> GridDensity:
    """(f1 * f2)(x) = int f1(y) f2(x - y) dy on a shared Euclidean domain
    (zero padded) or cyclically on the circle; output is normalized."""
    if f1.domain != f2.domain:
        raise DomainMismatch("convolution requires a shared domain")
    dom = f1.domain
    if dom.kind == "circle":
        n = dom.resolution[0]
        z = _origin_index(dom, 0)
        idx = (np.arange(n)[:, None] - np.arange(n)[None, :] + z) % n
        out = dom.spacing[0] * (f2.values[idx] @ f1.values)
    elif dom.kind in ("euclidean_box", "slab"):
        zs = [_origin_index(dom, ax) for ax in range(dom.ndim)]
        shape = [2 * n - 1 for n in dom.resolution]
        axes = tuple(range(dom.ndim))
        full = np.fft.irfftn(
            np.fft.rfftn(f1.values, s=shape, axes=axes)
            * np.fft.rfftn(f2.values, s=shape, axes=axes),
            s=shape, axes=axes)
        sl = tuple(slice(z, z + n) for z, n in zip(zs, dom.resolution))
        out = dom.cell_volume * full[sl]
    else:
        raise DomainMismatch(f"convolution unsupported on {dom.kind}")
    out = np.clip(out, 0.0, None)
    return normalize(GridDensity(dom, out))


# ---------------------------------------------------------------------------
# Gaussians

def gaussian_density(domain: DomainSpec, mean, cov) -> GridDensity:
    """Multivariate normal sampled at cell centers and normalized."""
    if domain.kind not in ("euclidean_box", "slab"):
        raise UnsupportedDomain("gaussian_density needs a Euclidean-type domain")
    d = domain.ndim
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    _check_pd(cov)
    diff = domain.points - mean
    sol = np.einsum("...i,ij,...j->...", diff, np.linalg.inv(cov), diff)
    norm = (2 * math.pi) ** (d / 2) * math.sqrt(np.linalg.det(cov))
    return normalize(GridDensity(domain, np.exp(-0.5 * sol) / norm))


def _check_pd(cov: np.ndarray):
    if not np.allclose(cov, cov.T, atol=1e-12):
        raise NotPD("covariance not symmetric")
    if np.linalg.eigvalsh(cov).min() <= 0:
        raise NotPD("covariance has a nonpositive eigenvalue")


def gaussian_entropy_closed_form(cov) -> float:
    """log{(2 pi e)^{d/2} |Sigma|^{1/2}}, the max-entropy value at fixed
    covariance."""
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    _check_pd(cov)
    d = cov.shape[0]
    sign, logdet = np.linalg.slogdet(cov)
    return 0.5 * (d * math.log(2 * math.pi * math.e) + logdet)


def max_entropy_bound(d: GridDensity) -> float:
    """Upper bound on entropy from the Gaussian with the density's covariance."""
    return gaussian_entropy_closed_form(moments(d).covariance)


def coarsen(d: GridDensity, factors: tuple[int, ...]) -> GridDensity:
    """Aggregate cells into blocks (measure-weighted averages), e.g. to
    compare a fine solution with a sparse histogram on equal footing."""
    dom = d.domain
    if any(n % f for n, f in zip(dom.resolution, factors)):
        raise ValueError("factors must divide the resolution")
    new_res = tuple(n // f for n, f in zip(dom.resolution, factors))
    coarse_dom = DomainSpec(dom.kind, dom.extents, new_res, dom.periodic,
                            dom.weight_rule)
    blocks = tuple(x for pair in zip(new_res, factors) for x in pair)
    mass = (d.values * np.broadcast_to(dom.weights, d.values.shape)).reshape(blocks)
    wsum = np.broadcast_to(dom.weights, d.values.shape).reshape(blocks).copy()
    for ax in range(len(factors) - 1, -1, -1):
        mass = mass.sum(axis=2 * ax + 1)
        wsum = wsum.sum(axis=2 * ax + 1)
    return GridDensity(coarse_dom, mass / wsum)
