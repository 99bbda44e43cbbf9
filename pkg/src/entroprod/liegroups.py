"""SE(2) and SO(3) group arithmetic, exponential coordinates, Haar
quadrature, Lie-derivative stencils and group convolution.

Group elements are (x, y, theta) triples for SE(2) (theta in [-pi, pi))
and 3x3 orthonormal matrices for SO(3).  Right Lie derivatives of grid
functions are central differences along g exp(t E_i) with bilinear
interpolation in the translation plane; on the SO(3) radial grid a
general Lie derivative of a non-radial function is not representable,
so only the radial reduction (in grids.fisher_information) is offered
there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DomainMismatch, NearCutLocus, TagMismatch, UnsupportedDomain
from .grids import DomainSpec, GridDensity, GridField, normalize

SE2 = "se2"
SO3 = "so3"

ORTHO_DRIFT_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class GroupElem:
    """Element of SE(2) ((x, y, theta) payload) or SO(3) (3x3 matrix)."""

    tag: str
    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data, dtype=float)
        if self.tag == SE2:
            if d.shape != (3,):
                raise ValueError("se2 payload must be (x, y, theta)")
            d = d.copy()
            d[2] = wrap_angle(d[2])
        elif self.tag == SO3:
            if d.shape != (3, 3):
                raise ValueError("so3 payload must be a 3x3 matrix")
        else:
            raise TagMismatch(f"unknown group tag {self.tag!r}")
        object.__setattr__(self, "data", d)


@dataclass(frozen=True, eq=False)
class AlgebraVec:
    """Lie-algebra coordinates against the standard basis E_1..E_3."""

    tag: str
    vec: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vec, dtype=float)
        if v.shape != (3,):
            raise ValueError("algebra vector must have 3 components")
        object.__setattr__(self, "vec", v)


def wrap_angle(theta):
    return np.mod(np.asarray(theta) + math.pi, 2 * math.pi) - math.pi


def identity(tag: str) -> GroupElem:
    if tag == SE2:
        return GroupElem(SE2, np.zeros(3))
    return GroupElem(SO3, np.eye(3))


def se2_matrix(g: GroupElem) -> np.ndarray:
    """Homogeneous 3x3 form with bottom row (0, 0, 1)."""
    x, y, th = g.data
    c, s = math.cos(th), math.sin(th)
    return np.array([[c, -s, x], [s, c, y], [0.0, 0.0, 1.0]])


def orthonormalize(r: np.ndarray) -> np.ndarray:
    """Nearest special-orthogonal matrix (polar projection)."""
    u, _, vt = np.linalg.svd(r)
    out = u @ vt
    if np.linalg.det(out) < 0:
        u[:, -1] *= -1
        out = u @ vt
    return out


def compose(a: GroupElem, b: GroupElem) -> GroupElem:
    if a.tag != b.tag:
        raise TagMismatch(f"cannot compose {a.tag} with {b.tag}")
    if a.tag == SE2:
        xa, ya, ta = a.data
        xb, yb, tb = b.data
        c, s = math.cos(ta), math.sin(ta)
        return GroupElem(SE2, np.array([xa + c * xb - s * yb,
                                        ya + s * xb + c * yb,
                                        ta + tb]))
    r = a.data @ b.data
    if np.max(np.abs(r @ r.T - np.eye(3))) > ORTHO_DRIFT_TOL:
        r = orthonormalize(r)
    return GroupElem(SO3, r)


def inverse(a: GroupElem) -> GroupElem:
    if a.tag == SE2:
        x, y, th = a.data
        c, s = math.cos(th), math.sin(th)
        return GroupElem(SE2, np.array([-c * x - s * y, s * x - c * y, -th]))
    return GroupElem(SO3, a.data.T)


# ---------------------------------------------------------------------------
# algebra <-> group


def hat(v: AlgebraVec) -> np.ndarray:
    x1, x2, x3 = v.vec
    if v.tag == SO3:
        return np.array([[0.0, -x3, x2], [x3, 0.0, -x1], [-x2, x1, 0.0]])
    return np.array([[0.0, -x3, x1], [x3, 0.0, x2], [0.0, 0.0, 0.0]])


def vee(tag: str, mat: np.ndarray) -> AlgebraVec:
    mat = np.asarray(mat, dtype=float)
    if tag == SO3:
        return AlgebraVec(SO3, np.array([mat[2, 1], mat[0, 2], mat[1, 0]]))
    return AlgebraVec(SE2, np.array([mat[0, 2], mat[1, 2], mat[1, 0]]))


def _so3_exp(w: np.ndarray) -> np.ndarray:
    th = float(np.linalg.norm(w))
    k = hat(AlgebraVec(SO3, w)) if th > 0 else np.zeros((3, 3))
    if th < 1e-8:
        a = 1.0 - th * th / 6.0
        b = 0.5 - th * th / 24.0
    else:
        a = math.sin(th) / th
        b = (1.0 - math.cos(th)) / (th * th)
    return np.eye(3) + a * k + b * (k @ k)


def exp_map(v: AlgebraVec) -> GroupElem:
    if v.tag == SO3:
        return GroupElem(SO3, _so3_exp(v.vec))
    v1, v2, om = v.vec
    if abs(om) < 1e-8:
        a = 1.0 - om * om / 6.0
        b = om / 2.0 - om ** 3 / 24.0
    else:
        a = math.sin(om) / om
        b = (1.0 - math.cos(om)) / om
    return GroupElem(SE2, np.array([a * v1 - b * v2, b * v1 + a * v2, om]))


def log_map(g: GroupElem) -> AlgebraVec:
    if g.tag == SO3:
        r = g.data
        tr = float(np.trace(r))
        if tr <= -1.0 + 1e-9:
            raise NearCutLocus("rotation angle too close to pi for a log")
        th = math.acos(min(1.0, max(-1.0, (tr - 1.0) / 2.0)))
        skew = 0.5 * (r - r.T)
        w = np.array([skew[2, 1], skew[0, 2], skew[1, 0]])
        if th < 1e-8:
            return AlgebraVec(SO3, w * (1.0 + th * th / 6.0))
        return AlgebraVec(SO3, w * th / math.sin(th))
    x, y, om = g.data
    if abs(om) >= math.pi - 1e-12:
        raise NearCutLocus("se2 angle at the cut locus")
    if abs(om) < 1e-8:
        a = 1.0 - om * om / 6.0
        b = om / 2.0
    else:
        a = math.sin(om) / om
        b = (1.0 - math.cos(om)) / om
    det = a * a + b * b
    return AlgebraVec(SE2, np.array([(a * x + b * y) / det,
                                     (-b * x + a * y) / det, om]))


def rotation_angle(r: np.ndarray) -> np.ndarray:
    """Rotation angle in [0, pi] for one or many 3x3 matrices."""
    tr = np.trace(np.asarray(r), axis1=-2, axis2=-1)
    return np.arccos(np.clip((tr - 1.0) / 2.0, -1.0, 1.0))


def axis_angle_rotation(theta, nu, lam) -> np.ndarray:
    """Vectorized R = exp(theta hat(n(nu, lam))), broadcasting inputs."""
    theta, nu, lam = np.broadcast_arrays(theta, nu, lam)
    n1 = np.sin(nu) * np.cos(lam)
    n2 = np.sin(nu) * np.sin(lam)
    n3 = np.cos(nu)
    zeros = np.zeros_like(n1)
    k = np.stack([np.stack([zeros, -n3, n2], axis=-1),
                  np.stack([n3, zeros, -n1], axis=-1),
                  np.stack([-n2, n1, zeros], axis=-1)], axis=-2)
    st = np.sin(theta)[..., None, None]
    ct = (1.0 - np.cos(theta))[..., None, None]
    return np.eye(3) + st * k + ct * (k @ k)


# ---------------------------------------------------------------------------
# Haar quadrature


def haar_quadrature(domain: DomainSpec) -> np.ndarray:
    """Per-cell weights against the (bi-invariant) group measure."""
    if domain.kind not in ("se2_box", "so3_radial", "circle"):
        raise UnsupportedDomain(f"no Haar rule for domain kind {domain.kind}")
    return domain.weights


@dataclass(frozen=True, eq=False)
class So3EulerGrid:
    """Axis-angle product grid (theta, nu, lambda) with normalized Haar
    weights (1 / 2 pi^2) sin^2(theta/2) sin(nu); single cover
    theta in [0, pi]."""

    theta: np.ndarray
    nu: np.ndarray
    lam: np.ndarray
    weights: np.ndarray    # (nt, nn, nl)
    rotations: np.ndarray  # (nt, nn, nl, 3, 3)


def so3_euler_grid(n_theta: int, n_nu: int, n_lam: int) -> So3EulerGrid:
    ht, hn, hl = math.pi / n_theta, math.pi / n_nu, 2 * math.pi / n_lam
    theta = (np.arange(n_theta) + 0.5) * ht
    nu = (np.arange(n_nu) + 0.5) * hn
    lam = (np.arange(n_lam) + 0.5) * hl - math.pi
    # exact cell-integrated measure so the weights total exactly 1
    t_edges = np.arange(n_theta + 1) * ht
    w_theta = 0.5 * (np.diff(t_edges) - np.diff(np.sin(t_edges)))
    n_edges = np.arange(n_nu + 1) * hn
    w_nu = -np.diff(np.cos(n_edges))
    w = (w_theta[:, None, None] * w_nu[None, :, None]
         * np.full(n_lam, hl)[None, None, :]) / (2 * math.pi ** 2)
    tg, ng, lg = np.meshgrid(theta, nu, lam, indexing="ij")
    return So3EulerGrid(theta, nu, lam, w, axis_angle_rotation(tg, ng, lg))


# ---------------------------------------------------------------------------
# Lie derivatives on SE(2) grids


def _bilinear_shift(plane: np.ndarray, dx_cells: float, dy_cells: float) -> np.ndarray:
    """Sample plane at (i + dx_cells, j + dy_cells); edge values are
    replicated outside so that constants shift to themselves."""
    fx, fy = math.floor(dx_cells), math.floor(dy_cells)
    rx, ry = dx_cells - fx, dy_cells - fy
    nx, ny = plane.shape

    def shifted(ax_off, ay_off):
        ix = np.clip(np.arange(nx) + ax_off, 0, nx - 1)
        iy = np.clip(np.arange(ny) + ay_off, 0, ny - 1)
        return plane[np.ix_(ix, iy)]

    return ((1 - rx) * (1 - ry) * shifted(fx, fy)
            + rx * (1 - ry) * shifted(fx + 1, fy)
            + (1 - rx) * ry * shifted(fx, fy + 1)
            + rx * ry * shifted(fx + 1, fy + 1))


def lie_derivative(f: GridDensity | GridField, i: int) -> GridField:
    """(E~_i f)(g) = d/dt f(g exp(t E_i)) |_0 by central differences.

    Supported on se2_box grids.  E_1 and E_2 move the translation part by
    a body-frame step (bilinear interpolation, zero outside for decaying
    densities); E_3 is an exact shift along the periodic theta axis.
    """
    dom = f.domain
    if dom.kind != "se2_box":
        raise UnsupportedDomain(
            "lie_derivative needs an se2_box grid (SO(3) work uses the "
            "radial reduction or the Euler-chart helpers)")
    if i not in (0, 1, 2):
        raise ValueError("basis index must be 0, 1 or 2")
    vals = f.values
    hx, hy, hth = dom.spacing
    if i == 2:
        g = (np.roll(vals, -1, axis=2) - np.roll(vals, 1, axis=2)) / (2 * hth)
        return GridField(dom, g)
    h = min(hx, hy)
    theta = dom.axis_centers(2)
    out = np.empty_like(vals)
    for k, th in enumerate(theta):
        if i == 0:
            dx, dy = h * math.cos(th), h * math.sin(th)
        else:
            dx, dy = -h * math.sin(th), h * math.cos(th)
        plus = _bilinear_shift(vals[:, :, k], dx / hx, dy / hy)
        minus = _bilinear_shift(vals[:, :, k], -dx / hx, -dy / hy)
        out[:, :, k] = (plus - minus) / (2 * h)
    return GridField(dom, out)


# ---------------------------------------------------------------------------
# group convolution


def _se2_group_convolve(f1: GridDensity, f2: GridDensity) -> GridDensity:
    dom = f1.domain
    nx, ny, nth = dom.resolution
    if nth % 2 == 0:
        raise DomainMismatch(
            "se2 convolution needs an odd theta count so that angle sums "
            "land back on the cell-centered grid")
    hx, hy, hth = dom.spacing
    x0 = dom.axis_centers(0)
    y0 = dom.axis_centers(1)
    theta = dom.axis_centers(2)
    # offset grid u = x - x_h spans the full difference lattice
    u = (np.arange(2 * nx - 1) - (nx - 1)) * hx
    v = (np.arange(2 * ny - 1) - (ny - 1)) * hy
    ug, vg = np.meshgrid(u, v, indexing="ij")
    fshape = (3 * nx - 2, 3 * ny - 2)
    axes = (0, 1)
    out = np.zeros((nx, ny, nth))
    for ih, th_h in enumerate(theta):
        a_hat = np.fft.rfftn(f1.values[:, :, ih], s=fshape, axes=axes)
        c, s = math.cos(-th_h), math.sin(-th_h)
        # body-frame coordinates of the offset, bilinearly sampled in f2
        xq = c * ug - s * vg
        yq = s * ug + c * vg
        ix = (xq - x0[0]) / hx
        iy = (yq - y0[0]) / hy
        for dth in range(nth):
            # theta[ih] + theta[dth] lies at cell ih + dth - (nth - 1)/2
            k_out = (ih + dth - (nth - 1) // 2) % nth
            g = _bilinear_gather(f2.values[:, :, dth], ix, iy)
            if not g.any():
                continue
            g_hat = np.fft.rfftn(g, s=fshape, axes=axes)
            conv = np.fft.irfftn(a_hat * g_hat, s=fshape, axes=axes)
            out[:, :, k_out] += conv[nx - 1:2 * nx - 1, ny - 1:2 * ny - 1]
    out *= dom.cell_volume
    return normalize(GridDensity(dom, np.clip(out, 0.0, None)))


def _bilinear_gather(plane: np.ndarray, ix: np.ndarray, iy: np.ndarray) -> np.ndarray:
    """Sample plane at fractional indices, zero outside."""
    nx, ny = plane.shape
    fx = np.floor(ix).astype(int)
    fy = np.floor(iy).astype(int)
    rx, ry = ix - fx, iy - fy
    out = np.zeros(ix.shape)
    for ox, wx in ((0, 1 - rx), (1, rx)):
        for oy, wy in ((0, 1 - ry), (1, ry)):
            gx, gy = fx + ox, fy + oy
            ok = (gx >= 0) & (gx < nx) & (gy >= 0) & (gy < ny)
            vals = np.zeros(ix.shape)
            vals[ok] = plane[gx[ok], gy[ok]]
            out += wx * wy * vals
    return out


def _radial_interp(values: np.ndarray, centers: np.ndarray,
                   query: np.ndarray) -> np.ndarray:
    """Linear interpolation of an even function of the rotation angle,
    mirrored at 0 and pi."""
    q = np.abs(query)
    q = np.where(q > math.pi, 2 * math.pi - q, q)
    h = centers[1] - centers[0]
    # mirror ghosts: f(-theta) = f(theta), f(pi + t) = f(pi - t)
    ext_centers = np.concatenate(([centers[0] - h], centers, [centers[-1] + h]))
    ext_vals = np.concatenate(([values[0]], values, [values[-1]]))
    return np.interp(q, ext_centers, ext_vals)


def _so3_radial_convolve(f1: GridDensity, f2: GridDensity,
                         n_psi: int = 256) -> GridDensity:
    """Convolution of two rotation-angle-only densities.

    The angle of h^{-1} g depends on the two angles and the angle psi
    between the rotation axes through
    cos(Delta/2) = |cos(a/2) cos(b/2) + sin(a/2) sin(b/2) cos(psi)|,
    and averaging the axis over the sphere leaves (1/2) sin(psi) d psi.
    """
    dom = f1.domain
    th = dom.axis_centers(0)
    w_th = dom.weights
    psi = (np.arange(n_psi) + 0.5) * math.pi / n_psi
    w_psi = 0.5 * np.sin(psi) * (math.pi / n_psi)
    cos_half_g = np.cos(th / 2)[:, None, None]
    sin_half_g = np.sin(th / 2)[:, None, None]
    cos_half_h = np.cos(th / 2)[None, :, None]
    sin_half_h = np.sin(th / 2)[None, :, None]
    cos_psi = np.cos(psi)[None, None, :]
    w = np.abs(cos_half_g * cos_half_h + sin_half_g * sin_half_h * cos_psi)
    delta = 2.0 * np.arccos(np.clip(w, 0.0, 1.0))
    f2_at = _radial_interp(f2.values, th, delta.ravel()).reshape(delta.shape)
    out = np.einsum("h,p,ghp->g", f1.values * w_th, w_psi, f2_at)
    return normalize(GridDensity(dom, np.clip(out, 0.0, None)))


def group_convolve(f1: GridDensity, f2: GridDensity) -> GridDensity:
    """(f1 * f2)(g) = int f1(h) f2(h^{-1} g) dh by quadrature with
    interpolation; both inputs normalized on the same group domain."""
    if f1.domain != f2.domain:
        raise DomainMismatch("group convolution requires a shared domain")
    for f in (f1, f2):
        if abs(f.integral() - 1.0) > 1e-6:
            raise ValueError("group convolution expects normalized densities")
    kind = f1.domain.kind
    if kind == "se2_box":
        return _se2_group_convolve(f1, f2)
    if kind == "so3_radial":
        return _so3_radial_convolve(f1, f2)
    raise UnsupportedDomain(f"group convolution undefined on {kind}")
