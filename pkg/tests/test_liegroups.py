import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from entroprod.errors import (
    DomainMismatch,
    NearCutLocus,
    TagMismatch,
    UnsupportedDomain,
)
from entroprod.grids import DomainSpec, GridDensity, GridField, normalize
from entroprod.liegroups import (
    SE2,
    SO3,
    AlgebraVec,
    GroupElem,
    compose,
    exp_map,
    group_convolve,
    haar_quadrature,
    hat,
    identity,
    inverse,
    lie_derivative,
    log_map,
    se2_matrix,
    so3_euler_grid,
    vee,
    wrap_angle,
)

rot_vecs = st.tuples(*[st.floats(-2.0, 2.0) for _ in range(3)]).filter(
    lambda v: math.sqrt(sum(x * x for x in v)) < math.pi - 0.05
)


def se2_bump(dom, cx, cy, cth, sx=0.15, sth=0.4):
    pts = dom.points
    vals = np.exp(
        -((pts[..., 0] - cx) ** 2 + (pts[..., 1] - cy) ** 2) / (2 * sx)
        - wrap_angle(pts[..., 2] - cth) ** 2 / (2 * sth)
    )
    return normalize(GridDensity(dom, vals))


class TestGroupOps:
    def test_pure_translations_commute(self):
        a = GroupElem(SE2, np.array([1.0, 0.0, 0.0]))
        b = GroupElem(SE2, np.array([0.0, 1.0, 0.0]))
        assert np.allclose(compose(a, b).data, [1.0, 1.0, 0.0])
        assert np.allclose(compose(b, a).data, [1.0, 1.0, 0.0])

    def test_rotation_then_translation(self):
        a = GroupElem(SE2, np.array([0.0, 0.0, math.pi / 2]))
        b = GroupElem(SE2, np.array([1.0, 0.0, 0.0]))
        out = compose(a, b)
        assert np.allclose(out.data, [0.0, 1.0, math.pi / 2], atol=1e-12)
        # agrees with homogeneous matrix multiplication
        ref = se2_matrix(a) @ se2_matrix(b)
        assert np.allclose(se2_matrix(out), ref, atol=1e-12)

    def test_so3_inverse_roundtrip(self):
        r = exp_map(AlgebraVec(SO3, np.array([0.4, -0.8, 1.1])))
        back = compose(r, inverse(r))
        assert np.allclose(back.data, np.eye(3), atol=1e-12)

    def test_tag_mismatch(self):
        with pytest.raises(TagMismatch):
            compose(identity(SE2), identity(SO3))

    @given(rot_vecs, rot_vecs, rot_vecs)
    @settings(max_examples=30, deadline=None)
    def test_associativity(self, u, v, w):
        a, b, c = (exp_map(AlgebraVec(SO3, np.array(x))) for x in (u, v, w))
        left = compose(compose(a, b), c).data
        right = compose(a, compose(b, c)).data
        assert np.max(np.abs(left - right)) < 1e-12

    def test_orthonormality_over_long_products(self):
        rng = np.random.default_rng(0)
        pool = [exp_map(AlgebraVec(SO3, rng.uniform(-1, 1, 3)))
                for _ in range(512)]
        r = identity(SO3)
        for k in range(1_000_000):
            r = compose(r, pool[k & 511])
        drift = np.max(np.abs(r.data @ r.data.T - np.eye(3)))
        assert drift < 1e-9
        assert abs(np.linalg.det(r.data) - 1.0) < 1e-9


class TestExpLog:
    def test_exp_zero(self):
        assert np.allclose(exp_map(AlgebraVec(SO3, np.zeros(3))).data, np.eye(3))
        assert np.allclose(exp_map(AlgebraVec(SE2, np.zeros(3))).data, np.zeros(3))

    def test_quarter_turn(self):
        r = exp_map(AlgebraVec(SO3, np.array([0.0, 0.0, math.pi / 2])))
        assert np.allclose(r.data @ np.array([1.0, 0, 0]), [0, 1, 0], atol=1e-12)

    def test_se2_translation_generator(self):
        g = exp_map(AlgebraVec(SE2, np.array([0.7, 0.0, 0.0])))
        assert np.allclose(g.data, [0.7, 0.0, 0.0])

    @given(rot_vecs)
    @settings(max_examples=50, deadline=None)
    def test_so3_roundtrip(self, v):
        v = np.array(v)
        out = log_map(exp_map(AlgebraVec(SO3, v))).vec
        assert np.max(np.abs(out - v)) < 1e-10

    @given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3.0, 3.0))
    @settings(max_examples=50, deadline=None)
    def test_se2_roundtrip(self, v1, v2, om):
        om = max(min(om, math.pi - 0.05), -math.pi + 0.05)
        v = np.array([v1, v2, om])
        out = log_map(exp_map(AlgebraVec(SE2, v))).vec
        assert np.max(np.abs(out - v)) < 1e-10

    def test_near_cut_locus(self):
        r = exp_map(AlgebraVec(SO3, np.array([math.pi - 1e-12, 0.0, 0.0])))
        with pytest.raises(NearCutLocus):
            log_map(r)

    @given(rot_vecs)
    @settings(max_examples=25, deadline=None)
    def test_hat_vee(self, v):
        x = hat(AlgebraVec(SO3, np.array(v)))
        assert np.allclose(hat(vee(SO3, x)), x)


class TestHaar:
    def test_so3_radial_normalized(self):
        dom = DomainSpec.so3_radial(128)
        assert float(haar_quadrature(dom).sum()) == pytest.approx(1.0, abs=1e-10)

    def test_radial_sin_squared_identity(self):
        # (2/pi) int_0^pi sin^2(theta/2) dtheta = 1
        dom = DomainSpec.so3_radial(64)
        u = np.ones(64)
        assert float(np.sum(u * dom.weights)) == pytest.approx(1.0, abs=1e-12)

    def test_euler_grid_total(self):
        grid = so3_euler_grid(24, 16, 24)
        assert float(grid.weights.sum()) == pytest.approx(1.0, abs=1e-6)

    def test_shift_invariance_so3(self):
        grid = so3_euler_grid(32, 24, 32)
        a = np.array([[0.2, 0.1, -0.3], [0.0, 0.4, 0.2], [-0.1, 0.2, 0.3]])

        def smooth(r):
            return np.exp(np.einsum("...ij,ij->...", r, a))

        g0 = exp_map(AlgebraVec(SO3, np.array([0.7, -0.4, 1.2]))).data
        lhs = float(np.sum(smooth(g0 @ grid.rotations) * grid.weights))
        rhs = float(np.sum(smooth(grid.rotations) * grid.weights))
        assert lhs == pytest.approx(rhs, rel=1e-3)

    def test_shift_invariance_se2(self):
        def smooth(x, y, th):
            return np.exp(-((x - 0.2) ** 2 + (y + 0.1) ** 2) / (2 * 0.15)
                          - wrap_angle(th - 0.3) ** 2 / (2 * 0.4))

        dom = DomainSpec.se2_box((-3, 3), (-3, 3), (48, 48, 32))
        pts = dom.points
        g0 = np.array([0.4, -0.3, 0.5])
        c, s = math.cos(g0[2]), math.sin(g0[2])
        # evaluate the same function at g0 o g and at g
        lhs_vals = smooth(g0[0] + c * pts[..., 0] - s * pts[..., 1],
                          g0[1] + s * pts[..., 0] + c * pts[..., 1],
                          g0[2] + pts[..., 2])
        lhs = float(np.sum(lhs_vals * dom.weights))
        rhs = float(np.sum(smooth(pts[..., 0], pts[..., 1], pts[..., 2])
                           * dom.weights))
        assert lhs == pytest.approx(rhs, rel=1e-3)


class TestLieDerivative:
    def test_constant_field_zero(self):
        dom = DomainSpec.se2_box((-2, 2), (-2, 2), (24, 24, 16))
        f = GridField(dom, np.ones(dom.resolution))
        for i in range(3):
            assert np.max(np.abs(lie_derivative(f, i).values)) < 1e-12

    def test_chart_x_derivative(self):
        dom = DomainSpec.se2_box((-2, 2), (-2, 2), (48, 48, 32))
        f = GridField(dom, dom.points[..., 0])
        th = dom.axis_centers(2)
        out = lie_derivative(f, 0).values[10:-10, 10:-10, :]
        assert np.max(np.abs(out - np.cos(th)[None, None, :])) < 1e-10

    def test_integration_by_parts(self):
        dom = DomainSpec.se2_box((-2, 2), (-2, 2), (64, 64, 64))
        f1 = se2_bump(dom, 0.3, -0.2, 0.5)
        f2 = se2_bump(dom, -0.4, 0.1, -0.7)
        w = dom.weights
        for i in range(3):
            lhs = float(np.sum(f1.values * lie_derivative(f2, i).values * w))
            rhs = -float(np.sum(f2.values * lie_derivative(f1, i).values * w))
            assert lhs == pytest.approx(rhs, abs=1e-3)

    def test_so3_radial_unsupported(self):
        dom = DomainSpec.so3_radial(32)
        f = GridField(dom, np.ones(32))
        with pytest.raises(UnsupportedDomain):
            lie_derivative(f, 0)


class TestGroupConvolve:
    def test_delta_identity_se2(self):
        # odd cell counts put the group identity exactly on a cell center
        dom = DomainSpec.se2_box((-2, 2), (-2, 2), (25, 25, 17))
        f = se2_bump(dom, 0.2, 0.1, 0.4, sx=0.08, sth=0.3)
        vals = np.zeros(dom.resolution)
        vals[12, 12, 8] = 1.0
        delta = normalize(GridDensity(dom, vals))
        # delta on the left reproduces f exactly (integrand hits grid points)
        left = group_convolve(delta, f)
        assert float(np.sum(np.abs(left.values - f.values) * dom.weights)) < 1e-12
        # delta on the right is smeared by one cell of bilinear interpolation
        right = group_convolve(f, delta)
        assert float(np.sum(np.abs(right.values - f.values) * dom.weights)) < 0.15

    def test_noncommutative_witness(self):
        dom = DomainSpec.se2_box((-2, 2), (-2, 2), (24, 24, 17))
        f1 = se2_bump(dom, 0.5, 0.0, 0.9, sx=0.05, sth=0.25)
        f2 = se2_bump(dom, -0.3, 0.2, -0.6, sx=0.05, sth=0.25)
        ab = group_convolve(f1, f2)
        ba = group_convolve(f2, f1)
        gap = float(np.sum(np.abs(ab.values - ba.values) * dom.weights))
        assert gap > 0.01

    def test_so3_semigroup(self):
        from entroprod.kernels import so3_kernel_density

        dom = DomainSpec.so3_radial(256)
        f1 = so3_kernel_density(dom, 0.1)
        f2 = so3_kernel_density(dom, 0.25)
        out = group_convolve(f1, f2)
        ref = so3_kernel_density(dom, 0.35)
        assert np.max(np.abs(out.values - ref.values)) < 1e-3

    def test_domain_mismatch(self):
        a = normalize(GridDensity(DomainSpec.so3_radial(32), np.ones(32)))
        b = normalize(GridDensity(DomainSpec.so3_radial(64), np.ones(64)))
        with pytest.raises(DomainMismatch):
            group_convolve(a, b)
