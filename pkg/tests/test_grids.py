import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from entroprod import (
    DomainSpec,
    GridDensity,
    convolve,
    entropy,
    fisher_information,
    gaussian_density,
    gaussian_entropy_closed_form,
    jensen_lower_bound,
    l2_norm_sq,
    max_entropy_bound,
    moments,
    normalize,
)
from entroprod.errors import (
    DomainMismatch,
    NotNormalized,
    NotPD,
    UnsupportedDomain,
    ZeroMass,
)

LOG_2PI = math.log(2 * math.pi)
LOG_2PIE = math.log(2 * math.pi * math.e)


def unit_box(n=64):
    return DomainSpec.box([(0.0, 1.0)], (n,))


def wrapped_gaussian(domain, dt, mean=0.0, k_max=8):
    th = domain.axis_centers(0)
    vals = sum(
        np.exp(-((th - mean - 2 * np.pi * k) ** 2) / (2 * dt))
        for k in range(-k_max, k_max + 1)
    ) / math.sqrt(2 * math.pi * dt)
    return normalize(GridDensity(domain, vals))


class TestNormalize:
    def test_uniform_scaling(self):
        d = GridDensity(unit_box(), np.full(64, 2.0))
        out = normalize(d)
        assert np.allclose(out.values, 1.0, atol=1e-12)

    def test_idempotent_on_gaussian(self):
        dom = DomainSpec.box([(-8, 8)], (256,))
        g = gaussian_density(dom, [0.0], [[1.0]])
        again = normalize(g)
        assert np.max(np.abs(again.values - g.values)) < 1e-12

    def test_zero_mass(self):
        with pytest.raises(ZeroMass):
            normalize(GridDensity(unit_box(), np.zeros(64)))

    @given(st.floats(min_value=1e-6, max_value=1e6))
    def test_scale_invariance(self, c):
        rng = np.random.default_rng(0)
        vals = rng.random(64) + 0.1
        d = GridDensity(unit_box(), vals)
        a = normalize(d)
        b = normalize(GridDensity(unit_box(), c * vals))
        assert np.allclose(a.values, b.values, rtol=1e-12)


class TestEntropy:
    def test_gaussian_2d(self):
        dom = DomainSpec.box([(-6, 6), (-6, 6)], (256, 256))
        g = gaussian_density(dom, [0, 0], np.eye(2))
        assert entropy(g) == pytest.approx(LOG_2PIE, abs=1e-3)

    def test_circle_uniform(self):
        dom = DomainSpec.circle(128)
        u = normalize(GridDensity(dom, np.ones(128)))
        assert entropy(u) == pytest.approx(LOG_2PI, abs=1e-12)

    def test_unit_box_uniform_zero(self):
        u = normalize(GridDensity(unit_box(), np.ones(64)))
        assert entropy(u) == pytest.approx(0.0, abs=1e-12)

    def test_not_normalized(self):
        d = GridDensity(unit_box(), np.full(64, 2.0))
        with pytest.raises(NotNormalized):
            entropy(d)


class TestJensenBound:
    def test_gaussian_line(self):
        dom = DomainSpec.box([(-10, 10)], (512,))
        g = gaussian_density(dom, [0.0], [[1.0]])
        bound = jensen_lower_bound(g)
        assert bound == pytest.approx(0.5 * math.log(4 * math.pi), abs=1e-6)
        assert entropy(g) == pytest.approx(0.5 * LOG_2PIE, abs=1e-6)
        assert entropy(g) >= bound

    def test_circle_uniform_equality(self):
        dom = DomainSpec.circle(64)
        u = normalize(GridDensity(dom, np.ones(64)))
        assert jensen_lower_bound(u) == pytest.approx(entropy(u), abs=1e-12)

    def test_wrapped_gaussian_gap(self):
        dom = DomainSpec.circle(512)
        f = wrapped_gaussian(dom, 0.5)
        s = entropy(f)
        b = jensen_lower_bound(f)
        assert s >= b
        assert s - b > 1e-3

    @given(st.integers(min_value=0, max_value=2**31))
    @settings(max_examples=25, deadline=None)
    def test_jensen_holds_for_random_densities(self, seed):
        rng = np.random.default_rng(seed)
        vals = rng.random(64) ** 2 + 1e-3
        d = normalize(GridDensity(unit_box(), vals))
        assert entropy(d) >= jensen_lower_bound(d) - 1e-12


class TestFisher:
    def test_gaussian_inverse_cov(self):
        cov = np.array([[1.2, 0.3], [0.3, 0.7]])
        dom = DomainSpec.box([(-7, 7), (-6, 6)], (256, 256))
        g = gaussian_density(dom, [0, 0], cov)
        f = fisher_information(g)
        ref = np.linalg.inv(cov)
        assert np.linalg.norm(f - ref) / np.linalg.norm(ref) < 0.01
        # symmetric PSD
        assert np.allclose(f, f.T)
        assert np.linalg.eigvalsh(f).min() >= 0

    def test_circle_uniform_zero(self):
        dom = DomainSpec.circle(64)
        u = normalize(GridDensity(dom, np.ones(64)))
        assert fisher_information(u)[0, 0] == pytest.approx(0.0, abs=1e-12)

    def test_wrapped_gaussian_small_dt(self):
        dom = DomainSpec.circle(1024)
        f = wrapped_gaussian(dom, 0.1)
        val = fisher_information(f)[0, 0]
        assert val == pytest.approx(10.0, rel=0.01)


class TestMoments:
    def test_gaussian_roundtrip(self):
        cov = np.array([[0.8, 0.2], [0.2, 1.5]])
        mean = np.array([0.4, -0.3])
        dom = DomainSpec.box([(-7, 7), (-8, 8)], (200, 200))
        g = gaussian_density(dom, mean, cov)
        m = moments(g)
        assert np.allclose(m.mean, mean, atol=0.005 * np.abs(mean).max())
        assert np.linalg.norm(m.covariance - cov) / np.linalg.norm(cov) < 0.005

    def test_circle_heat_kernel_variance(self):
        dt = 1.0
        dom = DomainSpec.circle(2048)
        f = wrapped_gaussian(dom, dt)
        m = moments(f)
        series = math.pi**2 / 3 + 4 * sum(
            (-1) ** n / n**2 * math.exp(-dt * n**2 / 2) for n in range(1, 50)
        )
        assert m.on_chart
        assert m.mean[0] == pytest.approx(0.0, abs=1e-10)
        assert m.covariance[0, 0] == pytest.approx(series, abs=1e-4)

    def test_delta_like(self):
        dom = unit_box()
        vals = np.zeros(64)
        vals[10] = 1.0
        d = normalize(GridDensity(dom, vals))
        m = moments(d)
        assert m.mean[0] == pytest.approx(dom.axis_centers(0)[10])
        assert abs(m.covariance[0, 0]) < 1e-10

    def test_so3_radial_unsupported(self):
        dom = DomainSpec.so3_radial(64)
        u = normalize(GridDensity(dom, np.ones(64)))
        with pytest.raises(UnsupportedDomain):
            moments(u)


class TestConvolve:
    def test_gaussian_closure(self):
        dom = DomainSpec.box([(-16, 16)], (1025,))
        f1 = gaussian_density(dom, [0.0], [[1.0]])
        f2 = gaussian_density(dom, [0.0], [[2.0]])
        out = convolve(f1, f2)
        ref = gaussian_density(dom, [0.0], [[3.0]])
        assert np.max(np.abs(out.values - ref.values)) < 1e-4
        assert out.integral() == pytest.approx(1.0, abs=1e-12)

    def test_identity_with_delta(self):
        dom = DomainSpec.box([(-4, 4)], (513,))
        f = gaussian_density(dom, [0.5], [[0.3]])
        vals = np.zeros(513)
        vals[256] = 1.0  # delta at the origin cell
        delta = normalize(GridDensity(dom, vals))
        out = convolve(f, delta)
        assert np.max(np.abs(out.values - f.values)) < 1e-9

    def test_circle_wrapped_gaussians(self):
        dom = DomainSpec.circle(513)
        f1 = wrapped_gaussian(dom, 0.2)
        f2 = wrapped_gaussian(dom, 0.3)
        out = convolve(f1, f2)
        ref = wrapped_gaussian(dom, 0.5)
        assert np.max(np.abs(out.values - ref.values)) < 1e-6

    def test_commutative(self):
        dom = DomainSpec.box([(-8, 8)], (257,))
        f1 = gaussian_density(dom, [1.0], [[0.5]])
        f2 = gaussian_density(dom, [-0.7], [[0.9]])
        a = convolve(f1, f2)
        b = convolve(f2, f1)
        assert np.max(np.abs(a.values - b.values)) < 1e-10

    def test_domain_mismatch(self):
        f1 = gaussian_density(DomainSpec.box([(-4, 4)], (65,)), [0.0], [[1.0]])
        f2 = gaussian_density(DomainSpec.box([(-5, 5)], (65,)), [0.0], [[1.0]])
        with pytest.raises(DomainMismatch):
            convolve(f1, f2)

    def test_off_lattice_origin_rejected(self):
        dom = DomainSpec.box([(-4, 4)], (64,))  # even N: centers miss 0
        f = gaussian_density(dom, [0.0], [[1.0]])
        with pytest.raises(DomainMismatch):
            convolve(f, f)


class TestGaussianClosedForm:
    def test_1d(self):
        assert gaussian_entropy_closed_form([[1.0]]) == pytest.approx(
            0.5 * LOG_2PIE, abs=1e-12
        )

    def test_2d_identity(self):
        assert gaussian_entropy_closed_form(np.eye(2)) == pytest.approx(
            LOG_2PIE, abs=1e-12
        )

    def test_rotation_invariance(self):
        cov = np.diag([2.0, 0.5])
        th = 0.7
        r = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
        rotated = r @ cov @ r.T
        assert gaussian_entropy_closed_form(rotated) == pytest.approx(
            gaussian_entropy_closed_form(cov), abs=1e-12
        )

    def test_not_pd(self):
        with pytest.raises(NotPD):
            gaussian_entropy_closed_form([[0.0]])

    def test_grid_matches_closed_form(self):
        cov = np.array([[0.9, -0.2], [-0.2, 1.1]])
        dom = DomainSpec.box([(-6.5, 6.5), (-7, 7)], (256, 256))
        g = gaussian_density(dom, [0, 0], cov)
        assert entropy(g) == pytest.approx(
            gaussian_entropy_closed_form(cov), abs=1e-3
        )


class TestMaxEntropyBound:
    @given(st.integers(min_value=0, max_value=2**31))
    @settings(max_examples=20, deadline=None)
    def test_holds_for_random_mixtures(self, seed):
        rng = np.random.default_rng(seed)
        dom = DomainSpec.box([(-12, 12)], (512,))
        x = dom.axis_centers(0)
        mu1, mu2 = rng.uniform(-2, 2, size=2)
        s1, s2 = rng.uniform(0.3, 1.5, size=2)
        w = rng.uniform(0.2, 0.8)
        vals = w * np.exp(-((x - mu1) ** 2) / (2 * s1**2)) / s1 + (1 - w) * np.exp(
            -((x - mu2) ** 2) / (2 * s2**2)
        ) / s2
        d = normalize(GridDensity(dom, vals))
        assert entropy(d) <= max_entropy_bound(d) + 1e-9
