import math

import numpy as np
import pytest

from entroprod import DomainSpec, GridDensity, gaussian_density, moments, normalize
from entroprod.errors import StabilityViolation, UnsupportedDomain
from entroprod.fpe import (
    apply_operator_ito,
    apply_operator_stratonovich,
    compressible_moment_rhs,
    compressible_problem,
    couette_problem,
    make_problem,
    solve,
    stability_limit,
    stationarity_residual,
)
from entroprod.sde import ITO, STRATONOVICH, SdeModel, constant_noise_model


def wrapped_gaussian(domain, dt, k_max=8):
    th = domain.axis_centers(0)
    vals = sum(
        np.exp(-((th - 2 * np.pi * k) ** 2) / (2 * dt))
        for k in range(-k_max, k_max + 1)
    ) / math.sqrt(2 * math.pi * dt)
    return normalize(GridDensity(domain, vals))


def random_density(domain, seed=0, floor=0.05):
    rng = np.random.default_rng(seed)
    return normalize(GridDensity(domain, rng.random(domain.resolution) + floor))


def cart_sde(r=1.0, wheelbase=2.0, wheel_noise=1.0, omega=1.0):
    root = math.sqrt(wheel_noise)

    def drift(x, t):
        out = np.zeros_like(x)
        out[..., 0] = r * omega * np.cos(x[..., 2])
        out[..., 1] = r * omega * np.sin(x[..., 2])
        return out

    def noise(x, t):
        th = x[..., 2]
        b = np.zeros(x.shape[:-1] + (3, 2))
        b[..., 0, 0] = b[..., 0, 1] = (r / 2) * np.cos(th) * root
        b[..., 1, 0] = b[..., 1, 1] = (r / 2) * np.sin(th) * root
        b[..., 2, 0] = (r / wheelbase) * root
        b[..., 2, 1] = -(r / wheelbase) * root
        return b

    return SdeModel(3, 2, ITO, drift, noise)


class TestOperators:
    def test_ou_stationary_residual(self):
        dom = DomainSpec.box([(-6, 6)], (512,))
        model = constant_noise_model(1, lambda x, t: -x, [[math.sqrt(2.0)]])
        g = gaussian_density(dom, [0.0], [[1.0]])
        p = make_problem(dom, model, g)
        assert stationarity_residual(p, g) < 1e-3

    def test_uniform_circle_diffusion_zero(self):
        dom = DomainSpec.circle(64)
        model = constant_noise_model(1, lambda x, t: np.zeros_like(x), [[1.0]])
        u = normalize(GridDensity(dom, np.ones(64)))
        p = make_problem(dom, model, u)
        assert np.max(np.abs(apply_operator_ito(p, u).values)) < 1e-14
        assert np.max(np.abs(apply_operator_stratonovich(p, u).values)) < 1e-14

    def test_conservation_any_density(self):
        dom = DomainSpec.box([(-3, 3), (-2, 2)], (48, 40))
        model = constant_noise_model(
            2, lambda x, t: np.stack([np.sin(x[..., 1]), -x[..., 0]], axis=-1),
            [[1.0, 0.2], [0.0, 0.8]])
        f = random_density(dom, seed=4)
        p = make_problem(dom, model, f)
        assert abs(apply_operator_ito(p, f).integral()) < 1e-10
        assert abs(apply_operator_stratonovich(p, f).integral()) < 1e-10

    def test_constant_b_forms_agree(self):
        dom = DomainSpec.box([(-5, 5)], (128,))
        model = constant_noise_model(1, lambda x, t: np.sin(3 * x), [[1.3]])
        f = random_density(dom, seed=2)
        p = make_problem(dom, model, f)
        a = apply_operator_ito(p, f).values
        b = apply_operator_stratonovich(p, f).values
        assert np.max(np.abs(a - b)) < 1e-12

    def test_cart_forms_agree_nonconstant_b(self):
        dom = DomainSpec.se2_box((-2, 3), (-2, 2), (20, 20, 24))
        f = random_density(dom, seed=1)
        p = make_problem(dom, cart_sde(), f)
        a = apply_operator_ito(p, f).values
        b = apply_operator_stratonovich(p, f).values
        assert np.max(np.abs(a - b)) < 1e-10

    def test_linear_noise_forms_agree_exactly(self):
        # linear-in-x noise: the face difference of B reproduces dB/dx
        # exactly, so the two stencils agree to rounding
        dom = DomainSpec.box([(-3, 3)], (128,))
        p = compressible_problem(1.0, 0.1, 1.0, dom)
        f = gaussian_density(dom, [0.3], [[0.4]])
        a = apply_operator_ito(p, f).values
        b = apply_operator_stratonovich(p, f).values
        assert np.max(np.abs(a - b)) < 1e-12

    def test_converted_model_forms_agree_o_h2(self):
        # genuinely nonlinear noise: agreement is O(h^2), halving h
        # shrinks the gap about fourfold
        def nonlinear_model():
            def noise(x, t):
                return (1.0 + 0.3 * np.sin(x))[..., None]

            def jac(x, t):
                return (0.3 * np.cos(x[..., 0]))[..., None, None, None]

            return SdeModel(1, 1, ITO, lambda x, t: -x, noise,
                            noise_jacobian=jac)

        def gap(n):
            dom = DomainSpec.box([(-3, 3)], (n,))
            f = gaussian_density(dom, [0.3], [[0.4]])
            p = make_problem(dom, nonlinear_model(), f)
            a = apply_operator_ito(p, f).values
            b = apply_operator_stratonovich(p, f).values
            return np.max(np.abs(a - b))

        g1, g2 = gap(128), gap(256)
        assert g1 / g2 == pytest.approx(4.0, rel=0.3)


class TestSolve:
    def test_free_diffusion_variance(self):
        dom = DomainSpec.box([(-4, 4)], (256,))
        model = constant_noise_model(1, lambda x, t: np.zeros_like(x), [[1.0]])
        p = make_problem(dom, model, gaussian_density(dom, [0.0], [[0.05]]))
        sol = solve(p, 0.5, 0.8 * stability_limit(p), n_snapshots=5)
        for t, dens in zip(sol.times, sol.densities):
            var = moments(dens).covariance[0, 0]
            assert var == pytest.approx(0.05 + t, rel=0.005)
            assert dens.integral() == pytest.approx(1.0, abs=1e-6)

    def test_circle_matches_heat_kernel(self):
        dom = DomainSpec.circle(512)
        model = constant_noise_model(1, lambda x, t: np.zeros_like(x), [[1.0]])
        t0, t_run = 0.02, 0.48
        p = make_problem(dom, model, wrapped_gaussian(dom, t0))
        sol = solve(p, t_run, 0.9 * stability_limit(p), n_snapshots=2)
        ref = wrapped_gaussian(dom, t0 + t_run)
        assert np.max(np.abs(sol.densities[-1].values - ref.values)) < 1e-4

    def test_grid_convergence_second_order(self):
        def err(n):
            dom = DomainSpec.circle(n)
            model = constant_noise_model(1, lambda x, t: np.zeros_like(x), [[1.0]])
            p = make_problem(dom, model, wrapped_gaussian(dom, 0.05))
            sol = solve(p, 0.2, 0.5 * stability_limit(p), n_snapshots=2)
            ref = wrapped_gaussian(dom, 0.25)
            return np.max(np.abs(sol.densities[-1].values - ref.values))

        e1, e2 = err(64), err(128)
        assert e1 / e2 == pytest.approx(4.0, rel=0.4)

    def test_stability_violation(self):
        dom = DomainSpec.box([(-4, 4)], (128,))
        model = constant_noise_model(1, lambda x, t: np.zeros_like(x), [[1.0]])
        p = make_problem(dom, model, gaussian_density(dom, [0.0], [[0.3]]))
        with pytest.raises(StabilityViolation):
            solve(p, 0.1, 10 * stability_limit(p))


class TestCompressible:
    def test_kappa_zero_is_advection_diffusion(self):
        dom = DomainSpec.box([(-4, 6)], (256,))
        p = compressible_problem(1.0, 0.0, 1.0, dom)
        x = dom.points
        assert np.allclose(p.model.drift(x, 0.0), 1.0)
        assert np.allclose(p.model.diffusion(x, 0.0)[..., 0, 0], 2.0)

    def test_moment_rhs_mean(self):
        rhs = compressible_moment_rhs(1.0, 0.1, 1.0)
        dmean, _ = rhs(0.0, 0.0, 0.05)
        assert dmean == pytest.approx(1.2)

    def test_moment_rhs_variance_vs_solver(self):
        dom = DomainSpec.box([(-4, 5)], (384,))
        p = compressible_problem(1.0, 0.1, 1.0, dom, init_var=0.05)
        sol = solve(p, 0.1, 0.9 * stability_limit(p), n_snapshots=3)
        m = moments(sol.densities[-1])
        # integrate the closed ODE with small-step RK4
        rhs = compressible_moment_rhs(1.0, 0.1, 1.0)
        mean, var = 0.0, 0.05
        n, dt = 2000, 0.1 / 2000
        for _ in range(n):
            k1 = rhs(0, mean, var)
            k2 = rhs(0, mean + 0.5 * dt * k1[0], var + 0.5 * dt * k1[1])
            k3 = rhs(0, mean + 0.5 * dt * k2[0], var + 0.5 * dt * k2[1])
            k4 = rhs(0, mean + dt * k3[0], var + dt * k3[1])
            mean += (dt / 6) * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
            var += (dt / 6) * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        assert m.mean[0] == pytest.approx(mean, rel=1e-3)
        assert m.covariance[0, 0] == pytest.approx(var, rel=5e-3)


class TestCouette:
    def test_zero_shear_reduces_to_diffusion(self):
        dom = DomainSpec.slab((-3, 3), (0, 1), (64, 32))
        p = couette_problem(0.5, 0.0, 1.0, dom)
        assert np.allclose(p.model.drift(dom.points, 0.0), 0.0)

    def test_mass_conserved_long_run(self):
        dom = DomainSpec.slab((-3, 3), (0, 1), (64, 32))
        p = couette_problem(0.25, 1.0, 1.0, dom, init_var=0.02)
        dt = 0.9 * stability_limit(p)
        sol = solve(p, 10_000 * dt, dt, n_snapshots=3)
        assert sol.densities[-1].integral() == pytest.approx(1.0, abs=1e-6)
        assert sol.clipped_mass < 1e-6

    def test_wrong_domain_rejected(self):
        dom = DomainSpec.box([(-3, 3)], (64,))
        with pytest.raises(UnsupportedDomain):
            couette_problem(1.0, 1.0, 1.0, dom)


class TestStationarityScaling:
    def test_fdt_violation_grows_residual(self):
        # OU with detailed balance vs damping inflated 20%
        dom = DomainSpec.box([(-6, 6)], (512,))
        g = gaussian_density(dom, [0.0], [[1.0]])
        balanced = constant_noise_model(1, lambda x, t: -x, [[math.sqrt(2.0)]])
        inflated = constant_noise_model(1, lambda x, t: -1.2 * x, [[math.sqrt(2.0)]])
        r0 = stationarity_residual(make_problem(dom, balanced, g), g)
        r1 = stationarity_residual(make_problem(dom, inflated, g), g)
        assert r1 > 10 * r0

    def test_uniform_zero_drift_circle(self):
        dom = DomainSpec.circle(64)
        model = constant_noise_model(1, lambda x, t: np.zeros_like(x), [[1.0]])
        u = normalize(GridDensity(dom, np.ones(64)))
        p = make_problem(dom, model, u)
        assert stationarity_residual(p, u) < 1e-12
