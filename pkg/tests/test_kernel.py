"""Convex kernel: closed forms against brute-force oracles and identities."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from torusmfg import kernel, models, oracles
from torusmfg.grid import GridSpec
from torusmfg.kernel import (
    CoercivityMaps,
    antiderivative_F,
    conjugate_Fstar,
    coupling,
    d_xi_hamiltonian,
    hamiltonian,
    hamiltonian_conjugate,
    perspective,
    prox_Fstar,
    prox_perspective,
    verify_coercivity,
    young_gap_H,
    coercivity_remainder_H,
)


def bump_model(dim=1, r=2.0, q=2.0):
    spec = models.SHIPPED["td-bump-1d"] if dim == 1 else models.SHIPPED["td-bump-2d"]
    spec = type(spec)(r=r, q=q, dim=dim, T=spec.T, c1=spec.c1, c2=spec.c2,
                      m0=spec.m0, phi_T=spec.phi_T)
    grid = GridSpec(dim=dim, n_space=16, n_time=1, T=1.0)
    return spec.on_grid(grid)


class TestHamiltonian:
    def test_quadratic_value(self):
        assert hamiltonian(2.0, 1.0, np.array([3.0, 4.0])) == pytest.approx(12.5, abs=1e-14)

    def test_zero_point(self):
        for r in (1.5, 2.0, 3.0):
            assert hamiltonian(r, 1.0, np.zeros(2)) == 0.0
            assert np.all(d_xi_hamiltonian(r, 1.0, np.zeros(2)) == 0.0)

    def test_cubic_value_and_gradient(self):
        xi = np.array([1.0, 0.0])
        assert hamiltonian(3.0, 1.0, xi) == pytest.approx(1.0 / 3.0, abs=1e-14)
        np.testing.assert_allclose(d_xi_hamiltonian(3.0, 1.0, xi), [1.0, 0.0], atol=1e-14)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        for r in (1.7, 2.0, 2.5):
            for _ in range(20):
                xi = rng.uniform(-2, 2, size=2)
                if np.linalg.norm(xi) < 0.2:
                    continue
                c2 = rng.uniform(0.5, 2.0)
                g = d_xi_hamiltonian(r, c2, xi)
                eps = 1e-6
                for a in range(2):
                    e = np.zeros(2)
                    e[a] = eps
                    fd = (hamiltonian(r, c2, xi + e) - hamiltonian(r, c2, xi - e)) / (2 * eps)
                    assert g[a] == pytest.approx(fd, rel=1e-5, abs=1e-7)


class TestHamiltonianConjugate:
    def test_self_conjugate_quadratic(self):
        assert hamiltonian_conjugate(2.0, 1.0, np.array([1.0, 0.0])) == pytest.approx(0.5)

    def test_cubic_against_brute_force(self):
        # sup of t - t^3/3 is at t = 1, value 2/3
        zeta = np.array([1.0, 0.0])
        val = hamiltonian_conjugate(3.0, 1.0, zeta)
        ref = oracles.hamiltonian_conjugate_oracle(3.0, 1.0, zeta)
        assert val == pytest.approx(2.0 / 3.0, abs=1e-9)
        assert val == pytest.approx(ref, abs=1e-8)

    def test_zero(self):
        for r in (1.5, 2.0, 4.0):
            assert hamiltonian_conjugate(r, 0.7, np.zeros(2)) == 0.0

    def test_randomized_against_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            r = rng.uniform(1.3, 3.5)
            c2 = rng.uniform(0.5, 2.0)
            zeta = rng.uniform(-2, 2, size=2)
            val = hamiltonian_conjugate(r, c2, zeta)
            ref = oracles.hamiltonian_conjugate_oracle(r, c2, zeta)
            assert val == pytest.approx(ref, abs=1e-4)

    def test_round_trip_conjugate_of_conjugate(self):
        rng = np.random.default_rng(8)
        for _ in range(40):
            r = rng.uniform(1.5, 3.0)
            c2 = rng.uniform(0.5, 2.0)
            xi = rng.uniform(-1.5, 1.5, size=1)
            zmax = 4.0 * c2 * max(1.0, abs(xi[0])) ** (r - 1) + 4.0
            z = np.linspace(-zmax, zmax, 80001)[:, None]
            sup = (z[:, 0] * xi[0] - hamiltonian_conjugate(r, c2, z)).max()
            assert sup == pytest.approx(hamiltonian(r, c2, xi), abs=1e-4)


class TestCoupling:
    def test_F_values(self):
        assert antiderivative_F(2.0, 1.0, 1.0) == 0.0
        assert antiderivative_F(2.0, 1.0, 2.0) == pytest.approx(1.5)

    def test_Fstar_values(self):
        assert conjugate_Fstar(2.0, 1.0, 1.0) == pytest.approx(1.0)
        assert conjugate_Fstar(2.0, 1.0, 0.0) == pytest.approx(0.5)
        assert conjugate_Fstar(2.0, 1.0, -1.0) == pytest.approx(0.5)

    def test_Fstar_against_brute_force(self):
        rng = np.random.default_rng(9)
        for _ in range(200):
            q = rng.uniform(1.3, 3.5)
            c1 = rng.uniform(0.5, 2.0)
            a = rng.uniform(-3.0, 4.0)
            assert conjugate_Fstar(q, c1, a) == pytest.approx(
                oracles.Fstar_oracle(q, c1, a), abs=1e-4
            )

    def test_fenchel_young_at_unit_density(self):
        rng = np.random.default_rng(10)
        for _ in range(50):
            q = rng.uniform(1.2, 4.0)
            c1 = rng.uniform(0.5, 2.0)
            a = rng.uniform(-5.0, 5.0)
            assert conjugate_Fstar(q, c1, a) >= a - 1e-12

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            coupling(2.0, 1.0, -0.5)
        with pytest.raises(ValueError):
            antiderivative_F(2.0, 1.0, np.array([0.5, -0.1]))


class TestPerspective:
    def test_quadratic_value(self):
        assert perspective(2.0, 1.0, 1.0, np.array([1.0, 0.0])) == pytest.approx(0.5)

    def test_vacuum_conventions(self):
        assert perspective(2.0, 1.0, 0.0, np.zeros(2)) == 0.0
        assert np.isinf(perspective(2.0, 1.0, 0.0, np.array([1.0, 0.0])))

    def test_domain_error(self):
        with pytest.raises(ValueError):
            perspective(2.0, 1.0, -1e-9, np.zeros(2))

    @settings(max_examples=60, deadline=None)
    @given(
        m=st.floats(1e-3, 50.0),
        wx=st.floats(-20.0, 20.0),
        lam=st.floats(1e-2, 1e2),
        r=st.floats(1.3, 3.5),
    )
    def test_positive_homogeneity(self, m, wx, lam, r):
        w = np.array([wx, 0.5 * wx])
        v1 = lam * perspective(r, 1.3, m, w)
        v2 = perspective(r, 1.3, lam * m, lam * w)
        assert abs(v1 - v2) <= 1e-10 * (1.0 + abs(v1))

    def test_joint_convexity_sampled(self):
        rng = np.random.default_rng(21)
        for _ in range(200):
            r = rng.uniform(1.3, 3.0)
            m1, m2 = rng.uniform(0.01, 5.0, size=2)
            w1, w2 = rng.uniform(-3, 3, size=(2, 2))
            th = rng.uniform(0, 1)
            left = perspective(r, 1.0, th * m1 + (1 - th) * m2, th * w1 + (1 - th) * w2)
            right = th * perspective(r, 1.0, m1, w1) + (1 - th) * perspective(r, 1.0, m2, w2)
            assert left <= right + 1e-10


class TestProxPerspective:
    def test_zero_flux_reduces_to_density_prox(self):
        # w_hat = 0 forces w = 0 and a one-dimensional optimality condition
        m, w = prox_perspective(2.0, 2.0, 1.0, 1.0, np.array(5.0), np.zeros(1), 0.7)
        assert np.all(w == 0.0)
        ref_m, ref_s = oracles.prox_oracle_2d(2.0, 2.0, 1.0, 1.0, 5.0, 0.0, 0.7)
        assert float(m) == pytest.approx(ref_m, abs=1e-5)
        assert ref_s == pytest.approx(0.0, abs=1e-5)

    def test_nonpositive_anchor_gives_vacuum(self):
        m, w = prox_perspective(2.0, 2.0, 1.0, 1.0, np.array(-2.0), np.zeros(1), 1.0)
        assert float(m) >= 0.0
        assert float(m) == 0.0
        assert np.all(w == 0.0)

    def test_fixed_point_at_large_tau(self):
        # global minimizer of the integrand sum is the vacuum point (0, 0)
        m, w = prox_perspective(2.0, 2.0, 1.0, 1.0, np.array(0.0), np.zeros(1), 1e8)
        assert abs(float(m)) <= 1e-8
        assert np.all(np.abs(w) <= 1e-8)

    def test_against_grid_oracle(self):
        rng = np.random.default_rng(22)
        for _ in range(100):
            r = rng.choice([1.5, 2.0, 2.5, 3.0])
            q = rng.uniform(1.3, 3.0)
            c1 = rng.uniform(0.6, 1.6)
            c2 = rng.uniform(0.6, 1.6)
            tau = rng.uniform(0.1, 3.0)
            m_hat = rng.uniform(-1.0, 3.0)
            s_hat = rng.uniform(-2.0, 2.0)
            m, w = prox_perspective(r, q, c1, c2, np.array(m_hat), np.array([s_hat]), tau)
            mo, so = oracles.prox_oracle_2d(r, q, c1, c2, m_hat, s_hat, tau)
            assert float(m) == pytest.approx(mo, abs=1e-5)
            assert float(w[0]) == pytest.approx(so, abs=1e-5)
            # value agreement at the spec pitch
            val = oracles.prox_objective(r, q, c1, c2, m_hat, s_hat, tau, float(m), float(w[0]))
            ref = oracles.prox_objective(r, q, c1, c2, m_hat, s_hat, tau, mo, so)
            assert val <= ref + 1e-9

    def test_vector_flux_collinearity(self):
        rng = np.random.default_rng(23)
        for _ in range(5):
            w_hat = rng.uniform(-2, 2, size=2)
            m_hat = rng.uniform(0.2, 2.0)
            m, w = prox_perspective(2.0, 2.0, 1.0, 1.0, np.array(m_hat), w_hat, 0.8)
            mo, u, v = oracles.prox_oracle_3d(2.0, 2.0, 1.0, 1.0, m_hat, w_hat, 0.8)
            assert float(m) == pytest.approx(mo, abs=5e-3)
            np.testing.assert_allclose(w, [u, v], atol=5e-3)
            cross = w[0] * w_hat[1] - w[1] * w_hat[0]
            assert abs(cross) <= 1e-12 * (1 + np.abs(w_hat).max())

    def test_vectorized_matches_scalar(self):
        rng = np.random.default_rng(24)
        m_hat = rng.uniform(-1, 3, size=(4, 8))
        w_hat = rng.uniform(-2, 2, size=(4, 1, 8))
        m, w = prox_perspective(2.5, 1.8, 1.1, 0.9, m_hat, w_hat, 0.5, axis=1)
        for i in (0, 3):
            for j in (1, 5):
                ms, ws = prox_perspective(
                    2.5, 1.8, 1.1, 0.9, np.array(m_hat[i, j]),
                    np.array([w_hat[i, 0, j]]), 0.5,
                )
                assert m[i, j] == pytest.approx(float(ms), rel=1e-10, abs=1e-12)
                assert w[i, 0, j] == pytest.approx(float(ws[0]), rel=1e-10, abs=1e-12)


class TestProxFstar:
    def test_nonpositive_anchor_untouched(self):
        a = prox_Fstar(2.0, 1.0, np.array([-1.5, 0.0]), 2.0)
        np.testing.assert_allclose(a, [-1.5, 0.0])

    def test_optimality_condition(self):
        rng = np.random.default_rng(25)
        for q in (1.5, 2.0, 3.0):
            a_hat = rng.uniform(-2, 4, size=50)
            c1 = rng.uniform(0.6, 1.4, size=50)
            rho = 1.7
            a = prox_Fstar(q, c1, a_hat, rho)
            resid = kernel.d_Fstar(q, c1, a) + rho * (a - a_hat)
            pos = a_hat > 0
            assert np.max(np.abs(resid[pos])) < 1e-9

    def test_against_grid_minimizer(self):
        rng = np.random.default_rng(26)
        for _ in range(200):
            q = rng.uniform(1.3, 3.5)
            c1 = rng.uniform(0.5, 2.0)
            rho = rng.uniform(0.2, 5.0)
            a_hat = rng.uniform(-2.0, 4.0)
            a = float(prox_Fstar(q, c1, np.array(a_hat), rho))
            grid_a = np.linspace(a_hat - 3.0, a_hat + 1.0, 400001)
            vals = conjugate_Fstar(q, c1, grid_a) + 0.5 * rho * (grid_a - a_hat) ** 2
            ref = grid_a[np.argmin(vals)]
            assert a == pytest.approx(ref, abs=1e-4)


class TestCoercivity:
    def test_quadratic_ratio_is_exactly_half(self):
        rng = np.random.default_rng(27)
        xi = rng.uniform(-3, 3, size=(500, 2))
        zeta = rng.uniform(-3, 3, size=(500, 2))
        sep = np.linalg.norm(xi - zeta, axis=1) >= 0.1
        gap = young_gap_H(2.0, 1.0, xi[sep], zeta[sep])
        rem = coercivity_remainder_H(2.0, 1.0, xi[sep], zeta[sep])
        np.testing.assert_allclose(gap / rem, 0.5, atol=1e-12)

    def test_conjugate_pairs_have_matching_maps(self):
        # equality case: zeta = D_xi H(x, xi) makes both sides vanish
        rng = np.random.default_rng(28)
        for r in (1.5, 2.0, 3.0):
            c2 = rng.uniform(0.5, 2.0, size=40)
            xi = rng.uniform(-2, 2, size=(40, 2))
            zeta = d_xi_hamiltonian(r, c2, xi)
            gap = young_gap_H(r, c2, xi, zeta)
            rem = coercivity_remainder_H(r, c2, xi, zeta)
            assert np.max(np.abs(gap)) < 1e-10 * (1 + np.abs(gap).max())
            assert np.max(rem) < 1e-18

    @pytest.mark.parametrize("r,q", [(2.0, 2.0), (3.0, 2.0), (2.0, 3.0), (1.5, 1.5)])
    def test_sampling_stays_above_certified_constants(self, r, q):
        model = bump_model(dim=1, r=r, q=q)
        maps = CoercivityMaps.certify(r, q, dim=1)
        report = verify_coercivity(model, maps, samples=100000)
        assert report.passed_H, report
        assert report.passed_F, report

    def test_certified_constants_quadratic(self):
        maps = CoercivityMaps.certify(2.0, 2.0, dim=2)
        assert maps.c0_H == pytest.approx(0.475, abs=1e-6)
        assert maps.c0_F == pytest.approx(0.475, abs=1e-6)

    def test_samples_validation(self):
        model = bump_model()
        maps = CoercivityMaps.certify(2.0, 2.0, dim=1)
        with pytest.raises(ValueError):
            verify_coercivity(model, maps, samples=0)


class TestFenchelYoung:
    def test_gap_nonnegative_sampled(self):
        rng = np.random.default_rng(29)
        for r in (1.4, 2.0, 2.7):
            c2 = rng.uniform(0.5, 2.0, size=2000)
            xi = rng.uniform(-4, 4, size=(2000, 2))
            zeta = rng.uniform(-4, 4, size=(2000, 2))
            gap = young_gap_H(r, c2, xi, zeta)
            assert gap.min() >= -1e-10

    def test_equality_at_conjugate_pairs(self):
        rng = np.random.default_rng(30)
        for r in (1.5, 2.0, 3.0):
            c2 = rng.uniform(0.5, 2.0, size=200)
            xi = rng.uniform(-2, 2, size=(200, 2))
            zeta = d_xi_hamiltonian(r, c2, xi)
            gap = young_gap_H(r, c2, xi, zeta)
            assert np.max(np.abs(gap)) <= 1e-8


class TestMonotonicity:
    def test_strong_monotonicity_with_certified_constant(self):
        from torusmfg.checks import strong_monotonicity

        for q in (1.5, 2.0, 3.0):
            model = bump_model(dim=1, q=q)
            maps = CoercivityMaps.certify(2.0, q, dim=1)
            res = strong_monotonicity(model, maps)
            assert res.passed, res.detail

    def test_subquadratic_fallback_inequality(self):
        # q < 2 at vanishing density: f(x,m) m >= c0 m^q
        q = 1.5
        maps = CoercivityMaps.certify(2.0, q, dim=1)
        m = np.linspace(0.0, 5.0, 1000)
        lhs = coupling(q, 0.9, m) * m
        assert np.all(lhs >= maps.c0_F * m**q - 1e-12)
