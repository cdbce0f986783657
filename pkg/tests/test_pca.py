import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.stats import norm

from hulldenoise.datagen import ManifoldSpec, make_dataset
from hulldenoise.pca import (PcaBoundInputs, SubspaceFit, choose_reduced_dim, distance_to_subspace, eps_emp,
                             fit_subspace, gaussian_tail_mass, lift, pca_bias_bound, project, tail_budget,
                             truncation_radius)


def random_orthonormal(n, D, seed):
    q, _ = np.linalg.qr(np.random.default_rng(seed).standard_normal((n, D)))
    return q.T


class TestReducedDim:
    def test_hand_value(self):
        assert choose_reduced_dim(1000, 1, 0.1, 0.1) == 50

    @pytest.mark.parametrize("eps0", [0.05, 0.5, 2.0])
    def test_capped_by_n(self, eps0):
        assert choose_reduced_dim(2, 1, 0.2, eps0) <= 2

    def test_large_eps_floor(self):
        D = choose_reduced_dim(100, 1, 0.367, 2.0)
        assert D == math.ceil(1 / (0.367 * 2 * 2)) == 1

    def test_two_dim_ball_volume(self):
        assert choose_reduced_dim(10 ** 6, 2, 0.1, 0.1) == math.ceil(1 / (0.1 * math.pi * 0.01))

    @pytest.mark.parametrize("args", [(10, 1, 0.1, 0.0), (10, 1, 0.1, 2.5), (10, 1, 0.5, 0.1), (10, 1, 0.0, 0.1)])
    def test_domain(self, args):
        with pytest.raises(ValueError):
            choose_reduced_dim(*args)


class TestFit:
    def test_plane_in_r5(self, rng):
        B = random_orthonormal(5, 2, 1)
        Y = rng.standard_normal((200, 2)) @ B + np.arange(5.0)
        fit = fit_subspace(Y, 2)
        assert fit.residual == pytest.approx(0.0, abs=1e-10)
        assert np.allclose(fit.basis @ fit.basis.T, np.eye(2), atol=1e-10)
        assert np.max(distance_to_subspace(fit, Y)) <= 1e-9

    def test_full_dimension(self, rng):
        fit = fit_subspace(rng.standard_normal((500, 4)), 4)
        assert fit.residual == pytest.approx(0.0, abs=1e-12)

    def test_ellipse_full_dimension_is_identity(self):
        ds = make_dataset(ManifoldSpec(), 5000, 10000, 20000, 0.2, 0)
        Y = ds.block("pca")[1]
        fit = fit_subspace(Y, 2)
        assert np.allclose(lift(fit, project(fit, Y)), Y, atol=1e-12)

    def test_residual_is_trailing_eigen_mass(self, rng):
        Y = rng.standard_normal((300, 6)) * np.array([5, 4, 3, 1, 0.5, 0.1])
        fit = fit_subspace(Y, 3)
        ev = np.sort(np.linalg.eigvalsh(np.cov(Y.T, bias=True)))[::-1]
        assert fit.residual == pytest.approx(ev[3:].sum(), rel=1e-10)
        assert fit.residual == pytest.approx(np.mean(distance_to_subspace(fit, Y) ** 2), rel=1e-10)

    def test_sign_convention_and_determinism(self, rng):
        Y = rng.standard_normal((100, 4))
        a, b = fit_subspace(Y, 2), fit_subspace(Y.copy(), 2)
        assert a.basis.tobytes() == b.basis.tobytes()
        for row in a.basis:
            assert row[np.flatnonzero(np.abs(row) > 1e-12)[0]] > 0

    def test_degenerate_flag(self, rng):
        Y = np.zeros((10, 3))
        Y[:, 0] = rng.standard_normal(10)
        fit = fit_subspace(Y, 2)
        assert fit.degenerate
        assert np.allclose(fit.basis @ fit.basis.T, np.eye(2), atol=1e-10)

    def test_too_few_points(self):
        with pytest.raises(ValueError):
            fit_subspace(np.zeros((2, 3)), 2)

    def test_json_round_trip(self, rng):
        fit = fit_subspace(rng.standard_normal((50, 3)), 2)
        back = SubspaceFit.from_json(fit.to_json())
        assert np.array_equal(back.basis, fit.basis) and back.residual == fit.residual

    def test_optimal_against_random_subspaces(self, rng):
        Y = rng.standard_normal((400, 5)) * np.array([3, 2, 1, 0.5, 0.2])
        fit = fit_subspace(Y, 2)
        Yc = Y - Y.mean(axis=0)
        for seed in range(20):
            Q = random_orthonormal(5, 2, seed)
            resid = np.mean(np.sum((Yc - Yc @ Q.T @ Q) ** 2, axis=1))
            assert fit.residual <= resid + 1e-12


class TestProject:
    def test_in_subspace_fixed(self, rng):
        fit = fit_subspace(rng.standard_normal((50, 3)), 2)
        x = lift(fit, [0.3, -0.7])
        assert np.allclose(lift(fit, project(fit, x)), x, atol=1e-12)

    def test_perpendicular_offset_removed(self, rng):
        fit = fit_subspace(rng.standard_normal((50, 3)), 2)
        normal = np.cross(fit.basis[0], fit.basis[1])
        x = lift(fit, [1.0, 2.0])[0]
        assert np.allclose(lift(fit, project(fit, x + 0.8 * normal)), x, atol=1e-12)

    def test_dimension_mismatch(self, rng):
        fit = fit_subspace(rng.standard_normal((50, 3)), 2)
        with pytest.raises(ValueError):
            project(fit, np.zeros((1, 4)))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000))
    def test_pythagoras_and_contraction(self, seed):
        r = np.random.default_rng(seed)
        fit = fit_subspace(r.standard_normal((30, 5)), 3)
        y, y2 = 3 * r.standard_normal(5), 3 * r.standard_normal(5)
        py = lift(fit, project(fit, y))[0]
        lhs = np.sum((y - fit.center) ** 2)
        rhs = np.sum((py - fit.center) ** 2) + distance_to_subspace(fit, y)[0] ** 2
        assert lhs == pytest.approx(rhs, abs=1e-8)
        py2 = lift(fit, project(fit, y2))[0]
        assert np.linalg.norm(py - py2) <= np.linalg.norm(y - y2) + 1e-12


class TestRadiusAndTails:
    def test_zero_sigma(self):
        assert truncation_radius(0.0, 3, 100, 0.1) == 0.0

    def test_hand_value(self):
        assert truncation_radius(1.0, 1, 100, 0.1) == pytest.approx(2 + 2 * math.sqrt(math.log(2000)), rel=1e-14)

    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_tail_below_budget_by_quadrature(self, n):
        sigma, N0, alpha = 0.7, 100, 0.1
        R = truncation_radius(sigma, n, N0, alpha)
        # density of |Z| for Z ~ N(0, sigma^2 I_n), integrated directly
        surface = 2 * math.pi ** (n / 2) / math.gamma(n / 2)
        dens = lambda r: surface * r ** (n - 1) * math.exp(-r * r / (2 * sigma ** 2)) / (2 * math.pi * sigma ** 2) ** (n / 2)
        mass = quad(dens, R, np.inf)[0]
        assert mass < tail_budget(alpha, N0)
        assert gaussian_tail_mass(R, sigma, n) == pytest.approx(mass, rel=1e-6, abs=1e-300)

    def test_one_dim_tail_matches_normal(self):
        assert gaussian_tail_mass(1.5, 1.0, 1) == pytest.approx(2 * norm.sf(1.5), rel=1e-12)

    def test_budget_small_alpha(self):
        assert tail_budget(1e-12, 10 ** 6) == pytest.approx(5e-19, rel=1e-6)


class TestEmpiricalEps:
    def test_hand_value(self):
        expected = 2 * (4 / 100) * (1 + math.sqrt(2 * math.log(80)))
        assert eps_emp(0.0, 4, 10 ** 4, 0.05) == pytest.approx(expected, rel=1e-14)
        assert expected == pytest.approx(0.3168, abs=5e-5)

    def test_quadrupling_halves(self):
        assert eps_emp(1.3, 3, 4000, 0.1) == pytest.approx(2 * eps_emp(1.3, 3, 16000, 0.1), rel=1e-14)

    def test_alpha_guard(self):
        with pytest.raises(ValueError):
            eps_emp(0.0, 2, 100, 4.0)


class TestBiasBound:
    def test_zero(self):
        assert pca_bias_bound(eps0=0.0, eps_empirical=0.0, d=1) == 0.0

    def test_hand_value(self):
        assert pca_bias_bound(eps0=0.1, eps_empirical=0.1, d=1, C=2.5) == pytest.approx(2.5 * 0.24 ** (1 / 3))

    @settings(max_examples=50, deadline=None)
    @given(st.floats(0, 2), st.floats(0, 2), st.floats(0, 1), st.integers(1, 4))
    def test_monotone(self, e0, e1, bump, d):
        base = pca_bias_bound(eps0=e0, eps_empirical=e1, d=d)
        assert pca_bias_bound(eps0=e0 + bump, eps_empirical=e1, d=d) >= base
        assert pca_bias_bound(eps0=e0, eps_empirical=e1 + bump, d=d) >= base

    def test_inputs_object(self):
        inp = PcaBoundInputs(eps0=0.5, alpha=0.05, sigma=0.2, n=10, N0=10 ** 4, d=1, c_M=0.15, D=2)
        expected = (4 * 0.25 + 2 * inp.empirical_eps()) ** (1 / 3)
        assert pca_bias_bound(inp) == pytest.approx(expected)

    def test_bad_alpha(self):
        with pytest.raises(ValueError):
            PcaBoundInputs(eps0=0.5, alpha=1.0, sigma=0.2, n=2, N0=10, d=1, c_M=0.1)


def test_hausdorff_in_r10():
    ds = make_dataset(ManifoldSpec(ambient_dim=10), 10 ** 4, 10 ** 4 + 10, 10 ** 4 + 20, 0.2, 0)
    clean, noisy = ds.block("pca")
    fit = fit_subspace(noisy, 2)
    inp = PcaBoundInputs(eps0=0.1, alpha=0.05, sigma=0.2, n=10, N0=10 ** 4, d=1, c_M=0.15, D=2, C_bias=3.0)
    assert np.max(distance_to_subspace(fit, clean)) <= pca_bias_bound(inp)
