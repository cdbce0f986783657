import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hulldenoise.datagen import ManifoldSpec, make_dataset
from hulldenoise.errors import OracleSaturated, StageError
from hulldenoise.geometry import build_sphere_net
from hulldenoise.hull import HullOracle
from hulldenoise.oracle import StatisticalSupport, derive_params
from hulldenoise.projection import (DenoiseConfig, ExactSupport, SupportTable, delta_from_eps, denoise,
                                    direction_error_bound, f_omega, proj_K, proj_K_with)

from conftest import unit_circle

DISK = ExactSupport(unit_circle(4096))
ELLIPSE = HullOracle(ManifoldSpec().dense_grid(4096).points)


def random_targets(count, seed, spread=0.5):
    """Ellipse points pushed radially outward by up to `spread`, plus a few inside."""
    r = np.random.default_rng(seed)
    t = r.uniform(0, 2 * np.pi, count)
    base = np.column_stack([np.cos(t), 0.5 * np.sin(t)])
    return base * (1 + r.uniform(-0.1, spread, (count, 1)))


class TestFOmega:
    def test_disk_values(self):
        y = [2.0, 0.0]
        assert f_omega(y, [1.0, 0.0], DISK) == pytest.approx(-3.0, abs=1e-9)
        assert f_omega(y, [-1.0, 0.0], DISK) == pytest.approx(1.0, abs=1e-9)

    def test_inside_nonpositive(self):
        y = np.array([0.3, -0.2])
        for w in unit_circle(360):
            assert f_omega(y, w, DISK) <= 1e-12

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10_000))
    def test_midpoint_concavity(self, seed):
        r = np.random.default_rng(seed)
        y = 3 * r.standard_normal(2)
        w1, w2 = r.standard_normal(2), r.standard_normal(2)
        w1, w2 = w1 / np.linalg.norm(w1), w2 / np.linalg.norm(w2)
        mid = f_omega(y, (w1 + w2) / 2, DISK)
        assert mid >= (f_omega(y, w1, DISK) + f_omega(y, w2, DISK)) / 2 - 1e-12

    def test_failed_direction(self):
        p = derive_params(0.02, 0.1, 1, 0.15)
        P = np.column_stack([np.linspace(-5, 5, 50), np.zeros(50)])
        with pytest.raises(OracleSaturated):
            f_omega([9.0, 0.0], [-1.0, 0.0], StatisticalSupport(P, p))


class TestProjK:
    def test_disk(self):
        res = proj_K_with([2.0, 0.0], DISK, build_sphere_net(2, 0.01))
        assert np.allclose(res.x_hat, [1.0, 0.0], atol=1e-4)
        assert res.lambda0 == pytest.approx(1.0, abs=1e-4)
        assert np.array_equal(res.x_hat, np.array([2.0, 0.0]) + res.lambda0 * res.v0)

    def test_inside_returns_input(self):
        y = np.array([0.2, 0.1])
        res = proj_K_with(y, ExactSupport(ELLIPSE), build_sphere_net(2, 0.05))
        assert res.inside and res.lambda0 == 0.0
        assert np.array_equal(res.x_hat, y)

    def test_statistical_close_to_exact(self):
        sigma, eps = 0.02, 0.1
        ds = make_dataset(ManifoldSpec(), 10, 20_010, 20_110, sigma, 5)
        delta = delta_from_eps(eps, sigma, 2)
        p = derive_params(sigma, delta, 1, 0.15)
        table = SupportTable(build_sphere_net(2, delta), StatisticalSupport(ds.block("oracle")[1], p))
        Y = random_targets(100, 1)
        exact, _ = ELLIPSE.project_many(Y)
        err = np.linalg.norm(np.array([r.x_hat for r in table.project(Y)]) - exact, axis=1)
        assert np.mean(err <= eps) >= 0.9

    def test_single_target_entry_point(self):
        ds = make_dataset(ManifoldSpec(), 10, 20_010, 20_020, 0.02, 5)
        p = derive_params(0.02, 0.05, 1, 0.15)
        res = proj_K([0.0, 1.0], ds.block("oracle")[1], p, build_sphere_net(2, 0.05))
        assert np.linalg.norm(res.x_hat - [0.0, 0.5]) <= 0.1

    @pytest.mark.parametrize("mesh", [0.1, 0.05, 0.02])
    def test_exact_equivalence(self, mesh):
        Y = random_targets(200, 2)
        exact, _ = ELLIPSE.project_many(Y)
        res = SupportTable(build_sphere_net(2, mesh), ExactSupport(ELLIPSE)).project(Y)
        assert np.max(np.linalg.norm(np.array([r.x_hat for r in res]) - exact, axis=1)) <= 2 * mesh

    def test_normalization_never_hurts(self, rng):
        net = build_sphere_net(2, 0.05)
        sup = ExactSupport(ELLIPSE)
        for y in random_targets(20, 3, spread=1.0):
            if ELLIPSE.project(y)[1] == 0:
                continue
            res = proj_K_with(y, sup, net, keep_f=True)
            top = np.argsort(res.f_values)[-5:]
            w = rng.dirichlet(np.ones(5)) @ net.directions[top]
            assert f_omega(y, w / np.linalg.norm(w), sup) >= f_omega(y, w, sup) - 1e-12

    def test_obtuse_angle(self):
        Y = random_targets(100, 4, spread=1.0)
        res = SupportTable(build_sphere_net(2, 0.05), ExactSupport(ELLIPSE)).project(Y)
        X = ELLIPSE.vertices[::7]
        for y, r in zip(Y, res):
            assert np.max((X - r.x_hat) @ (y - r.x_hat)) <= 1e-8

    def test_ties_take_lowest_index(self):
        net = build_sphere_net(2, 0.5)
        table = SupportTable(net, ExactSupport(unit_circle(4)))
        F = table.f_values(np.zeros(2))[0]
        res = table.project(np.zeros((1, 2)), keep_f=True)[0]
        assert res.index == int(np.flatnonzero(F == F.max())[0])

    def test_failure_tolerance(self):
        p = derive_params(0.02, 0.1, 1, 0.15)
        P = np.column_stack([np.linspace(-5, 5, 50), np.zeros(50)])
        with pytest.raises(OracleSaturated, match="net directions failed"):
            proj_K([6.0, 0.0], P, p, build_sphere_net(2, 0.1))

    def test_chunking_and_threads_agree(self):
        Y = random_targets(300, 6)
        table = SupportTable(build_sphere_net(2, 0.05), ExactSupport(ELLIPSE))
        a = np.array([r.x_hat for r in table.project(Y)])
        b = np.array([r.x_hat for r in table.project(Y, chunk=7, threads=3)])
        assert a.tobytes() == b.tobytes()


class TestBounds:
    def test_direction_error(self):
        assert direction_error_bound(0.0, 1.0) == 0.0
        assert direction_error_bound(0.02, 1.0) == pytest.approx(0.2)
        assert direction_error_bound(0.02, 4.0) == pytest.approx(0.1)
        with pytest.raises(ValueError):
            direction_error_bound(0.1, 0.0)

    def test_delta_from_eps(self):
        assert delta_from_eps(0.1, 0.2, 4) == pytest.approx(0.01 / (16 * 0.4))
        assert delta_from_eps(0.1, 0.0, 4, d_star=2.0) == pytest.approx(0.01 / 32)
        with pytest.raises(ValueError):
            delta_from_eps(0.1, 0.0, 2)


class TestDenoise:
    def test_noiseless_exact(self):
        ds = make_dataset(ManifoldSpec(), 500, 1000, 1500, 0.0, 0)
        rep = denoise(ds, DenoiseConfig(provider="exact", D=2, mesh=0.05, delta=0.05))
        assert rep.err_vs_clean.mean() <= rep.measured["pca_bias"] + 1e-6

    def test_exact_reduces_noise(self):
        ds = make_dataset(ManifoldSpec(), 1000, 2000, 4000, 0.2, 1)
        rep = denoise(ds, DenoiseConfig(provider="exact", D=2, mesh=0.02))
        assert rep.reduction_ratio < 1
        # exact projection never moves a point farther from a hull point
        assert np.all(rep.err_vs_clean <= rep.err_noisy + 2 * 0.02)

    def test_statistical_pipeline(self):
        ds = make_dataset(ManifoldSpec(), 1000, 21_000, 21_500, 0.02, 2)
        rep = denoise(ds, DenoiseConfig(D=2, delta=0.05, mesh=0.05))
        assert rep.failed_directions == 0
        assert rep.measured["algorithmic"] <= 0.1

    def test_deterministic(self):
        ds = make_dataset(ManifoldSpec(), 300, 600, 900, 0.2, 3)
        cfg = DenoiseConfig(provider="exact", D=2, mesh=0.05)
        a, b = denoise(ds, cfg), denoise(ds, cfg)
        assert a.x_hat.tobytes() == b.x_hat.tobytes()

    def test_high_dimension_lifts_back(self):
        ds = make_dataset(ManifoldSpec(ambient_dim=6), 500, 1000, 1200, 0.05, 4)
        rep = denoise(ds, DenoiseConfig(provider="exact", D=2, mesh=0.05))
        assert rep.x_hat.shape == (200, 6)
        assert rep.reduction_ratio < 1

    def test_stage_tagged_failure(self):
        ds = make_dataset(ManifoldSpec(), 2, 600, 900, 0.2, 3)
        with pytest.raises(StageError) as info:
            denoise(ds, DenoiseConfig(D=2, delta=0.05, mesh=0.05))
        assert info.value.stage == "pca"
        # tiny noise with a coarse delta: no cell reaches the density threshold
        ds = make_dataset(ManifoldSpec(), 300, 2300, 2400, 0.01, 3)
        with pytest.raises(StageError, match="net directions failed") as info:
            denoise(ds, DenoiseConfig(D=2, delta=0.2, mesh=0.1))
        assert info.value.stage == "oracle"

    def test_report_files(self, tmp_path):
        ds = make_dataset(ManifoldSpec(), 300, 600, 900, 0.2, 3)
        rep = denoise(ds, DenoiseConfig(provider="exact", D=2, mesh=0.1))
        rep.write(str(tmp_path))
        lines = (tmp_path / "points.csv").read_text().splitlines()
        assert lines[0] == "index,x_hat0,x_hat1,lambda0,v0_0,v0_1,err_vs_clean"
        assert len(lines) == 301
        assert (tmp_path / "budget.csv").read_text().splitlines()[0] == "term,bound,measured"
        assert math.isfinite(rep.budget["total"])
