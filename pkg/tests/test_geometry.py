import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hulldenoise.errors import NetTooLargeError, NoOracleSamples
from hulldenoise.geometry import (Hyperplane, PointCloud, build_sphere_net,
                                  distance_point_to_hull_halfspace_form, halfspace_tail_count,
                                  read_points_csv, write_points_csv)


def random_unit(count, dim, seed):
    v = np.random.default_rng(seed).standard_normal((count, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def coverage_gap(net, probes):
    # largest distance from a probe to its nearest net direction, via max inner product
    best = np.max(probes @ net.directions.T, axis=1)
    return float(np.sqrt(np.max(2 - 2 * np.clip(best, -1, 1))))


class TestSphereNet:
    def test_zero_sphere(self):
        net = build_sphere_net(1, 0.5)
        assert net.directions.tolist() == [[-1.0], [1.0]]

    def test_circle_coverage(self):
        net = build_sphere_net(2, 0.05)
        assert coverage_gap(net, random_unit(100_000, 2, 0)) <= 0.05

    def test_diameter_mesh_still_covers(self):
        net = build_sphere_net(2, 2.0)
        assert len(net) > 0
        assert coverage_gap(net, random_unit(10_000, 2, 1)) <= 2.0

    @pytest.mark.parametrize("D,mesh", [(3, 0.3), (4, 0.6)])
    def test_higher_dimension_coverage(self, D, mesh):
        net = build_sphere_net(D, mesh)
        assert coverage_gap(net, random_unit(20_000, D, D)) <= mesh
        assert len(net) <= (3 * math.sqrt(D) / mesh) ** D

    def test_unit_norm_and_unique(self):
        net = build_sphere_net(3, 0.2)
        assert np.allclose(np.linalg.norm(net.directions, axis=1), 1.0, atol=1e-12)
        assert np.unique(np.round(net.directions, 12), axis=0).shape[0] == len(net)

    def test_negations_appear_once(self):
        dirs = build_sphere_net(3, 0.25).directions
        keys = {tuple(np.round(d, 12)) for d in dirs}
        for d in dirs:
            neg = tuple(np.round(-d, 12) + 0.0)
            assert sum(1 for k in keys if k == neg) == 1

    def test_deterministic_bytes(self):
        a = build_sphere_net(3, 0.15).directions
        b = build_sphere_net(3, 0.15).directions
        assert a.tobytes() == b.tobytes()

    @pytest.mark.parametrize("mesh", [0.0, -1.0, float("nan"), float("inf"), 2.5])
    def test_bad_mesh(self, mesh):
        with pytest.raises(ValueError):
            build_sphere_net(2, mesh)

    def test_cap(self):
        with pytest.raises(NetTooLargeError, match="net too large"):
            build_sphere_net(6, 0.05, cap=1000)


class TestTailCount:
    def test_direct_count(self):
        assert halfspace_tail_count([[0.1], [0.5], [0.9]], [1.0], 0.4) == pytest.approx(2 / 3)

    def test_strict_inequality(self):
        assert halfspace_tail_count([[0.5], [0.5]], [1.0], 0.5) == 0.0

    def test_beyond_max(self, rng):
        P = rng.standard_normal((50, 3))
        b = random_unit(1, 3, 4)[0]
        assert halfspace_tail_count(P, b, float(np.max(P @ b)) + 1e-9) == 0.0

    def test_gaussian_half(self):
        P = np.random.default_rng(0).standard_normal((10_000, 1))
        assert abs(halfspace_tail_count(P, [1.0], 0.0) - 0.5) <= 0.02

    def test_empty(self):
        with pytest.raises(NoOracleSamples, match="no oracle samples"):
            halfspace_tail_count(np.empty((0, 2)), [1.0, 0.0], 0.0)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-5, 5), min_size=2, max_size=10, unique=True))
    def test_monotone_in_threshold(self, gammas):
        P = np.random.default_rng(1).standard_normal((200, 2))
        b = np.array([0.6, 0.8])
        gammas = sorted(gammas)
        vals = [halfspace_tail_count(P, b, g) for g in gammas]
        assert all(x >= y for x, y in zip(vals, vals[1:]))


class TestHyperplane:
    def test_signed_distance(self):
        H = Hyperplane(np.array([1.0, 0.0]), 1.0)
        assert distance_point_to_hull_halfspace_form([2.0, 0.0], H) == 1.0
        assert distance_point_to_hull_halfspace_form([1.0, 5.0], H) == 0.0

    def test_diagonal(self):
        H = Hyperplane(np.array([math.sqrt(2) / 2, math.sqrt(2) / 2]), 1.0)
        assert distance_point_to_hull_halfspace_form([0.0, 0.0], H) == pytest.approx(-1.0)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            distance_point_to_hull_halfspace_form([1.0, 2.0, 3.0], Hyperplane(np.array([1.0, 0.0]), 0.0))

    def test_normal_must_be_unit(self):
        with pytest.raises(ValueError):
            Hyperplane(np.array([1.0, 1.0]), 0.0)
        H = Hyperplane.from_direction([3.0, 4.0], 2.0)
        assert np.allclose(H.normal, [0.6, 0.8])


class TestPointCloud:
    def test_csv_round_trip(self, tmp_path, rng):
        pts = rng.standard_normal((17, 3))
        path = tmp_path / "pts.csv"
        write_points_csv(str(path), pts)
        assert np.array_equal(read_points_csv(str(path), 3), pts)
        assert path.read_text().splitlines()[0] == "x0,x1,x2"

    def test_manifest_round_trip(self, tmp_path, rng):
        cloud = PointCloud(rng.standard_normal((5, 2)))
        manifest = cloud.save(str(tmp_path / "c.csv"))
        back = PointCloud.load(manifest)
        assert back.ambient_dim == 2
        assert np.array_equal(back.points, cloud.points)
