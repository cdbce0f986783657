import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from hulldenoise.datagen import hypocycloid_points
from hulldenoise.errors import OracleFailure
from hulldenoise.hull import (HullOracle, hull_membership, hull_vertices, min_norm_point, project_onto_hull,
                              support_function)

from conftest import unit_circle

TRIANGLE = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def slsqp_projection(y, V):
    """Independent reference: minimize |V^T w - y|^2 over the simplex with SLSQP."""
    m = V.shape[0]
    res = minimize(lambda w: np.sum((w @ V - y) ** 2), np.full(m, 1.0 / m),
                   jac=lambda w: 2 * V @ (w @ V - y), bounds=[(0, 1)] * m,
                   constraints=[{"type": "eq", "fun": lambda w: w.sum() - 1}],
                   method="SLSQP", options={"ftol": 1e-15, "maxiter": 500})
    return res.x @ V


class TestProjection:
    def test_triangle_far_edge(self):
        x, dist = project_onto_hull([2.0, 2.0], TRIANGLE)
        assert np.allclose(x, [0.5, 0.5], atol=1e-10)
        assert dist == pytest.approx(1.5 * math.sqrt(2), abs=1e-10)

    def test_inside_returns_self(self):
        y = np.array([0.2, 0.3])
        x, dist = project_onto_hull(y, TRIANGLE)
        assert np.array_equal(x, y)
        assert dist == 0.0

    def test_circle_polygon(self):
        x, dist = project_onto_hull([2.0, 0.0], unit_circle(360))
        assert np.allclose(x, [1.0, 0.0], atol=1e-3)
        assert dist == pytest.approx(1.0, abs=1e-3)

    def test_matches_independent_solver(self, rng):
        V = rng.standard_normal((12, 3))
        for _ in range(10):
            y = 3 * rng.standard_normal(3)
            x, _ = project_onto_hull(y, V)
            assert np.allclose(x, slsqp_projection(y, V), atol=1e-5)

    def test_iteration_cap(self):
        with pytest.raises(OracleFailure, match="cap"):
            project_onto_hull([2.0, 2.0], TRIANGLE, max_iter=1)

    def test_min_norm_point_weights(self, rng):
        Q = rng.standard_normal((8, 4)) + 3.0
        x, S, w, gap = min_norm_point(Q)
        assert np.all(w >= 0) and w.sum() == pytest.approx(1.0)
        assert np.allclose(w @ Q[S], x, atol=1e-12)
        # optimality: no vertex improves the Wolfe criterion
        assert np.min(Q @ x) >= x @ x - 1e-9

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 10_000))
    def test_obtuse_angle_and_idempotence(self, seed):
        r = np.random.default_rng(seed)
        V = r.standard_normal((r.integers(3, 15), 2))
        y = 3 * r.standard_normal(2)
        xhat, _ = project_onto_hull(y, V)
        w = r.dirichlet(np.ones(V.shape[0]))
        X = w @ V
        assert np.dot(X - xhat, y - xhat) <= 1e-8
        assert np.linalg.norm(y - X) >= np.linalg.norm(xhat - X) - 1e-8
        again, d2 = project_onto_hull(xhat, V)
        assert np.linalg.norm(again - xhat) <= 1e-9


class TestSupport:
    def test_circle(self):
        assert support_function(unit_circle(720), [0.0, 1.0]) == pytest.approx(1.0, abs=1e-4)

    def test_two_points(self):
        assert support_function([[1.0, 0.0], [0.0, 1.0]], [1.0, 0.0]) == 1.0

    def test_pentagon_vertex(self):
        cusps = hypocycloid_points(2 * np.pi * np.arange(5) / 5, 1.0, 5)
        for v in cusps:
            omega = v / np.linalg.norm(v)
            assert support_function(cusps, omega) == pytest.approx(np.linalg.norm(v), abs=1e-12)
            assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-12)

    def test_ties_lowest_index(self):
        V = np.array([[1.0, 0.0], [1.0, 5.0], [1.0, -5.0]])
        _, idx = support_function(V, [1.0, 0.0], return_index=True)
        assert idx == 0

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000))
    def test_argmax_and_midpoint_convexity(self, seed):
        r = np.random.default_rng(seed)
        V = r.standard_normal((20, 3))
        a, b = r.standard_normal(3), r.standard_normal(3)
        val, idx = support_function(V, a, return_index=True)
        assert val == pytest.approx(float(V[idx] @ a))
        mid = support_function(V, (a + b) / 2)
        assert mid <= (support_function(V, a) + support_function(V, b)) / 2 + 1e-12


class TestMembership:
    def test_centroid(self):
        assert hull_membership(TRIANGLE.mean(axis=0), TRIANGLE)

    def test_far_point(self):
        assert not hull_membership([1.0, 1.0 + math.sqrt(2) / 2 + 1.0], TRIANGLE, tol=1e-6)

    def test_vertex(self):
        assert hull_membership(TRIANGLE[1], TRIANGLE)


class TestHullOracle:
    def test_pruning_keeps_hull(self, rng):
        V = rng.standard_normal((500, 2))
        oracle = HullOracle(V)
        assert oracle.vertices.shape[0] < 50
        dirs = rng.standard_normal((30, 2))
        assert np.allclose(oracle.support(dirs), (dirs @ V.T).max(axis=1))
        for y in 4 * rng.standard_normal((5, 2)):
            a, _ = oracle.project(y)
            b, _ = project_onto_hull(y, V)
            assert np.allclose(a, b, atol=1e-9)

    def test_degenerate_input_falls_back(self):
        V = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]])
        idx = hull_vertices(V)
        x, dist = HullOracle(V).project([1.0, 1.0, 0.0])
        assert len(idx) >= 2
        assert np.allclose(x, [1.0, 0.0, 0.0], atol=1e-10) and dist == pytest.approx(1.0)

    def test_empty(self):
        with pytest.raises(ValueError):
            HullOracle(np.empty((0, 2)))
