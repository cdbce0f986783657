"""Exact nearest-point and support queries on the convex hull of a finite point set.

Projection uses Wolfe's minimum-norm-point active-set method applied to the
translated set V - y. The corral (active vertex set) never exceeds D + 1 points,
so each iteration solves a tiny affine least-squares problem.
"""
from __future__ import annotations

import logging

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .errors import OracleFailure
from .geometry import as_points

log = logging.getLogger(__name__)

# gap resolution limit, relative to max |v - y|^2
_ROUNDOFF = 64 * np.finfo(float).eps


def _affine_minimizer(Q: np.ndarray) -> np.ndarray:
    """Weights alpha (sum 1) minimizing |alpha @ Q| over the affine hull of the rows."""
    if Q.shape[0] == 1:
        return np.ones(1)
    base = Q[0]
    A = (Q[1:] - base).T
    beta = np.linalg.lstsq(A, -base, rcond=None)[0]
    return np.concatenate([[1.0 - beta.sum()], beta])


def min_norm_point(Q: np.ndarray, tol: float = 1e-10, max_iter: int | None = None):
    """Minimum-norm point of conv(Q) by Wolfe's method.

    Returns (x, corral indices, weights, gap). `gap` is the Frank-Wolfe duality
    gap |x|^2 - min_j <q_j, x>, which bounds |x - x*|^2.
    """
    m, D = Q.shape
    if max_iter is None:
        max_iter = 50 * (m + D) + 100
    sq = np.einsum("ij,ij->i", Q, Q)
    scale = max(float(sq.max()), np.finfo(float).tiny)
    stop = max((tol * tol) * scale, _ROUNDOFF * scale)

    S = [int(np.argmin(sq))]
    w = np.ones(1)
    x = Q[S[0]].copy()
    gap = np.inf
    for _ in range(max_iter):
        dots = Q @ x
        j = int(np.argmin(dots))
        gap = float(x @ x - dots[j])
        if gap <= stop or j in S:
            return x, S, w, max(gap, 0.0)
        S.append(j)
        w = np.append(w, 0.0)
        while True:
            alpha = _affine_minimizer(Q[S])
            if np.all(alpha > 1e-14):
                w = alpha
                break
            # step from w toward alpha until the first weight hits zero
            neg = alpha <= 1e-14
            denom = w[neg] - alpha[neg]
            ratios = np.where(denom > 0, w[neg] / np.where(denom > 0, denom, 1.0), np.inf)
            theta = min(1.0, float(ratios.min()))
            w = w + theta * (alpha - w)
            keep = w > 1e-14
            if not np.any(keep):
                keep[int(np.argmax(w))] = True
            S = [s for s, k in zip(S, keep) if k]
            w = w[keep]
            w = w / w.sum()
        x = w @ Q[S]
    raise OracleFailure("nearest-point iteration hit its cap", gap)


def project_onto_hull(y, V, tol: float = 1e-10, max_iter: int | None = None):
    """Euclidean projection of y onto conv(V). Returns (point, distance)."""
    pts = as_points(V)
    y = np.asarray(y, dtype=float).reshape(-1)
    if pts.shape[0] == 0:
        raise ValueError("empty vertex set")
    if pts.shape[1] != y.size:
        raise ValueError(f"dimension mismatch: point has {y.size}, vertices have {pts.shape[1]}")
    x, _, _, _ = min_norm_point(pts - y, tol=tol, max_iter=max_iter)
    dist = float(np.linalg.norm(x))
    scale = float(np.max(np.linalg.norm(pts - y, axis=1)))
    if dist <= 1e-12 * max(scale, 1.0):
        return y.copy(), 0.0
    return y + x, dist


def support_function(V, omega, return_index: bool = False):
    """max_v <v, omega>; ties resolve to the lowest index."""
    pts = as_points(V)
    if pts.shape[0] == 0:
        raise ValueError("empty vertex set")
    vals = pts @ np.asarray(omega, dtype=float).reshape(-1)
    i = int(np.argmax(vals))
    return (float(vals[i]), i) if return_index else float(vals[i])


def hull_membership(y, V, tol: float = 1e-9) -> bool:
    return project_onto_hull(y, V)[1] <= tol


def hull_vertices(V, max_qhull_dim: int = 8) -> np.ndarray:
    """Indices of the extreme points of V (all indices if Qhull cannot help)."""
    pts = as_points(V)
    m, D = pts.shape
    if D == 1:
        return np.unique([int(np.argmin(pts[:, 0])), int(np.argmax(pts[:, 0]))])
    if m <= D + 1 or D > max_qhull_dim:
        return np.arange(m)
    try:
        return np.sort(ConvexHull(pts).vertices)
    except (QhullError, ValueError) as exc:
        log.debug("qhull fell back to the full point set: %s", exc)
        return np.arange(m)


class HullOracle:
    """Exact support and projection queries against one fixed vertex set.

    Interior points are discarded up front; the hull itself is unchanged, so
    every query answers for conv(V).
    """

    def __init__(self, V, prune: bool = True):
        pts = as_points(V)
        if pts.shape[0] == 0:
            raise ValueError("empty vertex set")
        self.all_points = pts
        self.vertex_index = hull_vertices(pts) if prune else np.arange(pts.shape[0])
        self.vertices = pts[self.vertex_index]

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    def support(self, directions) -> np.ndarray:
        """Support values for each row of `directions`."""
        dirs = np.atleast_2d(np.asarray(directions, dtype=float))
        out = np.empty(dirs.shape[0])
        step = max(1, 2_000_000 // max(1, self.vertices.shape[0]))
        for a in range(0, dirs.shape[0], step):
            out[a:a + step] = (dirs[a:a + step] @ self.vertices.T).max(axis=1)
        return out

    def project(self, y):
        return project_onto_hull(y, self.vertices)

    def project_many(self, Y) -> tuple[np.ndarray, np.ndarray]:
        Y = as_points(Y)
        proj = np.empty_like(Y)
        dist = np.empty(Y.shape[0])
        for i, y in enumerate(Y):
            proj[i], dist[i] = project_onto_hull(y, self.vertices)
        return proj, dist
