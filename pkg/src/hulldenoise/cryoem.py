"""Synthetic tomographic forward model: rotate a density, integrate along z, sample pixels.

The model has three linear stages:
  T(R) f = f(R^-1 q)                      rotation action on densities in B(0, 1/2)
  F g (x) = integral of g(x, z) dz        over the chord of the unit ball above x
  S h = N^((k-1)/2) * pixel integrals      on [-1/2, 1/2]^(k-1), N pixels per axis
and the operator norms satisfy |F| <= sqrt(2), |S| = 1.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import expm

from .datagen import child_seed, dataset_from_clean
from .errors import ResourceCapError

SUPPORT_RADIUS = 0.5


@functools.lru_cache(maxsize=None)
def gauss_legendre(nodes: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(nodes)
    return x, w


@dataclass
class Rotation:
    matrix: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.matrix, dtype=float)
        if R.ndim != 2 or R.shape[0] != R.shape[1]:
            raise ValueError("rotation must be a square matrix")
        if not np.allclose(R.T @ R, np.eye(R.shape[0]), atol=1e-10):
            raise ValueError("rotation must be orthogonal")
        if abs(np.linalg.det(R) - 1) > 1e-10:
            raise ValueError("rotation must have determinant +1")
        self.matrix = R

    @property
    def k(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def identity(cls, k: int) -> "Rotation":
        return cls(np.eye(k))


def haar_matrices(k: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """count Haar rotations as a (count, k, k) stack."""
    G = rng.standard_normal((count, k, k))
    Q, Rm = np.linalg.qr(G)
    Q = Q * np.sign(np.diagonal(Rm, axis1=1, axis2=2))[:, None, :]
    flip = np.linalg.det(Q) < 0
    Q[flip, :, 0] *= -1
    return Q


def haar_rotation(k: int, seed: int) -> Rotation:
    """Haar-distributed element of SO(k): QR of a Gaussian matrix with sign correction."""
    if k < 2:
        raise ValueError("k must be >= 2")
    return Rotation(haar_matrices(k, 1, np.random.default_rng(seed))[0])


def d_hs(R1: Rotation, R2: Rotation) -> float:
    """Hilbert-Schmidt (Frobenius) distance between rotation matrices."""
    return float(np.linalg.norm(R1.matrix - R2.matrix))


def rotation_angle_2d(R: Rotation) -> float:
    return float(np.arctan2(R.matrix[1, 0], R.matrix[0, 0]) % (2 * np.pi))


@dataclass
class Density:
    """Sum of bumps a (1 - |q - c|^2 / r^2)^2 on |q - c| < r, composed with a rotation.

    Each bump is C^1 and vanishes with its gradient on its boundary sphere.
    """

    centers: np.ndarray
    radii: np.ndarray
    amplitudes: np.ndarray
    rotation: np.ndarray | None = None
    quad_nodes: int = 72
    _norms: tuple | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        self.radii = np.asarray(self.radii, dtype=float).reshape(-1)
        self.amplitudes = np.asarray(self.amplitudes, dtype=float).reshape(-1)
        if not (self.centers.shape[0] == self.radii.size == self.amplitudes.size):
            raise ValueError("centers, radii and amplitudes must have matching lengths")
        reach = np.linalg.norm(self.centers, axis=1) + self.radii
        if np.any(reach > SUPPORT_RADIUS + 1e-12):
            raise ValueError("every bump must sit inside B(0, 1/2)")
        if self.rotation is None:
            self.rotation = np.eye(self.k)

    @property
    def k(self) -> int:
        return self.centers.shape[1]

    def __call__(self, q) -> np.ndarray:
        q = np.atleast_2d(np.asarray(q, dtype=float))
        # f(R^-1 q) with row vectors: R^T q becomes q @ R
        qr = q @ self.rotation
        out = np.zeros(q.shape[0])
        for c, r, a in zip(self.centers, self.radii, self.amplitudes):
            s2 = np.sum((qr - c) ** 2, axis=1) / r ** 2
            inside = s2 < 1
            out[inside] += a * (1 - s2[inside]) ** 2
        return out

    def gradient(self, q) -> np.ndarray:
        q = np.atleast_2d(np.asarray(q, dtype=float))
        qr = q @ self.rotation
        g = np.zeros_like(qr)
        for c, r, a in zip(self.centers, self.radii, self.amplitudes):
            diff = qr - c
            s2 = np.sum(diff ** 2, axis=1) / r ** 2
            coef = np.where(s2 < 1, -4 * a * (1 - s2) / r ** 2, 0.0)
            g += coef[:, None] * diff
        # chain rule through q -> q @ R
        return g @ self.rotation.T

    def _grid(self):
        n = self.quad_nodes
        h = 2 * SUPPORT_RADIUS / n
        axis = -SUPPORT_RADIUS + h * (np.arange(n) + 0.5)
        grid = np.stack(np.meshgrid(*([axis] * self.k), indexing="ij"), axis=-1).reshape(-1, self.k)
        return grid, h ** self.k

    def norms(self) -> tuple[float, float]:
        """(L2 norm, gradient L2 seminorm) by the midpoint rule on a cube grid."""
        if self._norms is None:
            grid, vol = self._grid()
            l2 = math.sqrt(float(np.sum(self(grid) ** 2)) * vol)
            h1 = math.sqrt(float(np.sum(self.gradient(grid) ** 2)) * vol)
            self._norms = (l2, h1)
        return self._norms

    @property
    def l2_norm_est(self) -> float:
        return self.norms()[0]

    @property
    def sobolev_seminorm_est(self) -> float:
        return self.norms()[1]

    def scaled(self, factor: float) -> "Density":
        return Density(self.centers, self.radii, self.amplitudes * factor, self.rotation, self.quad_nodes)

    def __add__(self, other: "Density") -> "Density":
        if not np.allclose(self.rotation, other.rotation):
            raise ValueError("can only add densities under the same rotation")
        return Density(np.vstack([self.centers, other.centers]), np.concatenate([self.radii, other.radii]),
                       np.concatenate([self.amplitudes, other.amplitudes]), self.rotation, self.quad_nodes)

    def is_radial(self) -> bool:
        return bool(np.allclose(self.centers, 0.0))

    def spec(self) -> dict:
        return {"centers": self.centers.tolist(), "radii": self.radii.tolist(),
                "amplitudes": self.amplitudes.tolist()}


def default_density(k: int = 3) -> Density:
    """Three bumps of distinct radii, asymmetric, scaled so both norms are at most 1."""
    centers = np.array([[0.22, 0.05, 0.0], [-0.12, 0.2, 0.06], [0.02, -0.16, 0.22]])[:, :k]
    f = Density(centers, [0.2, 0.15, 0.1], [1.0, 0.7, 1.3])
    return f.scaled(1.0 / max(f.norms()))


def radial_density(k: int = 3) -> Density:
    f = Density(np.zeros((1, k)), [0.4], [1.0])
    return f.scaled(1.0 / max(f.norms()))


def rotate_density(f: Density, R: Rotation) -> Density:
    """The density q -> f(R^-1 q)."""
    return Density(f.centers, f.radii, f.amplitudes, R.matrix @ f.rotation, f.quad_nodes, f._norms)


def xray_transform(f: Callable, x, nodes: int = 64) -> np.ndarray:
    """Integral of f over the chord {(x, z) : |z| <= sqrt(1 - |x|^2)} for each row x.

    Gauss-Legendre with `nodes` points per chord. `f` takes points in R^k (rows)
    with z as the last coordinate.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    m, km1 = x.shape
    half = np.sqrt(np.clip(1.0 - np.sum(x ** 2, axis=1), 0.0, None))
    zn, wn = gauss_legendre(nodes)
    if isinstance(f, Density):
        return _bump_line_sums(f, x, half, zn, wn)
    z = half[:, None] * zn[None, :]
    q = np.concatenate([np.repeat(x, nodes, axis=0), z.reshape(-1, 1)], axis=1)
    vals = np.asarray(f(q), dtype=float)
    return np.sum(vals.reshape(m, nodes) * (half[:, None] * wn[None, :]), axis=1)


def _bump_line_sums(f: Density, x, half, zn, wn) -> np.ndarray:
    """Same chord quadrature as the generic path, evaluated bump by bump.

    The sum is linear in the bumps, so each bump only needs the chords that
    pass through its ball; all other node values are exactly zero.
    """
    out = np.zeros(x.shape[0])
    # bump centered at c in the reference frame sits at R c in the rotated one
    moved = f.centers @ f.rotation.T
    for cq, r, a in zip(moved, f.radii, f.amplitudes):
        off2 = np.sum((x - cq[:-1]) ** 2, axis=1)
        sel = np.flatnonzero(off2 < r * r)
        if sel.size == 0:
            continue
        h = half[sel, None]
        s2 = (off2[sel, None] + (h * zn[None, :] - cq[-1]) ** 2) / r ** 2
        vals = np.where(s2 < 1, a * (1 - s2) ** 2, 0.0)
        out[sel] += np.sum(vals * h * wn[None, :], axis=1)
    return out


@dataclass
class PixelImage:
    k_minus_1: int
    n_pix: int
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(-1)
        if self.values.size != self.n_pix ** self.k_minus_1:
            raise ValueError("pixel count does not match n_pix^(k-1)")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("pixel values must be finite")


@functools.lru_cache(maxsize=16)
def pixel_quadrature(n_pix: int, k_minus_1: int, nodes: int = 8):
    """Tensor Gauss-Legendre nodes for every pixel of [-1/2, 1/2]^(k-1).

    Returns (points, weights, pixel index of each point), pixels in row-major order.
    """
    if n_pix < 1:
        raise ValueError("n_pix must be >= 1")
    zn, wn = gauss_legendre(nodes)
    side = 1.0 / n_pix
    lows = -0.5 + side * np.arange(n_pix)
    axis_pts = (lows[:, None] + side * (zn[None, :] + 1) / 2).reshape(-1)
    axis_w = np.tile(wn * side / 2, n_pix)
    axis_pix = np.repeat(np.arange(n_pix), nodes)
    mesh = np.meshgrid(*([np.arange(axis_pts.size)] * k_minus_1), indexing="ij")
    idx = np.stack([m.reshape(-1) for m in mesh], axis=1)
    points = axis_pts[idx]
    weights = np.prod(axis_w[idx], axis=1)
    pix = np.zeros(idx.shape[0], dtype=np.int64)
    for a in range(k_minus_1):
        pix = pix * n_pix + axis_pix[idx[:, a]]
    return points, weights, pix


def pixel_sample(h: Callable, n_pix: int, k_minus_1: int = 2, nodes: int = 8) -> PixelImage:
    """v_i = N^((k-1)/2) times the integral of h over pixel i."""
    pts, w, pix = pixel_quadrature(n_pix, k_minus_1, nodes)
    vals = np.asarray(h(pts), dtype=float)
    v = n_pix ** (k_minus_1 / 2) * np.bincount(pix, weights=w * vals, minlength=n_pix ** k_minus_1)
    return PixelImage(k_minus_1, n_pix, v)


def forward_map(f: Density, R: Rotation, n_pix: int = 16, z_nodes: int = 64, pix_nodes: int = 8) -> PixelImage:
    """Pixel image of the rotated density."""
    g = rotate_density(f, R)
    km1 = f.k - 1
    pts, w, pix = pixel_quadrature(n_pix, km1, pix_nodes)
    vals = np.zeros(pts.shape[0])
    live = np.sum(pts ** 2, axis=1) < SUPPORT_RADIUS ** 2
    vals[live] = xray_transform(g, pts[live], z_nodes)
    v = n_pix ** (km1 / 2) * np.bincount(pix, weights=w * vals, minlength=n_pix ** km1)
    return PixelImage(km1, n_pix, v)


def l2_distance(f1: Density, f2: Density) -> float:
    grid, vol = f1._grid()
    return math.sqrt(float(np.sum((f1(grid) - f2(grid)) ** 2)) * vol)


def power_iteration(matvec, rmatvec, dim: int, seed: int = 0, iters: int = 500, tol: float = 1e-12) -> float:
    """Largest singular value of a linear map given its action and adjoint."""
    v = np.random.default_rng(seed).standard_normal(dim)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iters):
        w = rmatvec(matvec(v))
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        new = math.sqrt(nw)
        v = w / nw
        if abs(new - est) <= tol * new:
            return new
        est = new
    return est


def disk_grid(n: int) -> tuple[np.ndarray, float]:
    """Cell centers of an n x n grid on [-1, 1]^2 that fall in the open unit disk, and the cell area."""
    h = 2.0 / n
    axis = -1 + h * (np.arange(n) + 0.5)
    pts = np.stack(np.meshgrid(axis, axis, indexing="ij"), axis=-1).reshape(-1, 2)
    return pts[np.sum(pts ** 2, axis=1) < 1], h * h


def xray_operator_norm(n_grid: int = 32, nodes: int = 64, seed: int = 0) -> float:
    """Norm of the discretized X-ray map in k = 3, between quadrature-weighted L2 spaces.

    With g sampled at the chord nodes above each disk cell, |g|^2 = dA sum w g^2 and
    |Fg|^2 = dA sum (sum w g)^2. In orthonormal coordinates the map has entries sqrt(w).
    """
    x, _ = disk_grid(n_grid)
    half = np.sqrt(1 - np.sum(x ** 2, axis=1))
    _, wn = gauss_legendre(nodes)
    sw = np.sqrt(half[:, None] * wn[None, :])
    m = x.shape[0]
    return power_iteration(lambda g: np.sum(sw * g.reshape(m, nodes), axis=1),
                           lambda h: (sw * h[:, None]).reshape(-1), m * nodes, seed)


def sampling_operator_norm(n_pix: int = 16, k_minus_1: int = 2, nodes: int = 8, seed: int = 0) -> float:
    """Norm of the discretized pixel-sampling map from quadrature-weighted L2 to l2."""
    _, w, pix = pixel_quadrature(n_pix, k_minus_1, nodes)
    sw = n_pix ** (k_minus_1 / 2) * np.sqrt(w)
    npx = n_pix ** k_minus_1
    return power_iteration(lambda g: np.bincount(pix, weights=sw * g, minlength=npx),
                           lambda v: sw * v[pix], w.size, seed)


def random_skew(k: int, rng: np.random.Generator) -> np.ndarray:
    A = rng.standard_normal((k, k))
    X = (A - A.T) / 2
    return X / np.linalg.norm(X)


def lipschitz_probe(f: Density, pairs: int = 200, seed: int = 0, n_pix: int = 16,
                    step: tuple[float, float] = (0.05, 0.3), rotation_norms: bool = False) -> dict:
    """Largest ratio |image(R1) - image(R2)| / d_HS(R1, R2) over seeded nearby pairs.

    R1 is Haar; R2 = R1 exp(theta X) with X a unit skew matrix and theta uniform in `step`.
    With rotation_norms the same ratio is also measured for |f^R1 - f^R2|_2 (slow).
    """
    rng = np.random.default_rng(seed)
    ratios = np.empty(pairs)
    l2_ratios = np.full(pairs, np.nan)
    for i in range(pairs):
        R1 = Rotation(haar_matrices(f.k, 1, rng)[0])
        theta = rng.uniform(*step)
        R2 = Rotation(R1.matrix @ expm(theta * random_skew(f.k, rng)))
        dist = d_hs(R1, R2)
        diff = forward_map(f, R1, n_pix).values - forward_map(f, R2, n_pix).values
        ratios[i] = np.linalg.norm(diff) / dist
        if rotation_norms:
            l2_ratios[i] = l2_distance(rotate_density(f, R1), rotate_density(f, R2)) / dist
    out = {"lipschitz": float(ratios.max()), "ratios": ratios}
    if rotation_norms:
        out.update(rotation_lipschitz=float(l2_ratios.max()), l2_ratios=l2_ratios)
    return out


def so_k_covering_estimate(k: int, eps: float, seed: int = 0, n_samples: int | None = None,
                           batch: int = 2048, check_saturation: bool = True) -> int:
    """Size of a greedy eps-separated net of Haar samples in SO(k), which is also an eps-cover of them.

    Raises ResourceCapError when the last fifth of the samples still grew the net by
    more than 2%, a sign that n_samples is too small for this eps.
    """
    if k not in (2, 3):
        raise ValueError("k must be 2 or 3")
    if eps <= 0:
        raise ValueError("eps must be positive")
    if n_samples is None:
        n_samples = 20_000 if k == 2 else 200_000
    rng = np.random.default_rng(seed)
    net = np.empty((0, k * k))
    size_at_late = None
    eps2 = eps * eps
    for start in range(0, n_samples, batch):
        if size_at_late is None and start >= 0.8 * n_samples:
            size_at_late = net.shape[0]
        cand = haar_matrices(k, min(batch, n_samples - start), rng).reshape(-1, k * k)
        if net.shape[0]:
            d2 = np.sum(cand ** 2, 1)[:, None] + np.sum(net ** 2, 1)[None, :] - 2 * cand @ net.T
            cand = cand[np.min(d2, axis=1) > eps2]
        fresh = []
        for c in cand:
            # earlier net points were already checked above; only this batch's additions remain
            if not fresh or np.min(np.sum((np.asarray(fresh) - c) ** 2, axis=1)) > eps2:
                fresh.append(c)
        if fresh:
            net = np.vstack([net, fresh])
    if size_at_late is None:
        size_at_late = net.shape[0]
    late = net.shape[0] - size_at_late
    if check_saturation and late > 0.02 * net.shape[0]:
        raise ResourceCapError(f"sample budget exhausted: net still growing ({late} late additions)")
    return int(net.shape[0])


def image_dataset(f: Density, count: int, sigma_rel: float, n0: int, n1: int, seed: int,
                  n_pix: int = 16):
    """Images of f under Haar rotations, centered and scaled into the unit ball, plus noise.

    The scale uses the a priori bound |image| <= sqrt(2) |f|_2, so differences of
    images are at most 2 sqrt(2) |f|_2. Noise std per pixel is sigma_rel times the
    RMS norm of the centered, scaled clean images.
    """
    rot_seed = child_seed(seed, "rotations")
    mats = haar_matrices(f.k, count, np.random.default_rng(rot_seed))
    imgs = np.array([forward_map(f, Rotation(R), n_pix).values for R in mats])
    scale = 1.0 / (2 * math.sqrt(2) * f.l2_norm_est)
    clean = (imgs - imgs.mean(axis=0)) * scale
    rms = float(np.sqrt(np.mean(np.sum(clean ** 2, axis=1))))
    sigma = sigma_rel * rms
    meta = {"kind": "cryoem", "k": f.k, "n_pix": n_pix, "density": f.spec(), "scale": scale,
            "image_rms": rms, "sigma_rel": sigma_rel}
    ds = dataset_from_clean(clean, sigma, n0, n1, seed, meta)
    ds.seeds["rotations"] = rot_seed
    return ds
