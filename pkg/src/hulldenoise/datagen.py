"""Seeded synthetic manifolds, Gaussian corruption and the three-block dataset."""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .geometry import PointCloud, as_points, read_points_csv, write_points_csv
from .numeric import unit_ball_volume

ARC_KNOTS = 4096


def child_seed(parent: int, tag: str) -> int:
    """Independent 63-bit seed for one role, derived by hashing (parent, tag)."""
    digest = hashlib.sha256(f"{int(parent)}:{tag}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def _ellipse_arc_table(knots: int = ARC_KNOTS):
    t = np.linspace(0.0, 2 * np.pi, knots)
    speed = np.sqrt(np.sin(t) ** 2 + 0.25 * np.cos(t) ** 2)
    arc = np.concatenate([[0.0], np.cumsum(0.5 * (speed[1:] + speed[:-1]) * np.diff(t))])
    return t, arc


def ellipse_points(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    return np.column_stack([np.cos(t), 0.5 * np.sin(t)])


def sample_ellipse(count: int, seed: int) -> PointCloud:
    """Uniform arc-length samples on x^2 + 4 y^2 = 1."""
    if count < 1:
        raise ValueError("count must be >= 1")
    t_knots, arc = _ellipse_arc_table()
    u = np.random.default_rng(seed).uniform(0.0, arc[-1], count)
    return PointCloud(ellipse_points(np.interp(u, arc, t_knots)), 2)


def hypocycloid_points(t, a: float = 1.0, n_cusps: int = 5) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    b = a / n_cusps
    k = (a - b) / b
    return np.column_stack([(a - b) * np.cos(t) + b * np.cos(k * t),
                            (a - b) * np.sin(t) - b * np.sin(k * t)])


def sample_hypocycloid(a: float, n_cusps: int, count: int, seed: int) -> PointCloud:
    """Curve samples with the parameter t uniform on [0, 2 pi)."""
    if a <= 0 or n_cusps < 3:
        raise ValueError("need a > 0 and n_cusps >= 3")
    t = np.random.default_rng(seed).uniform(0.0, 2 * np.pi, count)
    return PointCloud(hypocycloid_points(t, a, n_cusps), 2)


def add_gaussian_noise(P, sigma: float, seed: int) -> PointCloud:
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    pts = as_points(P)
    noise = np.random.default_rng(seed).standard_normal(pts.shape)
    return PointCloud(pts + sigma * noise, pts.shape[1])


@dataclass
class ManifoldSpec:
    """Which curve to sample and how to embed it in R^ambient_dim (first coordinates)."""

    kind: str = "ellipse"
    ambient_dim: int = 2
    a: float = 1.0
    n_cusps: int = 5
    radius: float = 1.0

    KINDS = ("ellipse", "hypocycloid", "circle")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown manifold kind {self.kind!r}; choose from {self.KINDS}")
        if self.ambient_dim < 2:
            raise ValueError("ambient_dim must be >= 2 for planar curves")

    @property
    def intrinsic_dim(self) -> int:
        return 1

    def _embed(self, pts: np.ndarray) -> np.ndarray:
        out = np.zeros((pts.shape[0], self.ambient_dim))
        out[:, :2] = pts
        return out

    def sample(self, count: int, seed: int) -> PointCloud:
        if self.kind == "ellipse":
            pts = sample_ellipse(count, seed).points
        elif self.kind == "hypocycloid":
            pts = sample_hypocycloid(self.a, self.n_cusps, count, seed).points
        else:
            t = np.random.default_rng(seed).uniform(0.0, 2 * np.pi, count)
            pts = self.radius * np.column_stack([np.cos(t), np.sin(t)])
        return PointCloud(self._embed(pts), self.ambient_dim)

    def dense_grid(self, count: int = 4096) -> PointCloud:
        """Deterministic parameter grid on the curve, used as a hull vertex set."""
        if self.kind == "hypocycloid":
            # include every cusp so the hull is exactly the polygon
            count = max(count, self.n_cusps)
            count -= count % self.n_cusps
        t = np.linspace(0.0, 2 * np.pi, count, endpoint=False)
        return PointCloud(self.dense_grid_at(t), self.ambient_dim)

    def arc_quadrature(self, count: int = 8192) -> tuple[np.ndarray, np.ndarray]:
        """Grid points with weights of the normalized arc-length measure."""
        t = np.linspace(0.0, 2 * np.pi, count, endpoint=False)
        pts = self.dense_grid_at(t)
        # central differences on the periodic grid give the speed to second order
        speed = np.linalg.norm(np.roll(pts, -1, axis=0) - np.roll(pts, 1, axis=0), axis=1)
        return pts, speed / speed.sum()

    def dense_grid_at(self, t) -> np.ndarray:
        if self.kind == "ellipse":
            pts = ellipse_points(t)
        elif self.kind == "hypocycloid":
            pts = hypocycloid_points(t, self.a, self.n_cusps)
        else:
            pts = self.radius * np.column_stack([np.cos(t), np.sin(t)])
        return self._embed(pts)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "ambient_dim": self.ambient_dim, "a": self.a,
                "n_cusps": self.n_cusps, "radius": self.radius}


@dataclass
class Dataset:
    clean: PointCloud
    noisy: PointCloud
    sigma: float
    partition: tuple[int, int, int]
    seed: int
    manifold: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.clean) != len(self.noisy) or self.clean.ambient_dim != self.noisy.ambient_dim:
            raise ValueError("clean and noisy clouds must match in count and dimension")
        n0, n1, n = (int(v) for v in self.partition)
        check_partition(n0, n1, n)
        if n != len(self.clean):
            raise ValueError(f"partition total {n} does not match {len(self.clean)} points")
        self.partition = (n0, n1, n)

    @property
    def ambient_dim(self) -> int:
        return self.clean.ambient_dim

    def block(self, which: str) -> tuple[np.ndarray, np.ndarray]:
        """(clean, noisy) rows of the 'pca', 'oracle' or 'target' block."""
        n0, n1, n = self.partition
        sl = {"pca": slice(0, n0), "oracle": slice(n0, n1), "target": slice(n1, n)}[which]
        return self.clean.points[sl], self.noisy.points[sl]

    def save(self, directory: str) -> None:
        os.makedirs(directory, exist_ok=True)
        write_points_csv(os.path.join(directory, "clean.csv"), self.clean.points)
        write_points_csv(os.path.join(directory, "noisy.csv"), self.noisy.points)
        meta = {"manifold": self.manifold, "sigma": self.sigma, "seed": self.seed,
                "seeds": self.seeds, "partition": list(self.partition),
                "ambient_dim": self.ambient_dim, "count": len(self.clean)}
        with open(os.path.join(directory, "meta.json"), "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, directory: str) -> "Dataset":
        with open(os.path.join(directory, "meta.json")) as fh:
            meta = json.load(fh)
        dim = meta["ambient_dim"]
        clean = read_points_csv(os.path.join(directory, "clean.csv"), dim)
        noisy = read_points_csv(os.path.join(directory, "noisy.csv"), dim)
        return cls(PointCloud(clean, dim), PointCloud(noisy, dim), float(meta["sigma"]),
                   tuple(meta["partition"]), int(meta["seed"]), meta.get("manifold", {}),
                   meta.get("seeds", {}))


def check_partition(n0: int, n1: int, n: int) -> None:
    if 0 < n0 == n1 < n:
        raise ValueError(f"missing oracle block: N0 = N1 = {n0}")
    if not 0 < n0 < n1 < n:
        raise ValueError(f"invalid partition: need 0 < N0 < N1 < N, got ({n0}, {n1}, {n})")


def dataset_from_clean(clean, sigma: float, n0: int, n1: int, seed: int,
                       manifold: dict | None = None) -> Dataset:
    """Wrap an existing clean cloud, adding seeded noise."""
    clean = clean if isinstance(clean, PointCloud) else PointCloud(clean)
    check_partition(n0, n1, len(clean))
    noise_seed = child_seed(seed, "noise")
    noisy = add_gaussian_noise(clean, sigma, noise_seed)
    return Dataset(clean, noisy, float(sigma), (n0, n1, len(clean)), int(seed),
                   manifold or {}, {"noise": noise_seed})


def make_dataset(manifold: ManifoldSpec, n0: int, n1: int, n: int, sigma: float, seed: int) -> Dataset:
    check_partition(n0, n1, n)
    clean_seed = child_seed(seed, "clean")
    clean = manifold.sample(n, clean_seed)
    ds = dataset_from_clean(clean, sigma, n0, n1, seed, manifold.to_dict())
    ds.seeds["clean"] = clean_seed
    return ds


def lower_mass_constant(samples, probes, radii, d: int) -> float:
    """Empirical min over probes x and radii r of mu(B(x, r)) / (omega_d r^d)."""
    pts = as_points(samples)
    probes = as_points(probes)
    radii = np.asarray(radii, dtype=float)
    omega = unit_ball_volume(d)
    best = np.inf
    for x in probes:
        dist = np.sort(np.linalg.norm(pts - x, axis=1))
        mass = np.searchsorted(dist, radii, side="left") / pts.shape[0]
        best = min(best, float(np.min(mass / (omega * radii ** d))))
    return best
