"""Ambient-space primitives: point clouds, hyperplanes, tail counts, sphere nets."""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import NetTooLargeError, NoOracleSamples

DEFAULT_NET_CAP = 10_000_000


@dataclass
class PointCloud:
    """A stack of points sharing one ambient dimension, stored row-wise."""

    points: np.ndarray
    ambient_dim: int = -1

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            # a flat list is read as points in R^1 unless a dimension says otherwise
            if self.ambient_dim > 1 and pts.size % self.ambient_dim == 0:
                pts = pts.reshape(-1, self.ambient_dim)
            else:
                pts = pts.reshape(-1, 1)
        if pts.ndim != 2:
            raise ValueError("points must be a 2-d array (count, dim)")
        if self.ambient_dim < 0:
            self.ambient_dim = pts.shape[1]
        if pts.shape[1] != self.ambient_dim:
            raise ValueError(f"points have dimension {pts.shape[1]}, expected {self.ambient_dim}")
        if self.ambient_dim < 1:
            raise ValueError("ambient_dim must be positive")
        self.points = pts

    def __len__(self) -> int:
        return self.points.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.points if dtype is None else self.points.astype(dtype)

    def __getitem__(self, idx) -> "PointCloud":
        return PointCloud(self.points[idx], self.ambient_dim)

    def save(self, csv_path: str) -> str:
        """Write CSV plus a JSON manifest next to it; returns the manifest path."""
        write_points_csv(csv_path, self.points)
        manifest = {"ambient_dim": int(self.ambient_dim), "count": len(self), "path": os.path.basename(csv_path)}
        manifest_path = os.path.splitext(csv_path)[0] + ".json"
        with open(manifest_path, "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return manifest_path

    @classmethod
    def load(cls, manifest_path: str) -> "PointCloud":
        with open(manifest_path) as fh:
            manifest = json.load(fh)
        csv_path = os.path.join(os.path.dirname(manifest_path), manifest["path"])
        pts = read_points_csv(csv_path, manifest["ambient_dim"])
        if len(pts) != manifest["count"]:
            raise ValueError(f"{csv_path}: manifest says {manifest['count']} rows, found {len(pts)}")
        return cls(pts, manifest["ambient_dim"])


def as_points(P) -> np.ndarray:
    """Coerce a PointCloud or array-like to a (count, dim) float array."""
    if isinstance(P, PointCloud):
        return P.points
    arr = np.asarray(P, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    return arr


def write_points_csv(path: str, points: np.ndarray) -> None:
    points = np.asarray(points, dtype=float)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"x{i}" for i in range(points.shape[1])])
        for row in points:
            writer.writerow([repr(float(v)) for v in row])


def read_points_csv(path: str, ambient_dim: int | None = None) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty file, expected a header row")
        dim = len(header)
        if header != [f"x{i}" for i in range(dim)]:
            raise ValueError(f"{path}: header must be x0,...,x{dim - 1}")
        if ambient_dim is not None and dim != ambient_dim:
            raise ValueError(f"{path}: {dim} columns, expected {ambient_dim}")
        rows = [[float(v) for v in row] for row in reader if row]
    return np.array(rows, dtype=float).reshape(-1, dim)


@dataclass(frozen=True)
class Hyperplane:
    """The set {x : <x, normal> = offset}; the half-space below it is <x, normal> <= offset."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        b = np.asarray(self.normal, dtype=float).reshape(-1)
        if b.size < 1:
            raise ValueError("hyperplane dimension must be >= 1")
        if abs(np.linalg.norm(b) - 1.0) > 1e-12:
            raise ValueError("hyperplane normal must be a unit vector")
        object.__setattr__(self, "normal", b)
        object.__setattr__(self, "offset", float(self.offset))

    @property
    def dim(self) -> int:
        return self.normal.size

    @classmethod
    def from_direction(cls, direction, offset: float) -> "Hyperplane":
        d = np.asarray(direction, dtype=float)
        return cls(d / np.linalg.norm(d), offset)


def distance_point_to_hull_halfspace_form(y, H: Hyperplane) -> float:
    """Signed distance <y, b> - t of a point to a hyperplane."""
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.size != H.dim:
        raise ValueError(f"dimension mismatch: point has {y.size}, hyperplane has {H.dim}")
    return float(y @ H.normal - H.offset)


def halfspace_tail_count(P, b, gamma: float) -> float:
    """Fraction of points with <p, b> > gamma (strict)."""
    pts = as_points(P)
    if pts.shape[0] == 0:
        raise NoOracleSamples("no oracle samples")
    b = np.asarray(b, dtype=float).reshape(-1)
    return float(np.count_nonzero(pts @ b > gamma)) / pts.shape[0]


@dataclass
class SphereNet:
    dimension: int
    mesh: float
    directions: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return self.directions.shape[0]


def build_sphere_net(D: int, mesh: float, cap: int = DEFAULT_NET_CAP) -> SphereNet:
    """Deterministic mesh-net of the unit sphere in R^D.

    The cube [-1, 1]^D is cut into cells of side mesh/sqrt(D), so each cell has
    diameter mesh. Cells meeting the unit sphere are kept and their centers are
    pushed radially onto the sphere. A sphere point u lies in some kept cell with
    center c, and |u - c/|c|| <= |u - c| + ||c| - 1| <= mesh. Cardinality is at
    most (2 sqrt(D)/mesh + 1)^D <= (3 sqrt(D)/mesh)^D.
    """
    if not isinstance(D, (int, np.integer)) or D < 1:
        raise ValueError("D must be a positive integer")
    mesh = float(mesh)
    if not math.isfinite(mesh) or mesh <= 0 or mesh > 2:
        raise ValueError("mesh must be finite and in (0, 2]")
    if D == 1:
        return SphereNet(1, mesh, np.array([[-1.0], [1.0]]))

    pitch = mesh / math.sqrt(D)
    m = math.ceil(2.0 / pitch - 1e-12)
    if float(m) ** D > 100.0 * cap:
        raise NetTooLargeError(
            f"net too large: cube grid has {m}^{D} cells; use a larger mesh than {mesh}")
    axis = (np.arange(m) - (m - 1) / 2.0) * pitch
    half = pitch / 2.0

    # enumerate the grid slab by slab along the first axis, in lexicographic order
    rest = np.stack(np.meshgrid(*([axis] * (D - 1)), indexing="ij"), axis=-1).reshape(-1, D - 1)
    kept = []
    total = 0
    for a0 in axis:
        centers = np.column_stack([np.full(rest.shape[0], a0), rest])
        absc = np.abs(centers)
        near = np.sqrt(np.sum(np.maximum(absc - half, 0.0) ** 2, axis=1))
        far = np.sqrt(np.sum((absc + half) ** 2, axis=1))
        sel = centers[(near <= 1.0) & (far >= 1.0)]
        if sel.size:
            kept.append(sel)
            total += sel.shape[0]
            if total > cap:
                raise NetTooLargeError(
                    f"net too large: more than {cap} directions; use a larger mesh than {mesh}")
    centers = np.concatenate(kept)
    centers = centers[np.linalg.norm(centers, axis=1) > 0]
    dirs = centers / np.linalg.norm(centers, axis=1, keepdims=True)
    # collinear cell centers can land on the same direction; keep the first
    _, first = np.unique(np.round(dirs, 12), axis=0, return_index=True)
    dirs = dirs[np.sort(first)]
    return SphereNet(D, mesh, dirs)
