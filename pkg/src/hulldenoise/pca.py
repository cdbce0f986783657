"""Least-squares affine subspace fit and the dimension-reduction bookkeeping."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2

from .geometry import as_points
from .numeric import snap_ceil, unit_ball_volume


@dataclass
class SubspaceFit:
    basis: np.ndarray  # (D, n), orthonormal rows
    center: np.ndarray  # (n,)
    D: int
    residual: float
    eigenvalues: np.ndarray | None = None
    degenerate: bool = False

    @property
    def ambient_dim(self) -> int:
        return self.center.size

    def to_json(self) -> str:
        return json.dumps({"center": self.center.tolist(), "basis": self.basis.tolist(),
                           "D": self.D, "residual": self.residual,
                           "degenerate": self.degenerate}, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SubspaceFit":
        obj = json.loads(text)
        return cls(np.array(obj["basis"], dtype=float).reshape(obj["D"], -1),
                   np.array(obj["center"], dtype=float), int(obj["D"]),
                   float(obj["residual"]), None, bool(obj.get("degenerate", False)))


@dataclass
class PcaBoundInputs:
    eps0: float
    alpha: float
    sigma: float
    n: int
    N0: int
    d: int
    c_M: float
    D: int | None = None
    C_radius: float = 2.0
    C_bias: float = 1.0

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.eps0 < 0 or self.sigma < 0 or self.n < 1 or self.N0 < 1 or self.d < 1 or self.c_M <= 0:
            raise ValueError("bound inputs must be positive")

    @property
    def omega_d(self) -> float:
        return unit_ball_volume(self.d)

    def reduced_dim(self) -> int:
        return self.D if self.D is not None else choose_reduced_dim(self.n, self.d, self.c_M, self.eps0)

    def radius(self) -> float:
        return truncation_radius(self.sigma, self.n, self.N0, self.alpha, self.C_radius)

    def empirical_eps(self) -> float:
        return eps_emp(self.radius(), self.reduced_dim(), self.N0, self.alpha)


def choose_reduced_dim(n: int, d: int, c_M: float, eps0: float) -> int:
    """min(n, ceil(c_M^-1 omega_d^-1 eps0^-d))."""
    if not 0 < eps0 <= 2:
        raise ValueError("eps0 must lie in (0, 2]")
    if not 0 < c_M < math.exp(-1):
        raise ValueError("c_M must lie in (0, 1/e)")
    if n < 1 or d < 1:
        raise ValueError("n and d must be positive")
    raw = (1.0 / c_M) * (1.0 / unit_ball_volume(d)) * eps0 ** (-d)
    return min(int(n), max(1, snap_ceil(raw)))


def _sign_fix(vecs: np.ndarray) -> np.ndarray:
    """Flip each row so its first coordinate above 1e-12 in magnitude is positive."""
    out = vecs.copy()
    for row in out:
        nz = np.flatnonzero(np.abs(row) > 1e-12)
        if nz.size and row[nz[0]] < 0:
            row *= -1
    return out


def fit_subspace(block, D: int) -> SubspaceFit:
    """Top-D principal directions of the centered block."""
    Y = as_points(block)
    count, n = Y.shape
    if D < 1 or D > n:
        raise ValueError(f"D must lie in [1, {n}]")
    if count < D + 1:
        raise ValueError(f"need at least D + 1 = {D + 1} points, got {count}")
    center = Y.mean(axis=0)
    Yc = Y - center
    evals, evecs = np.linalg.eigh(Yc.T @ Yc / count)
    order = np.argsort(-evals, kind="stable")
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order]
    basis = _sign_fix(evecs[:, :D].T)
    tol = 1e-12 * max(1.0, float(evals[0]))
    degenerate = bool(np.count_nonzero(evals > tol) < D)
    residual = float(evals[D:].sum())
    return SubspaceFit(basis, center, D, residual, evals, degenerate)


def _rows(fit: SubspaceFit, P) -> np.ndarray:
    # a flat vector of the ambient length is one point, not a column of scalars
    if not hasattr(P, "points") and np.ndim(P) == 1 and np.size(P) == fit.ambient_dim:
        return np.asarray(P, dtype=float).reshape(1, -1)
    return as_points(P)


def project(fit: SubspaceFit, P) -> np.ndarray:
    """Basis coordinates of the orthogonal projection onto the affine subspace."""
    Y = _rows(fit, P)
    if Y.shape[1] != fit.ambient_dim:
        raise ValueError(f"dimension mismatch: {Y.shape[1]} vs {fit.ambient_dim}")
    return (Y - fit.center) @ fit.basis.T


def lift(fit: SubspaceFit, coords) -> np.ndarray:
    """Map basis coordinates back into the ambient space."""
    C = np.asarray(coords, dtype=float).reshape(-1, fit.D)
    return fit.center + C @ fit.basis


def distance_to_subspace(fit: SubspaceFit, P) -> np.ndarray:
    Y = _rows(fit, P)
    return np.linalg.norm(Y - lift(fit, project(fit, Y)), axis=1)


def truncation_radius(sigma: float, n: int, N0: int, alpha: float, C: float = 2.0) -> float:
    """R = C sigma sqrt(n) + C sigma sqrt(log(C N0 / alpha))."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    return C * sigma * math.sqrt(n) + C * sigma * math.sqrt(math.log(C * N0 / alpha))


def gaussian_tail_mass(R: float, sigma: float, n: int) -> float:
    """P(|Z| > R) for Z ~ N(0, sigma^2 I_n)."""
    if sigma == 0:
        return 0.0
    return float(chi2.sf((R / sigma) ** 2, n))


def tail_budget(alpha: float, N0: int) -> float:
    """1 - (1 - alpha/2)^(1/N0), computed without cancellation."""
    return -math.expm1(math.log1p(-alpha / 2) / N0)


def eps_emp(R: float, D: int, N0: int, alpha: float) -> float:
    if not 0 < alpha < 4:
        raise ValueError("alpha must lie in (0, 4)")
    return 2 * (R + 1) ** 2 * ((math.sqrt(D) + 2) / math.sqrt(N0)) * (1 + math.sqrt(2 * math.log(4 / alpha)))


def pca_bias_bound(inputs: PcaBoundInputs | None = None, *, eps0: float | None = None,
                   eps_empirical: float | None = None, d: int | None = None, C: float | None = None) -> float:
    """C d (4 eps0^2 + 2 eps_emp)^(1/(d+2)).

    Either pass a PcaBoundInputs, or the three ingredients directly by keyword.
    """
    if inputs is not None:
        eps0 = inputs.eps0 if eps0 is None else eps0
        eps_empirical = inputs.empirical_eps() if eps_empirical is None else eps_empirical
        d = inputs.d if d is None else d
        C = inputs.C_bias if C is None else C
    if C is None:
        C = 1.0
    if eps0 is None or eps_empirical is None or d is None:
        raise ValueError("need eps0, eps_empirical and d")
    if eps0 < 0 or eps_empirical < 0:
        raise ValueError("eps0 and eps_emp must be non-negative")
    return C * d * (4 * eps0 ** 2 + 2 * eps_empirical) ** (1.0 / (d + 2))
