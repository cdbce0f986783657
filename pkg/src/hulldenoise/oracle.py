"""Distance-to-manifold oracle for hyperplanes, built from noisy-sample tail fractions.

For a unit normal b the oracle bins the projections <Y, b> of the oracle block
into cells (j delta, (j+1) delta], starting from the top cell that holds the
largest projection. It walks downward until the empirical density of the
current cell reaches the threshold Gamma_delta. A cell at height j delta whose
density is Gamma_delta sits about r_delta beyond the manifold, so the support
value in direction b is estimated as j delta - r_delta.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import InfeasibleSampleDemand, NoOracleSamples, OracleSaturated
from .geometry import Hyperplane, as_points
from .numeric import snap_ceil, unit_ball_volume

SQRT_2PI = math.sqrt(2 * math.pi)


@dataclass(frozen=True)
class OracleParams:
    sigma: float
    delta: float
    d: int
    c_M: float
    kappa0: float
    kappa1: float
    r_delta: float
    Gamma_delta: float
    log_Gamma_delta: float
    log_kappa_ratio: float

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def derive_params(sigma: float, delta: float, d: int, c_M: float) -> OracleParams:
    if sigma <= 0 or delta <= 0:
        raise ValueError("sigma and delta must be positive")
    if d < 1:
        raise ValueError("d must be a positive integer")
    if not 0 < c_M <= math.exp(-1):
        raise ValueError("c_M must lie in (0, 1/e]")
    omega = unit_ball_volume(d)
    kappa0 = SQRT_2PI * sigma
    kappa1 = (1.0 / c_M) / (delta ** d * omega) * SQRT_2PI * sigma
    log_ratio = math.log(1.0 / c_M) - d * math.log(delta) - math.log(omega)
    if log_ratio < 0:
        raise ValueError("delta too large for mass constant: kappa1 < kappa0")
    direct = math.log(kappa1 / kappa0)
    if abs(direct - log_ratio) > 1e-12 * max(1.0, abs(log_ratio)):
        raise ArithmeticError(f"log(kappa1/kappa0) forms disagree: {direct!r} vs {log_ratio!r}")
    r_delta = sigma ** 2 / delta * log_ratio
    log_gamma = -r_delta ** 2 / (2 * sigma ** 2) - math.log(kappa1)
    return OracleParams(sigma, delta, d, c_M, kappa0, kappa1, r_delta,
                        math.exp(log_gamma), log_gamma, log_ratio)


@dataclass
class OracleQuery:
    """Outcome of one scan: the raw and clamped distance and the cell it stopped at."""

    output: float
    raw: float
    support: float
    j_final: int
    Gamma_est: float
    clamped: bool

    def record(self, b, t) -> dict:
        return {"b": [float(v) for v in np.ravel(b)], "t": float(t), "j_final": self.j_final,
                "Gamma_est": self.Gamma_est, "output": self.output}


def _cell_index(p: np.ndarray, delta: float) -> np.ndarray:
    """k with k*delta < p <= (k+1)*delta, exact against the same float products the tail counts use."""
    k = np.ceil(p / delta) - 1
    k -= (p <= k * delta)
    k += (p > (k + 1) * delta)
    return k.astype(np.int64)


def scan_support(proj: np.ndarray, params: OracleParams) -> tuple[int, float]:
    """Run the downward scan over the projections along one normal.

    Returns (j_final, Gamma_est at j_final).
    """
    n = proj.size
    if n == 0:
        raise NoOracleSamples("no oracle samples")
    delta = params.delta
    pmax, pmin = float(proj.max()), float(proj.min())
    j = math.floor(pmax / delta)
    while j * delta > pmax:
        j -= 1
    cells = _cell_index(proj, delta)
    lo = int(cells.min())
    counts = np.bincount(cells - lo)
    log_norm = math.log(n * delta)
    while True:
        # F_{j delta} - F_{(j+1) delta} is the count of the cell (j delta, (j+1) delta]
        c = int(counts[j - lo]) if 0 <= j - lo < counts.size else 0
        if c > 0 and math.log(c) - log_norm >= params.log_Gamma_delta:
            return j, c / (n * delta)
        if j * delta < pmin:
            raise OracleSaturated("oracle saturated: hyperplane too close or too few samples")
        j -= 1


def _query(b: np.ndarray, t: float, pts: np.ndarray, params: OracleParams) -> OracleQuery:
    j, gamma_est = scan_support(pts @ b, params)
    support = j * params.delta - params.r_delta
    raw = t - support
    return OracleQuery(max(raw, 0.0), raw, support, j, gamma_est, raw < 0)


def dist_to_hull_detailed(H: Hyperplane, P, params: OracleParams,
                          query_log: "QueryLog | None" = None) -> OracleQuery:
    pts = as_points(P)
    if pts.shape[0] == 0:
        raise NoOracleSamples("no oracle samples")
    if pts.shape[1] != H.dim:
        raise ValueError(f"dimension mismatch: {pts.shape[1]} vs {H.dim}")
    query = _query(H.normal, H.offset, pts, params)
    if query_log is not None:
        query_log.write(H.normal, H.offset, query)
    return query


def dist_to_hull(H: Hyperplane, P, params: OracleParams) -> float:
    """Estimated distance from H to the manifold, which must lie on the <x, b> <= t side.

    Negative raw outputs are clamped to 0; use dist_to_hull_detailed for the flag.
    """
    return dist_to_hull_detailed(H, P, params).output


def estimate_support(b, P, params: OracleParams) -> float:
    """Estimated max over the manifold of <x, b>."""
    pts = as_points(P)
    if pts.shape[0] == 0:
        raise NoOracleSamples("no oracle samples")
    b = np.asarray(b, dtype=float).reshape(-1)
    j, _ = scan_support(pts @ b, params)
    return j * params.delta - params.r_delta


class QueryLog:
    """Append-only JSON-lines log of oracle queries."""

    def __init__(self, path: str):
        self.path = path
        self._fh = open(path, "w")

    def write(self, b, t, query: OracleQuery) -> None:
        self._fh.write(json.dumps(query.record(b, t), sort_keys=True) + "\n")

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class StatisticalSupport:
    """Support-function provider backed by the oracle scan on a fixed block.

    `support` returns (values, failed) where failed marks saturated directions.
    """

    exact = False

    def __init__(self, P, params: OracleParams, threads: int = 1):
        self.points = as_points(P)
        if self.points.shape[0] == 0:
            raise NoOracleSamples("no oracle samples")
        self.params = params
        self.threads = max(1, int(threads))

    def _one(self, b: np.ndarray) -> tuple[float, bool]:
        try:
            j, _ = scan_support(self.points @ b, self.params)
        except OracleSaturated:
            return math.nan, True
        return j * self.params.delta - self.params.r_delta, False

    def support(self, directions) -> tuple[np.ndarray, np.ndarray]:
        dirs = np.atleast_2d(np.asarray(directions, dtype=float))
        if self.threads > 1:
            with ThreadPoolExecutor(self.threads) as pool:
                results = list(pool.map(self._one, dirs))
        else:
            results = [self._one(b) for b in dirs]
        values = np.array([r[0] for r in results])
        failed = np.array([r[1] for r in results], dtype=bool)
        return values, failed


@dataclass(frozen=True)
class SamplePlan:
    n: int
    log_n: float
    refined: int | None
    A: float
    C_d: float

    def __int__(self) -> int:
        return self.n


def plan_samples(params, eta: float, A: float = 1.0, C_d: float = 1.0, cap: float = 1e15,
                 gamma_estimate: float | None = None, C_refined: float = 1.0) -> SamplePlan:
    """ceil(A exp(C_d (sigma/delta)^2 log(1/c_M)) log(1/eta)), up to polylog factors.

    With a Gamma estimate also returns C Gamma^-1 log(1/eta) log(1/(Gamma kappa0)).
    """
    if not 0 < eta < 1:
        raise ValueError("eta must lie in (0, 1)")
    if A <= 0 or C_d <= 0:
        raise ValueError("A and C_d must be positive")
    log_n = (math.log(A) + C_d * (params.sigma / params.delta) ** 2 * math.log(1.0 / params.c_M)
             + math.log(math.log(1.0 / eta)))
    # past e^700 the count is not representable, whatever the cap
    if log_n > min(math.log(cap), 700.0):
        demand = math.exp(log_n) if log_n < 700 else math.inf
        raise InfeasibleSampleDemand(f"infeasible sample demand: about e^{log_n:.1f} samples exceeds cap {cap:g}",
                                     demand, log_n)
    n = snap_ceil(math.exp(log_n))
    refined = None
    if gamma_estimate is not None:
        if not 0 < gamma_estimate * params.kappa0 < 1:
            raise ValueError("refined plan needs 0 < Gamma kappa0 < 1")
        refined = math.ceil(C_refined / gamma_estimate * math.log(1.0 / eta)
                            * math.log(1.0 / (gamma_estimate * params.kappa0)))
    return SamplePlan(max(1, n), log_n, refined, A, C_d)


def gap_bound(Gamma: float, params: OracleParams) -> tuple[float, bool]:
    """Width of the two-sided distance envelope, and whether the 2 delta condition holds."""
    if Gamma <= 0 or Gamma * params.kappa1 >= 1:
        raise ValueError("gap_bound needs 0 < Gamma kappa1 < 1")
    s2 = 2 * params.sigma ** 2
    upper = math.sqrt(s2 * math.log(1.0 / (Gamma * params.kappa0)))
    inner = math.log(1.0 / (Gamma * params.kappa1))
    lower = -params.delta + math.sqrt(s2 * inner)
    condition = params.sigma * params.log_kappa_ratio <= params.delta * math.sqrt(2 * inner)
    return upper - lower, condition


def distance_envelope(Gamma: float | None, params: OracleParams, log_Gamma: float | None = None) -> tuple[float, float]:
    """Lower and upper bounds on dist(H, M) implied by Gamma(H).

    Pass log_Gamma instead of Gamma when Gamma may underflow. The lower bound
    degenerates to -delta when Gamma kappa1 >= 1.
    """
    if log_Gamma is None:
        if Gamma is None or Gamma <= 0:
            return -params.delta, math.inf
        log_Gamma = math.log(Gamma)
    if log_Gamma == -math.inf:
        return -params.delta, math.inf
    s2 = 2 * params.sigma ** 2
    lo = -params.delta + math.sqrt(s2 * max(0.0, -log_Gamma - math.log(params.kappa1)))
    hi = math.sqrt(s2 * max(0.0, -log_Gamma - math.log(params.kappa0)))
    return lo, hi


def gamma_of_hyperplane(b, t: float, points, weights, sigma: float) -> float:
    """Quadrature of the Gaussian density of the signed distance to H over the manifold measure."""
    pts = as_points(points)
    u = t - pts @ np.asarray(b, dtype=float).reshape(-1)
    w = np.asarray(weights, dtype=float)
    return float(np.sum(w * np.exp(-u ** 2 / (2 * sigma ** 2))) / (SQRT_2PI * sigma))


def log_gamma_of_hyperplane(b, t: float, points, weights, sigma: float) -> float:
    """log of gamma_of_hyperplane, evaluated without underflow."""
    pts = as_points(points)
    u = t - pts @ np.asarray(b, dtype=float).reshape(-1)
    w = np.asarray(weights, dtype=float)
    return float(logsumexp(-u ** 2 / (2 * sigma ** 2), b=w)) - math.log(SQRT_2PI * sigma)
