"""Projection onto the hull by exhaustive search over a sphere net, and the full pipeline.

For a target y and a direction w, f(w) = -<y, w> - s(-w) is the signed distance
from y to the supporting hyperplane of K with outward normal -w. Its maximum
over the unit sphere is dist(y, K), attained at the direction pointing from y to
its projection. The search evaluates f on every net direction; since s(-w)
does not depend on y, the support values are computed once per net and reused
for every target.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import bounds, pca
from .datagen import Dataset
from .errors import OracleSaturated, StageError
from .geometry import DEFAULT_NET_CAP, SphereNet, build_sphere_net
from .hull import HullOracle
from .oracle import OracleParams, StatisticalSupport, derive_params, plan_samples

log = logging.getLogger(__name__)


class ExactSupport:
    """Support-function provider backed by the exact hull oracle."""

    exact = True

    def __init__(self, V):
        self.hull = V if isinstance(V, HullOracle) else HullOracle(V)

    def support(self, directions) -> tuple[np.ndarray, np.ndarray]:
        vals = self.hull.support(directions)
        return vals, np.zeros(vals.shape, dtype=bool)


def f_omega(y, omega, support) -> float:
    """-<y, omega> - s(-omega) for one direction."""
    y = np.asarray(y, dtype=float).reshape(-1)
    omega = np.asarray(omega, dtype=float).reshape(-1)
    vals, failed = support.support(-omega[None, :])
    if failed[0]:
        raise OracleSaturated("support estimate failed for this direction")
    return float(-y @ omega - vals[0])


@dataclass
class ProjectionResult:
    x_hat: np.ndarray
    v0: np.ndarray
    lambda0: float
    inside: bool
    index: int
    f_values: np.ndarray | None = None


class SupportTable:
    """s(-w) for every net direction w, computed once from a provider."""

    def __init__(self, net: SphereNet, support, failure_tolerance: float = 0.01):
        self.net = net
        vals, failed = support.support(-net.directions)
        self.failed = failed
        frac = failed.mean() if failed.size else 0.0
        if frac > failure_tolerance:
            raise OracleSaturated(
                f"{failed.sum()} of {failed.size} net directions failed ({frac:.1%} > {failure_tolerance:.1%})")
        if failed.any():
            log.warning("excluding %d saturated net directions", int(failed.sum()))
        # failed directions can never win the argmax
        self.neg_support = np.where(failed, np.inf, vals)

    def f_values(self, Y) -> np.ndarray:
        return -np.atleast_2d(Y) @ self.net.directions.T - self.neg_support

    def project(self, Y, keep_f: bool = False, chunk: int | None = None, threads: int = 1):
        """Net-search projection of each row of Y. Returns a list of ProjectionResult.

        By default rows are processed in chunks whose score matrix stays near 2**24 entries.
        """
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        if chunk is None:
            chunk = max(1, min(2048, (1 << 24) // max(1, len(self.net))))

        def run(a: int):
            F = self.f_values(Y[a:a + chunk])
            idx = np.argmax(F, axis=1)  # first maximum, i.e. lowest net index on ties
            best = F[np.arange(F.shape[0]), idx]
            out = []
            for r in range(F.shape[0]):
                lam = max(0.0, float(best[r]))
                v0 = self.net.directions[idx[r]]
                y = Y[a + r]
                x_hat = y + lam * v0 if lam > 0 else y.copy()
                out.append(ProjectionResult(x_hat, v0.copy(), lam, lam == 0.0, int(idx[r]),
                                            F[r].copy() if keep_f else None))
            return out

        starts = range(0, Y.shape[0], chunk)
        if threads > 1:
            with ThreadPoolExecutor(threads) as pool:
                parts = list(pool.map(run, starts))
        else:
            parts = [run(a) for a in starts]
        return [r for part in parts for r in part]


def proj_K(y_tilde, P, params: OracleParams, net: SphereNet, keep_f: bool = False,
           failure_tolerance: float = 0.01) -> ProjectionResult:
    """Approximate projection of y_tilde onto the hull, with support values estimated from P."""
    return proj_K_with(y_tilde, StatisticalSupport(P, params), net, keep_f, failure_tolerance)


def proj_K_with(y_tilde, support, net: SphereNet, keep_f: bool = False,
                failure_tolerance: float = 0.01) -> ProjectionResult:
    table = SupportTable(net, support, failure_tolerance)
    return table.project(np.asarray(y_tilde, dtype=float).reshape(1, -1), keep_f=keep_f)[0]


def direction_error_bound(delta: float, d_star: float) -> float:
    """sqrt(2 delta / d*), the angular error of a delta-optimal direction."""
    if d_star <= 0:
        raise ValueError("d_star must be positive")
    if delta < 0:
        raise ValueError("delta must be non-negative")
    return math.sqrt(2 * delta / d_star)


def delta_from_eps(eps: float, sigma: float, D: int, d_star: float | None = None) -> float:
    """Oracle accuracy eps^2 / (16 d*) with d* defaulting to sigma sqrt(D)."""
    d_star = sigma * math.sqrt(D) if d_star is None else d_star
    if d_star <= 0:
        raise ValueError("need sigma > 0 (or an explicit d_star) to derive delta from eps")
    return eps ** 2 / (16 * d_star)


@dataclass
class DenoiseConfig:
    eps0: float = 0.5
    eps: float = 0.1
    alpha: float = 0.05
    eta: float = 0.1
    delta: float | None = None
    D: int | None = None
    d: int = 1
    c_M: float = 0.15
    provider: str = "statistical"
    mesh: float | None = None
    net_constant: float = 1.0
    d_star: float | None = None
    C_radius: float = 2.0
    C_bias: float = 1.0
    C_J: float = 1.0
    gamma: float = 3.0
    A: float = 1.0
    C_d: float = 1.0
    failure_tolerance: float = 0.01
    net_cap: int = DEFAULT_NET_CAP
    threads: int = 1
    measure_exact: bool = True

    def __post_init__(self):
        if self.provider not in ("statistical", "exact"):
            raise ValueError("provider must be 'statistical' or 'exact'")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class DenoiseReport:
    config: dict
    D: int
    delta: float
    mesh: float
    net_size: int
    failed_directions: int
    x_hat: np.ndarray
    x_hat_reduced: np.ndarray
    v0: np.ndarray
    lambda0: np.ndarray
    inside: np.ndarray
    target_index: np.ndarray
    budget: dict
    constants: dict
    measured: dict
    timings: dict
    err_vs_clean: np.ndarray | None = None
    err_noisy: np.ndarray | None = None
    exact_reduced: np.ndarray | None = None
    oracle_params: dict | None = None
    sample_plan: dict | None = None
    notes: list = field(default_factory=list)

    @property
    def reduction_ratio(self) -> float | None:
        # undefined without noise to reduce
        if self.err_vs_clean is None or not self.err_noisy.mean() > 0:
            return None
        return float(self.err_vs_clean.mean() / self.err_noisy.mean())

    def summary(self) -> dict:
        out = {"targets": int(self.x_hat.shape[0]), "inside_fraction": float(self.inside.mean()),
               "mean_lambda0": float(self.lambda0.mean())}
        if self.err_vs_clean is not None:
            out.update(mean_err_denoised=float(self.err_vs_clean.mean()),
                       mean_err_noisy=float(self.err_noisy.mean()),
                       reduction_ratio=self.reduction_ratio)
        return out

    def to_json_dict(self, records_path: str | None = None) -> dict:
        return {"config": self.config, "D": self.D, "delta": self.delta, "mesh": self.mesh,
                "net_size": self.net_size, "failed_directions": self.failed_directions,
                "budget": self.budget, "constants": self.constants, "measured": self.measured,
                "timings": self.timings, "summary": self.summary(), "records_path": records_path,
                "oracle_params": self.oracle_params, "sample_plan": self.sample_plan,
                "notes": self.notes}

    def write(self, directory: str) -> None:
        os.makedirs(directory, exist_ok=True)
        with open(os.path.join(directory, "points.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            n, D = self.x_hat.shape[1], self.v0.shape[1]
            w.writerow(["index"] + [f"x_hat{i}" for i in range(n)] + ["lambda0"]
                       + [f"v0_{i}" for i in range(D)] + ["err_vs_clean"])
            for r in range(self.x_hat.shape[0]):
                err = "" if self.err_vs_clean is None else repr(float(self.err_vs_clean[r]))
                w.writerow([int(self.target_index[r])] + [repr(float(v)) for v in self.x_hat[r]]
                           + [repr(float(self.lambda0[r]))] + [repr(float(v)) for v in self.v0[r]] + [err])
        with open(os.path.join(directory, "budget.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["term", "bound", "measured"])
            for term in ("pca_bias", "statistical_risk", "algorithmic", "total"):
                bound = self.budget.get(term)
                meas = self.measured.get(term)
                w.writerow([term, "" if bound is None else repr(bound), "" if meas is None else repr(meas)])
        with open(os.path.join(directory, "report.json"), "w") as fh:
            json.dump(self.to_json_dict("points.csv"), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _budget(dataset: Dataset, cfg: DenoiseConfig, D: int, notes: list) -> tuple[dict, dict]:
    n = dataset.ambient_dim
    n0 = dataset.partition[0]
    sigma = dataset.sigma
    constants = {"C_radius": cfg.C_radius, "C_bias": cfg.C_bias, "C_J": cfg.C_J,
                 "gamma": cfg.gamma, "A": cfg.A, "C_d": cfg.C_d, "net_constant": cfg.net_constant}
    inputs = pca.PcaBoundInputs(cfg.eps0, cfg.alpha, sigma, n, n0, cfg.d, cfg.c_M, D,
                                cfg.C_radius, cfg.C_bias)
    pca_term = pca.pca_bias_bound(inputs)
    constants["R"] = inputs.radius()
    constants["eps_emp"] = inputs.empirical_eps()
    risk = 0.0
    if sigma > 0:
        try:
            J = bounds.dudley_J(D, cfg.d, min(sigma, 1.0), cfg.c_M, cfg.C_J)
            constants["J"] = J
            risk = bounds.chatterjee_tail(cfg.gamma, J, sigma)[0]
        except ValueError as exc:
            notes.append(f"statistical risk term unavailable: {exc}")
            risk = math.nan
    b = bounds.main_theorem_budget(pca_term, 0.0 if math.isnan(risk) else risk, cfg.eps)
    budget = b.to_dict()
    if math.isnan(risk):
        budget["statistical_risk"] = None
        budget["total"] = None
    return budget, constants


def denoise(dataset: Dataset, config: DenoiseConfig | None = None) -> DenoiseReport:
    """Fit the subspace on block 1, estimate support from block 2, project block 3."""
    cfg = config or DenoiseConfig()
    timings = {}
    notes = []
    n = dataset.ambient_dim
    sigma = dataset.sigma
    clean_pca, noisy_pca = dataset.block("pca")
    clean_orc, noisy_orc = dataset.block("oracle")
    clean_tgt, noisy_tgt = dataset.block("target")

    t0 = time.perf_counter()
    try:
        D = cfg.D if cfg.D is not None else pca.choose_reduced_dim(n, cfg.d, cfg.c_M, cfg.eps0)
        D = min(D, n)
        fit = pca.fit_subspace(noisy_pca, D)
        if fit.degenerate:
            notes.append("fitting block has rank below D; basis completed arbitrarily")
        y_orc = pca.project(fit, noisy_orc)
        y_tgt = pca.project(fit, noisy_tgt)
    except ValueError as exc:
        raise StageError("pca", str(exc)) from exc
    timings["pca"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    params = None
    plan = None
    try:
        if cfg.delta is not None:
            delta = cfg.delta
        else:
            delta = delta_from_eps(cfg.eps, sigma, D, cfg.d_star)
        mesh = cfg.mesh if cfg.mesh is not None else min(2.0, cfg.net_constant * delta)
        net = build_sphere_net(D, mesh, int(cfg.net_cap))
        if cfg.provider == "exact":
            hull_pts = pca.project(fit, dataset.clean.points)
            support = ExactSupport(hull_pts)
        else:
            if y_orc.shape[0] == 0:
                raise StageError("oracle", "missing oracle block")
            params = derive_params(sigma, delta, cfg.d, cfg.c_M)
            try:
                p = plan_samples(params, cfg.eta, cfg.A, cfg.C_d)
                plan = {"n": p.n, "log_n": p.log_n, "A": p.A, "C_d": p.C_d}
                if p.n > y_orc.shape[0]:
                    notes.append(f"oracle block has {y_orc.shape[0]} samples; planner asks for {p.n}")
            except Exception as exc:  # the plan is advisory here
                plan = {"n": None, "log_n": None, "A": cfg.A, "C_d": cfg.C_d}
                notes.append(str(exc))
            support = StatisticalSupport(y_orc, params, cfg.threads)
        table = SupportTable(net, support, cfg.failure_tolerance)
    except (OracleSaturated, ValueError) as exc:
        raise StageError("oracle", str(exc)) from exc
    timings["support_table"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    results = table.project(y_tgt, threads=cfg.threads)
    timings["net_search"] = time.perf_counter() - t0

    x_red = np.array([r.x_hat for r in results]).reshape(-1, D)
    x_hat = pca.lift(fit, x_red)
    v0 = np.array([r.v0 for r in results]).reshape(-1, D)
    lam = np.array([r.lambda0 for r in results])
    inside = np.array([r.inside for r in results], dtype=bool)

    budget, constants = _budget(dataset, cfg, D, notes)
    measured = {}
    err = err_noisy = exact_red = None
    if clean_tgt.size:
        err = np.linalg.norm(x_hat - clean_tgt, axis=1)
        err_noisy = np.linalg.norm(noisy_tgt - clean_tgt, axis=1)
        measured["total"] = float(err.mean())
        measured["pca_bias"] = float(pca.distance_to_subspace(fit, clean_tgt).mean())
        if cfg.measure_exact:
            t0 = time.perf_counter()
            oracle = support.hull if cfg.provider == "exact" else HullOracle(pca.project(fit, dataset.clean.points))
            exact_red, _ = oracle.project_many(y_tgt)
            measured["statistical_risk"] = float(np.linalg.norm(exact_red - pca.project(fit, clean_tgt), axis=1).mean())
            measured["algorithmic"] = float(np.linalg.norm(x_red - exact_red, axis=1).mean())
            timings["exact_reference"] = time.perf_counter() - t0

    n1 = dataset.partition[1]
    return DenoiseReport(cfg.to_dict(), D, float(delta), float(mesh), len(net), int(table.failed.sum()),
                         x_hat, x_red, v0, lam, inside, np.arange(n1, n1 + x_hat.shape[0]),
                         budget, constants, measured, timings, err, err_noisy, exact_red,
                         None if params is None else params.to_dict(), plan, notes)
