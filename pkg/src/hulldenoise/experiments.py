"""Experiment drivers behind the CLI: hypocycloid study, oracle evaluation, cryo-EM run, bound tables."""
from __future__ import annotations

import logging

import numpy as np

from . import bounds, pca
from .cryoem import default_density, image_dataset, radial_density
from .datagen import Dataset, ManifoldSpec, child_seed, hypocycloid_points, lower_mass_constant
from .errors import OracleSaturated
from .geometry import Hyperplane
from .hull import HullOracle
from .oracle import (derive_params, distance_envelope, dist_to_hull_detailed,
                     gap_bound, log_gamma_of_hyperplane, plan_samples)
from .projection import DenoiseConfig, delta_from_eps, denoise

log = logging.getLogger(__name__)

SOURCE_FRACTION = {"cusp": 0.0, "near-cusp": 0.1, "mid-arc": 0.5}


class Polygon:
    """Closed polygon with an arc-length coordinate along its boundary, starting at vertex 0."""

    def __init__(self, vertices):
        self.vertices = np.asarray(vertices, dtype=float)
        nxt = np.roll(self.vertices, -1, axis=0)
        self.edges = nxt - self.vertices
        self.lengths = np.linalg.norm(self.edges, axis=1)
        self.offsets = np.concatenate([[0.0], np.cumsum(self.lengths)[:-1]])
        self.perimeter = float(self.lengths.sum())

    def arc_coordinate(self, pts) -> np.ndarray:
        """Arc-length position of the boundary point nearest to each row."""
        pts = np.atleast_2d(pts)
        rel = pts[:, None, :] - self.vertices[None, :, :]
        u = np.clip(np.sum(rel * self.edges[None], axis=2) / self.lengths ** 2, 0.0, 1.0)
        foot = self.vertices[None] + u[..., None] * self.edges[None]
        edge = np.argmin(np.sum((pts[:, None, :] - foot) ** 2, axis=2), axis=1)
        s = self.offsets[edge] + u[np.arange(pts.shape[0]), edge] * self.lengths[edge]
        return np.mod(s, self.perimeter)

    def circular_gap(self, s, s0: float) -> np.ndarray:
        g = np.abs(np.asarray(s) - s0) % self.perimeter
        return np.minimum(g, self.perimeter - g)


def hypocycloid_source(source: str, a: float = 1.0, n_cusps: int = 5) -> np.ndarray:
    t = SOURCE_FRACTION[source] * 2 * np.pi / n_cusps
    return hypocycloid_points([t], a, n_cusps)[0]


def hypocycloid_study(source: str = "cusp", sigmas=(0.3, 0.5, 1.0, 10.0), count: int = 10000,
                      bins: int = 720, a: float = 1.0, n_cusps: int = 5, vertex_window: float = 0.1,
                      seed: int = 0) -> list[dict]:
    """Project noisy copies of one curve point onto the cusp polygon; histogram where they land.

    The hull of the hypocycloid is the polygon on its cusps. Projections are binned
    by arc length along the polygon boundary; points inside the hull project to
    themselves and are counted separately.
    """
    if source not in SOURCE_FRACTION:
        raise ValueError(f"unknown source {source!r}")
    cusps = hypocycloid_points(2 * np.pi * np.arange(n_cusps) / n_cusps, a, n_cusps)
    poly = Polygon(cusps)
    hull = HullOracle(cusps)
    x0 = hypocycloid_source(source, a, n_cusps)
    out = []
    for sigma in sigmas:
        rng = np.random.default_rng(child_seed(seed, f"sigma={float(sigma)!r}"))
        Y = x0 + sigma * rng.standard_normal((count, 2))
        proj, dist = hull.project_many(Y)
        outside = dist > 0
        s = poly.arc_coordinate(proj[outside])
        hist, edges = np.histogram(s, bins=bins, range=(0.0, poly.perimeter))
        near = [int(np.sum(poly.circular_gap(s, off) <= vertex_window)) for off in poly.offsets]
        out.append({
            "sigma": float(sigma), "count": count, "inside": int(count - outside.sum()),
            "outside": int(outside.sum()), "bin_edges": edges, "histogram": hist,
            "vertex_counts": near, "vertex_fractions": [c / count for c in near],
            "source_fraction": near[0] / count, "modal_bin": int(np.argmax(hist)),
            "perimeter": poly.perimeter,
        })
    return out


def manifold_of(dataset: Dataset) -> ManifoldSpec:
    info = {k: v for k, v in dataset.manifold.items() if k in ("kind", "ambient_dim", "a", "n_cusps", "radius")}
    if "kind" not in info:
        raise ValueError("dataset has no manifold description; exact distances need one")
    return ManifoldSpec(**info)


def random_hyperplanes(dim: int, count: int, grid: np.ndarray, max_distance: float, seed: int):
    """Seeded normals uniform on the sphere, offsets at uniform distance beyond the hull."""
    rng = np.random.default_rng(child_seed(seed, "hyperplanes"))
    normals = rng.standard_normal((count, dim))
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    support = np.max(normals @ grid.T, axis=1)
    return normals, support + rng.uniform(0.0, max_distance, count)


def oracle_eval(dataset: Dataset, deltas=(0.05,), queries: int = 50, max_distance: float = 1.0,
                d: int = 1, c_M: float = 0.15, grid: int = 4096, seed: int = 0,
                hyperplanes: tuple[np.ndarray, np.ndarray] | None = None) -> tuple[list[dict], dict]:
    """Compare oracle distance estimates with exact distances to the hull of a dense curve grid."""
    spec = manifold_of(dataset)
    grid_pts = spec.dense_grid(grid).points
    quad_pts, quad_w = spec.arc_quadrature()
    _, P = dataset.block("oracle")
    sigma = dataset.sigma
    if hyperplanes is None:
        normals, offsets = random_hyperplanes(dataset.ambient_dim, queries, grid_pts, max_distance, seed)
    else:
        normals, offsets = hyperplanes
    exact_support = np.max(normals @ grid_pts.T, axis=1)
    rows = []
    summary = {"sigma": sigma, "oracle_samples": int(P.shape[0]), "queries": int(len(offsets)),
               "grid": grid, "c_M": c_M, "d": d, "per_delta": []}
    for delta in deltas:
        params = derive_params(sigma, delta, d, c_M)
        errs, saturated, env_checked, env_ok = [], 0, 0, 0
        for i, (b, t) in enumerate(zip(normals, offsets)):
            exact = float(t - exact_support[i])
            row = {"delta": float(delta), "query": i, "t": float(t), "exact": exact}
            row.update({f"b{j}": float(v) for j, v in enumerate(b)})
            try:
                q = dist_to_hull_detailed(Hyperplane(b, float(t)), P, params)
                row.update(estimate=q.output, raw=q.raw, clamped=q.clamped, j_final=q.j_final,
                           Gamma_est=q.Gamma_est, error=abs(q.output - exact))
                errs.append(abs(q.output - exact))
            except OracleSaturated:
                saturated += 1
                row.update(estimate=None, raw=None, clamped=None, j_final=None, Gamma_est=None, error=None)
            log_gam = log_gamma_of_hyperplane(b, t, quad_pts, quad_w, sigma) if sigma > 0 else -np.inf
            lo, hi = distance_envelope(None, params, log_Gamma=log_gam)
            row.update(log_Gamma_quad=log_gam, envelope_lo=lo, envelope_hi=hi, contained=bool(lo <= exact <= hi))
            if exact >= sigma:
                env_checked += 1
                env_ok += row["contained"]
            rows.append(row)
        errs = np.array(errs)
        entry = {"delta": float(delta), "r_delta": params.r_delta, "log_Gamma_delta": params.log_Gamma_delta,
                 "answered": int(errs.size), "saturated": saturated,
                 "within_3delta": float(np.mean(errs <= 3 * delta)) if errs.size else 0.0,
                 "envelope_checked": env_checked,
                 "envelope_contained": float(env_ok / env_checked) if env_checked else None}
        if errs.size:
            q = np.quantile(errs, [0.1, 0.5, 0.9])
            entry.update(median_error=float(q[1]), error_q10=float(q[0]), error_q90=float(q[2]),
                         max_error=float(errs.max()))
        summary["per_delta"].append(entry)
    return rows, summary


def cryoem_run(k: int = 3, n_pix: int = 16, density: str = "default", count: int = 3000, n0: int = 500,
               n1: int = 1500, sigma_rel: float = 0.1, D: int = 3, mesh: float = 0.1, delta: float = 0.05,
               provider: str = "exact", c_M: float = 0.15, seed: int = 0, threads: int = 1):
    """Image manifold of a density under Haar rotations, then the full denoising pipeline."""
    f = default_density(k) if density == "default" else radial_density(k)
    ds = image_dataset(f, count, sigma_rel, n0, n1, seed, n_pix)
    notes = []
    spread = float(np.max(np.linalg.norm(ds.clean.points, axis=1)))
    degenerate = spread < 1e-9
    if degenerate:
        notes.append("degenerate manifold: every image coincides (single point)")
        log.warning(notes[-1])
    d = k * (k - 1) // 2
    cfg = DenoiseConfig(D=min(D, ds.ambient_dim), mesh=mesh, delta=delta, d=d, c_M=c_M,
                        provider=provider, threads=threads)
    report = denoise(ds, cfg)
    report.notes.extend(notes)
    clean = ds.clean.points
    probes = clean[: min(50, clean.shape[0])]
    radii = np.array([0.25, 0.5, 1.0]) * max(spread, 1e-12)
    c_emp = lower_mass_constant(clean, probes, radii, d) if not degenerate else None
    extra = {"k": k, "n_pix": n_pix, "density": density, "image_rms": ds.manifold["image_rms"],
             "scale": ds.manifold["scale"], "sigma": ds.sigma, "sigma_rel": sigma_rel,
             "c_M_empirical": c_emp, "c_M_radii": radii.tolist(), "degenerate": degenerate,
             "sobolev_seminorm": f.sobolev_seminorm_est, "l2_norm": f.l2_norm_est}
    return ds, report, extra


def bounds_report(n: int = 2, D: int | None = None, d: int = 1, sigma: float = 0.2, c_M: float = 0.15,
                  eps0: float = 0.5, eps: float = 0.1, alpha: float = 0.05, eta: float = 0.1,
                  delta: float = 0.05, N0: int = 5000, gamma: float = 3.0, tau: float = 0.25,
                  volume: float = 4.844, C_radius: float = 2.0, C_bias: float = 1.0, C_J: float = 1.0,
                  A: float = 1.0, C_d: float = 1.0) -> dict:
    """Every closed-form quantity for one parameter set, with the constants used."""
    inputs = pca.PcaBoundInputs(eps0, alpha, sigma, n, N0, d, c_M, D, C_radius, C_bias)
    D_used = inputs.reduced_dim() if D is None else D
    out = {"inputs": {"n": n, "D": D_used, "d": d, "sigma": sigma, "c_M": c_M, "eps0": eps0, "eps": eps,
                      "alpha": alpha, "eta": eta, "delta": delta, "N0": N0, "gamma": gamma, "tau": tau,
                      "volume": volume},
           "constants": {"C_radius": C_radius, "C_bias": C_bias, "C_J": C_J, "A": A, "C_d": C_d},
           "notes": []}
    res = {"D_choice": pca.choose_reduced_dim(n, d, c_M, eps0), "radius": inputs.radius(),
           "eps_emp": inputs.empirical_eps(), "pca_bias": pca.pca_bias_bound(inputs),
           "delta_from_eps": delta_from_eps(eps, sigma, D_used)}
    N_M = bounds.manifold_covering_bound(eps / 2, tau, volume, d)
    res["manifold_covering"] = N_M
    res["hull_covering_log"] = bounds.hull_covering_exponent_bound(eps, max(N_M, 1.0))
    params = derive_params(sigma, delta, d, c_M)
    res["oracle"] = params.to_dict()
    try:
        plan = plan_samples(params, eta, A, C_d)
        res["sample_plan"] = {"n": plan.n, "log_n": plan.log_n}
    except Exception as exc:  # infeasible demands are reported, not fatal
        res["sample_plan"] = {"n": None, "log_n": None}
        out["notes"].append(str(exc))
    try:
        J = bounds.dudley_J(D_used, d, sigma, c_M, C_J)
        thr, prob = bounds.chatterjee_tail(gamma, J, sigma)
        res.update(J=J, risk_threshold=thr, tail_probability=prob,
                   noise_reduction_ratio=bounds.noise_reduction_ratio(n, D_used, d, sigma, gamma, J))
        budget = bounds.main_theorem_budget(res["pca_bias"], thr, eps)
        res["budget"] = budget.to_dict()
    except ValueError as exc:
        out["notes"].append(str(exc))
        res.update(J=None, risk_threshold=None, tail_probability=None, noise_reduction_ratio=None, budget=None)
    gam = params.Gamma_delta
    lo, hi = distance_envelope(gam, params)
    res["envelope_at_Gamma_delta"] = {"lo": lo, "hi": hi}
    try:
        gap, cond = gap_bound(gam / 2, params)
        res["gap_at_half_Gamma_delta"] = {"gap": gap, "condition": cond}
    except ValueError as exc:
        out["notes"].append(str(exc))
    out["results"] = res
    return out

