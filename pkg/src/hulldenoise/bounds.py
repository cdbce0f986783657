"""Closed-form theoretical quantities: covering numbers, entropy integrals, risk bounds.

Every absolute constant is an explicit keyword argument with default 1, so
callers (and reports) always see which value was used.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np
from scipy.integrate import trapezoid

from .numeric import snap_ceil, unit_ball_volume


def hull_covering_exponent_bound(eps: float, manifold_covering: float) -> float:
    """log of N(eps/2, M)^ceil(8/eps^2), the covering bound for conv(M)."""
    if not 0 < eps <= 2:
        raise ValueError("eps must lie in (0, 2]")
    if manifold_covering < 1:
        raise ValueError("covering number must be >= 1")
    return snap_ceil(8.0 / eps ** 2) * math.log(manifold_covering)


def manifold_covering_bound(eps: float, tau: float, V: float, d: int) -> float:
    """V / (omega_d eps^d), with eps frozen at tau/4 beyond that scale."""
    if tau <= 0 or V <= 0 or eps <= 0:
        raise ValueError("eps, tau and V must be positive")
    scale = min(eps, tau / 4)
    return V / (unit_ball_volume(d) * scale ** d)


def dudley_log_argument(D: int, d: int, sigma: float, c_M: float) -> float:
    """log((2D)^d / (c_M sigma^d omega_d))."""
    return d * math.log(2 * D) - math.log(c_M) - d * math.log(sigma) - math.log(unit_ball_volume(d))


def dudley_J(D: int, d: int, sigma: float, c_M: float, C: float = 1.0, C_inner: float | None = None) -> float:
    """Entropy bound J for the Gaussian width of the projected hull.

    The outer and inner absolute constants share one value unless C_inner is given.
    """
    if not 0 < sigma <= 1:
        raise ValueError("sigma must lie in (0, 1]")
    if D < 1 or d < 1 or c_M <= 0:
        raise ValueError("D, d and c_M must be positive")
    C_inner = C if C_inner is None else C_inner
    log_arg = dudley_log_argument(D, d, sigma, c_M)
    if log_arg <= 0:
        raise ValueError("parameter incompatibility: log argument of J is <= 1")
    bracket = 4.0 / sigma * math.log(2 * D / sigma) + C_inner / sigma
    return C * (1 / math.sqrt(D) + math.sqrt(log_arg) * bracket)


EntropyCurve = Callable[[np.ndarray], np.ndarray]


def truncated_dudley(entropy, eta_cutoff: float, diam: float, points: int = 1024) -> float:
    """eta + 12 * integral over [eta/4, diam] of sqrt(log N(eps)).

    `entropy` is either a callable eps -> log N(eps) or a pair (eps_table, logN_table)
    of a non-increasing curve, interpolated in log eps.
    """
    if eta_cutoff < 0 or diam <= 0:
        raise ValueError("need eta >= 0 and diam > 0")
    lo = eta_cutoff / 4
    if lo >= diam:
        return float(eta_cutoff)
    if lo == 0:
        raise ValueError("eta must be positive for a log grid")
    grid = np.geomspace(lo, diam, points)
    if callable(entropy):
        logn = np.asarray(entropy(grid), dtype=float) * np.ones_like(grid)
    else:
        eps_tab, logn_tab = (np.asarray(v, dtype=float) for v in entropy)
        order = np.argsort(eps_tab)
        logn = np.interp(np.log(grid), np.log(eps_tab[order]), logn_tab[order])
    integrand = np.sqrt(np.clip(logn, 0.0, None))
    return float(eta_cutoff + 12 * trapezoid(integrand, grid))


def chatterjee_tail(gamma: float, J: float, sigma: float = 1.0) -> tuple[float, float]:
    """Deviation threshold sigma(sqrt(J) + gamma J^(1/4)) and its probability bound."""
    if gamma < 0 or J <= 0:
        raise ValueError("need gamma >= 0 and J > 0")
    q = J ** 0.25
    threshold = sigma * (math.sqrt(J) + gamma * q)
    prob = 3 * math.exp(-gamma ** 4 / (32 * (1 + gamma / q) ** 2))
    return threshold, prob


@dataclass(frozen=True)
class ErrorBudget:
    pca_bias: float
    statistical_risk: float
    algorithmic: float
    total: float

    def to_dict(self) -> dict:
        return asdict(self)


def main_theorem_budget(pca_term: float, risk_term: float, algo_eps: float) -> ErrorBudget:
    if min(pca_term, risk_term, algo_eps) < 0:
        raise ValueError("budget terms must be non-negative")
    return ErrorBudget(pca_term, risk_term, algo_eps, pca_term + risk_term + algo_eps)


def noise_reduction_ratio(n: int, D: int, d: int, sigma: float, gamma: float, J: float) -> float:
    """(sqrt(J) + gamma J^(1/4)) / sqrt(n); D, d and sigma enter only through J."""
    if n <= 0 or J <= 0 or gamma < 0:
        raise ValueError("need n > 0, J > 0, gamma >= 0")
    return (math.sqrt(J) + gamma * J ** 0.25) / math.sqrt(n)
