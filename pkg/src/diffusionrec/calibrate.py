"""Fitting the degree-dependent hybridization curve.

Sweeping the global HHP parameter moves the mean degree of recommended
items; after min-max rescaling the (mean degree, lambda) relation is nearly
independent of list length and is fitted with a bi-exponential.  Applying
that curve to each item's own rescaled degree gives the per-item parameter
of the DCB scorer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .algorithms import AlgorithmSpec
from .diffusion import Propagator, recommend_all
from .fitting import FitResult, fit_double_exponential
from .graph import BipartiteGraph, build_graph

DEFAULT_LAMBDA_GRID = tuple(round(0.05 * i, 2) for i in range(21))
DEFAULT_L_SET = (10, 20, 30, 40, 50)
MIN_BUCKET_ITEMS = 20
MIN_BUCKETS = 5


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class SweepPoint:
    lam: float
    L: int
    mean_degree: float


@dataclass
class Rescaled:
    k_tilde: np.ndarray
    lam: np.ndarray
    L: np.ndarray
    k_min: float
    k_max: float


def sweep_mean_degree(g: BipartiteGraph, lambda_grid: Sequence[float] = DEFAULT_LAMBDA_GRID,
                      L_set: Sequence[int] = DEFAULT_L_SET, users: Sequence[int] | None = None,
                      workers: int = 1) -> list[SweepPoint]:
    """Mean training degree of recommended items for each (lambda, L).

    Lists are HHP top-L lists; the mean pools every entry of every user's
    list.  Points come back sorted by (L, lambda) whatever the grid order.
    """
    if not L_set:
        raise ValueError("L_set is empty")
    grid = sorted({float(v) for v in lambda_grid})
    if any(not 0.0 <= v <= 1.0 for v in grid):
        raise ValueError("lambda grid values must lie in [0, 1]")
    L_set = sorted({int(L) for L in L_set})
    k = g.item_degree
    points = []
    for lam in grid:
        lists = recommend_all(g, AlgorithmSpec.hhp(lam), L_set[-1], workers=workers, users=users)
        for L in L_set:
            items = np.concatenate([rec.items[:L] for rec in lists])
            points.append(SweepPoint(lam, L, float(k[items].mean())))
    return sorted(points, key=lambda p: (p.L, p.lam))


def rescale(points: Sequence[SweepPoint], per_L: bool = True) -> Rescaled:
    """Min-max rescale mean degrees to [0, 1].

    By default each list length is normalised by the extrema of its own
    lambda sweep, which is what makes the curves for different L collapse.
    ``per_L=False`` takes the extrema over the whole sweep instead.  Lambda
    is kept as is.  ``k_min``/``k_max`` of the result are the sweep-wide
    extrema in both modes.
    """
    md = np.array([p.mean_degree for p in points], dtype=np.float64)
    lam = np.array([p.lam for p in points], dtype=np.float64)
    Ls = np.array([p.L for p in points], dtype=np.int64)
    kt = np.empty_like(md)
    if per_L:
        for L in np.unique(Ls):
            sel = Ls == L
            lo, hi = md[sel].min(), md[sel].max()
            if hi == lo:
                raise CalibrationError(f"degenerate sweep at L={L}: all mean degrees equal {lo}")
            kt[sel] = (md[sel] - lo) / (hi - lo)
        lo, hi = md.min(), md.max()
    else:
        lo, hi = md.min(), md.max()
        if hi == lo:
            raise CalibrationError(f"degenerate sweep: all mean degrees equal {lo}")
        kt = (md - lo) / (hi - lo)
    return Rescaled(kt, lam, Ls, float(lo), float(hi))


def collapse_spread(rs: Rescaled, grid_size: int = 51) -> dict[int, float]:
    """RMS deviation of each L's curve from the mean curve.

    Each L curve is lambda as a function of rescaled degree, linearly
    interpolated onto a common grid covering the range every curve spans.
    """
    curves = {}
    for L in np.unique(rs.L):
        sel = rs.L == L
        order = np.argsort(rs.k_tilde[sel], kind="stable")
        curves[int(L)] = (rs.k_tilde[sel][order], rs.lam[sel][order])
    lo = max(c[0][0] for c in curves.values())
    hi = min(c[0][-1] for c in curves.values())
    if not hi > lo:
        raise CalibrationError("rescaled curves do not overlap")
    grid = np.linspace(lo, hi, grid_size)
    values = {L: np.interp(grid, xs, ys) for L, (xs, ys) in curves.items()}
    mean = np.mean(list(values.values()), axis=0)
    return {L: float(np.sqrt(np.mean((v - mean) ** 2))) for L, v in values.items()}


@dataclass
class Calibration:
    spec: AlgorithmSpec
    fit: FitResult
    sweep: list[SweepPoint]
    rescaled: Rescaled


def calibrate_dcb(g: BipartiteGraph, lambda_grid: Sequence[float] = DEFAULT_LAMBDA_GRID,
                  L_set: Sequence[int] = DEFAULT_L_SET, seed: int = 0, starts: int = 32,
                  users: Sequence[int] | None = None, workers: int = 1,
                  per_L: bool = True) -> Calibration:
    """Sweep, rescale and fit; the returned spec normalises item degrees by
    the training graph's own item-degree range."""
    sweep = sweep_mean_degree(g, lambda_grid, L_set, users=users, workers=workers)
    rs = rescale(sweep, per_L=per_L)
    fit = fit_double_exponential(rs.k_tilde, rs.lam, starts=starts, seed=seed)
    fit.k_min, fit.k_max = rs.k_min, rs.k_max
    spec = AlgorithmSpec.dcb(fit.coeffs, g)
    return Calibration(spec, fit, sweep, rs)


# --- synthetic graphs and the score/degree scaling check --------------------


def _floor_mean(x_min: float, nu: float, cap: float) -> float:
    """E[max(1, floor(X))] for X power-law distributed on [x_min, cap]."""
    a = nu - 1.0
    norm = x_min ** -a - cap ** -a

    def cdf(t):
        t = min(max(t, x_min), cap)
        return (x_min ** -a - t ** -a) / norm

    total = 0.0
    for k in range(int(math.floor(x_min)), int(math.floor(cap)) + 1):
        total += max(1, k) * (cdf(k + 1) - cdf(k))
    return total


def generate_power_law_bipartite(m: int, n: int, nu: float, mean_degree: float,
                                 seed: int) -> BipartiteGraph:
    """Random graph whose item degrees follow a truncated power law.

    Degrees are floors of continuous draws with density ~ k^-nu on
    [x_min, m], floored at 1; x_min is solved so the expected degree equals
    ``mean_degree``.  Each item links to that many distinct users chosen
    uniformly.
    """
    if nu <= 1:
        raise ValueError("power-law exponent must exceed 1")
    if not 1 <= mean_degree <= m:
        raise ValueError(f"mean degree {mean_degree} infeasible for {m} users")
    lo, hi = 1e-6, float(m) * (1 - 1e-9)
    if mean_degree <= _floor_mean(lo, nu, m):
        x_min = lo
    elif mean_degree >= _floor_mean(hi, nu, m):
        raise ValueError(f"mean degree {mean_degree} unreachable with exponent {nu}")
    else:
        x_min = brentq(lambda x: _floor_mean(x, nu, m) - mean_degree, lo, hi, xtol=1e-10)
    rng = np.random.default_rng(seed)
    a = nu - 1.0
    u = rng.random(n)
    x = x_min * (1.0 - u * (1.0 - (x_min / m) ** a)) ** (-1.0 / a)
    degrees = np.clip(np.floor(x), 1, m).astype(np.int64)
    links = []
    for item, k in enumerate(degrees):
        users = rng.choice(m, size=k, replace=False)
        links.append(np.column_stack([users, np.full(k, item)]))
    return build_graph(np.concatenate(links), m, n)


def degree_buckets(k: np.ndarray, per_octave: int = 2) -> np.ndarray:
    """Logarithmic bucket id for each positive degree."""
    return np.floor(np.log2(k) * per_octave + 1e-9).astype(np.int64)


def verify_scaling_exponent(g: BipartiteGraph, lam: float, users: Sequence[int] | None = None,
                            min_bucket: int = MIN_BUCKET_ITEMS) -> float:
    """Log-log slope of mean HHP score against item degree.

    Scores are averaged per item over the sampled users who have not
    collected it, then per logarithmic degree bucket (buckets with fewer
    than ``min_bucket`` items are dropped).  For an uncorrelated graph the
    slope should come out close to ``lam``.
    """
    users = np.arange(g.m) if users is None else np.asarray(users, dtype=np.int64)
    users = users[g.user_degree[users] > 0]
    F = Propagator(g, AlgorithmSpec.hhp(lam)).scores(users)
    seen = g.adjacency[users].toarray() > 0
    F[seen] = 0.0
    counts = (~seen).sum(axis=0)
    k = g.item_degree
    ok = (k > 0) & (counts > 0)
    item_mean = F.sum(axis=0)[ok] / counts[ok]
    kk = k[ok].astype(np.float64)
    bucket = degree_buckets(kk)
    xs, ys = [], []
    for b in np.unique(bucket):
        sel = bucket == b
        if sel.sum() < min_bucket:
            continue
        xs.append(np.log(kk[sel]).mean())
        ys.append(np.log(item_mean[sel].mean()))
    if len(xs) < MIN_BUCKETS:
        raise CalibrationError(f"only {len(xs)} degree buckets with >= {min_bucket} items")
    slope, _ = np.polyfit(xs, ys, 1)
    return float(slope)

