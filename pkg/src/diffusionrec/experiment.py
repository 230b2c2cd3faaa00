"""Composition of scoring and metrics into per-split evaluations."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import metrics
from .algorithms import AlgorithmSpec, Kind, REFERENCE_COEFFS
from .calibrate import DEFAULT_L_SET, DEFAULT_LAMBDA_GRID, Calibration, calibrate_dcb
from .diffusion import Propagator, RecommendationList, top_l
from .graph import BipartiteGraph
from .ingest import (FORMATS, IndexedLinks, SplitDataset, coarse_grain, compact, index_links,
                     read_ratings, remove_top_degree_items)


def load_links(path, fmt: str = "movielens-100k", threshold: int = 3,
               remove_top: int = 0) -> IndexedLinks:
    """Parse, coarse-grain, index and optionally strip the hottest items."""
    records = read_ratings(path, FORMATS[fmt] if isinstance(fmt, str) else fmt)
    indexed = index_links(coarse_grain(records, threshold),
                          (r.user_id for r in records), (r.item_id for r in records))
    if remove_top:
        indexed.links = remove_top_degree_items(indexed.links, remove_top, indexed.n)
        indexed = compact(indexed)
    return indexed


def ranked_lists(train: BipartiteGraph, F: np.ndarray, L: int) -> list[RecommendationList]:
    out = []
    for u in range(train.m):
        if train.user_degree[u] == 0:
            out.append(RecommendationList(u, np.zeros(0, np.int64), np.zeros(0)))
        else:
            out.append(top_l(F[u], train.items_of_user(u), L, u))
    return out


def evaluate_lengths(train: BipartiteGraph, probe: np.ndarray, spec: AlgorithmSpec,
                     L_values: Sequence[int], k_cold: int = metrics.DEFAULT_K_COLD,
                     inter_sample: int | None = None, seed: int = 0,
                     with_lists: bool = False):
    """Evaluation reports for several list lengths from one scoring pass.

    Lists for shorter L are prefixes of the longest list, which the
    (score, index) ordering guarantees.
    """
    F = Propagator(train, spec).scores(np.arange(train.m))
    rank = metrics.ranking_score(probe, F, train, k_cold)
    lists = ranked_lists(train, F, max(L_values))
    shared = metrics.cooccurrence(train)
    reports = []
    for L in L_values:
        prec = metrics.precision(probe, lists, L, train, k_cold)
        reports.append(metrics.EvaluationReport(
            algorithm=spec.label, L=int(L), r=rank.r, r_k=rank.r_k, r_cold=rank.r_cold,
            P=prec.P, P_k=prec.P_k, P_cold=prec.P_cold,
            D_inter=metrics.inter_diversity(lists, L, train.n, sample_pairs=inter_sample, seed=seed),
            D_inner=metrics.inner_diversity(lists, train, L, shared) if L >= 2 else float("nan"),
            K_cold=k_cold, skipped=rank.skipped, params=spec.to_dict()))
    if with_lists:
        return reports, lists
    return reports


def evaluate(train: BipartiteGraph, probe: np.ndarray, spec: AlgorithmSpec, L: int,
             k_cold: int = metrics.DEFAULT_K_COLD, inter_sample: int | None = None,
             seed: int = 0) -> metrics.EvaluationReport:
    return evaluate_lengths(train, probe, spec, [L], k_cold, inter_sample, seed)[0]


def ranking_score_only(train: BipartiteGraph, probe: np.ndarray, spec: AlgorithmSpec,
                       k_cold: int = metrics.DEFAULT_K_COLD) -> metrics.RankingScore:
    prop = Propagator(train, spec)
    return metrics.ranking_score(probe, prop.scores, train, k_cold)


def best_by_ranking_score(train: BipartiteGraph, probe: np.ndarray,
                          candidates: Sequence[AlgorithmSpec]) -> tuple[AlgorithmSpec, list[tuple[AlgorithmSpec, float]]]:
    """Candidate with the lowest ranking score (earliest wins ties)."""
    scored = [(spec, ranking_score_only(train, probe, spec).r) for spec in candidates]
    best = min(range(len(scored)), key=lambda i: (scored[i][1], i))
    return scored[best][0], scored


@dataclass
class SplitRun:
    seed: int
    reports: dict[tuple[str, int], metrics.EvaluationReport]
    specs: dict[str, AlgorithmSpec]
    calibration: Calibration | None = None
    grid_scores: dict[str, list[tuple[float, float]]] = field(default_factory=dict)
    lists: dict[str, list[RecommendationList]] = field(default_factory=dict)


def resolve_specs(ds: SplitDataset, algorithms: Sequence[str], hhp_lambda="auto",
                  ohhp_gamma="auto", dcb_coeffs="auto",
                  lambda_grid: Sequence[float] = DEFAULT_LAMBDA_GRID,
                  gamma_grid: Sequence[float] = (), L_set: Sequence[int] = DEFAULT_L_SET,
                  calib_seed: int = 0, starts: int = 32):
    """Concrete parameters for each requested algorithm on one split.

    ``auto`` picks HHP's lambda / OHHP's gamma by ranking score over their
    grids and calibrates DCB from the training graph.
    """
    train = ds.train
    specs: dict[str, AlgorithmSpec] = {}
    grid_scores: dict[str, list] = {}
    calibration = None
    for name in algorithms:
        name = name.upper()
        if name == "PBS":
            specs[name] = AlgorithmSpec.pbs()
        elif name == "HTS":
            specs[name] = AlgorithmSpec.hts()
        elif name == "HHP":
            if hhp_lambda == "auto":
                best, scored = best_by_ranking_score(
                    train, ds.probe, [AlgorithmSpec.hhp(v) for v in lambda_grid])
                grid_scores[name] = [(s.lam, r) for s, r in scored]
                specs[name] = best
            else:
                specs[name] = AlgorithmSpec.hhp(float(hhp_lambda))
        elif name == "OHHP":
            if ohhp_gamma == "auto":
                best, scored = best_by_ranking_score(
                    train, ds.probe, [AlgorithmSpec.ohhp(v, train) for v in gamma_grid])
                grid_scores[name] = [(s.gamma, r) for s, r in scored]
                specs[name] = best
            else:
                specs[name] = AlgorithmSpec.ohhp(float(ohhp_gamma), train)
        elif name == "DCB":
            if dcb_coeffs == "auto":
                calibration = calibrate_dcb(train, lambda_grid, L_set, seed=calib_seed, starts=starts)
                specs[name] = calibration.spec
            elif isinstance(dcb_coeffs, str):
                specs[name] = AlgorithmSpec.dcb(REFERENCE_COEFFS[dcb_coeffs], train)
            else:
                specs[name] = AlgorithmSpec.dcb(tuple(dcb_coeffs), train)
        else:
            raise ValueError(f"unknown algorithm {name!r}")
    return specs, grid_scores, calibration


def run_split(ds: SplitDataset, algorithms: Sequence[str], L_values: Sequence[int],
              k_cold: int = metrics.DEFAULT_K_COLD, inter_sample: int | None = None,
              sample_seed: int = 0, keep_lists: bool = False, **spec_kw) -> SplitRun:
    specs, grid_scores, calibration = resolve_specs(ds, algorithms, **spec_kw)
    reports = {}
    all_lists = {}
    for name, spec in specs.items():
        reps, lists = evaluate_lengths(ds.train, ds.probe, spec, L_values, k_cold, inter_sample,
                                       sample_seed, with_lists=True)
        for rep in reps:
            reports[(name, rep.L)] = rep
        if keep_lists:
            all_lists[name] = lists
    return SplitRun(ds.seed, reports, specs, calibration, grid_scores, all_lists)


def is_per_item(spec: AlgorithmSpec) -> bool:
    return spec.kind in (Kind.OHHP, Kind.DCB)
