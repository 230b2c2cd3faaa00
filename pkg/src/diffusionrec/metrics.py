"""Accuracy and diversity measures for top-L recommendation."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .diffusion import RecommendationList
from .graph import BipartiteGraph

DEFAULT_K_COLD = 10


@dataclass
class RankingScore:
    r: float
    r_k: dict[int, float]
    r_cold: float
    n_links: int
    skipped: int = 0


@dataclass
class Precision:
    P: float
    P_k: dict[int, float]
    P_cold: float


@dataclass
class EvaluationReport:
    algorithm: str
    L: int
    r: float
    r_k: dict[int, float]
    r_cold: float
    P: float
    P_k: dict[int, float]
    P_cold: float
    D_inter: float
    D_inner: float
    K_cold: int = DEFAULT_K_COLD
    skipped: int = 0
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["r_k"] = {str(k): v for k, v in sorted(self.r_k.items())}
        d["P_k"] = {str(k): v for k, v in sorted(self.P_k.items())}
        return d


def _group_probe(probe: np.ndarray) -> dict[int, np.ndarray]:
    probe = np.asarray(probe, dtype=np.int64).reshape(-1, 2)
    order = np.lexsort((probe[:, 1], probe[:, 0]))
    probe = probe[order]
    users, starts = np.unique(probe[:, 0], return_index=True)
    bounds = list(starts[1:]) + [len(probe)]
    return {int(u): probe[s:e, 1] for u, s, e in zip(users, starts, bounds)}


def midrank_positions(f: np.ndarray, candidates: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """1-based rank of each target among ``candidates`` by descending score,
    tied scores sharing the mean of the positions they span."""
    vals = np.sort(f[candidates])
    t = f[targets]
    lo = np.searchsorted(vals, t, side="left")
    hi = np.searchsorted(vals, t, side="right")
    greater = vals.size - hi
    return greater + (hi - lo + 1) / 2.0


def _aggregate_by_degree(values: np.ndarray, degrees: np.ndarray) -> dict[int, float]:
    out = {}
    for k in np.unique(degrees):
        out[int(k)] = float(values[degrees == k].mean())
    return out


def ranking_score(probe: np.ndarray, scores: np.ndarray | Callable, train: BipartiteGraph,
                  k_cold: int = DEFAULT_K_COLD) -> RankingScore:
    """Mean normalised rank of the held-out links.

    ``scores`` is an m x n matrix or a callable mapping an array of users to
    their score rows.  Each probe link (i, a) contributes p_a / (n - k_i)
    where p_a is the midrank of a among the items i has not collected in
    ``train``.  ``r`` averages over links, ``r_k`` over links whose item has
    training degree k.
    """
    by_user = _group_probe(probe)
    users = np.array(sorted(by_user), dtype=np.int64)
    if callable(scores):
        rows = scores(users) if users.size else np.zeros((0, train.n))
    else:
        rows = np.asarray(scores)[users]
    rs, degs = [], []
    skipped = 0
    for row, u in zip(rows, users):
        items = by_user[int(u)]
        mask = np.ones(train.n, dtype=bool)
        mask[train.items_of_user(u)] = False
        candidates = np.flatnonzero(mask)
        if candidates.size == 0:
            skipped += items.size
            continue
        p = midrank_positions(row, candidates, items)
        rs.append(p / candidates.size)
        degs.append(train.item_degree[items])
    if not rs:
        return RankingScore(float("nan"), {}, float("nan"), 0, skipped)
    rs = np.concatenate(rs)
    degs = np.concatenate(degs)
    cold = degs <= k_cold
    return RankingScore(float(rs.mean()), _aggregate_by_degree(rs, degs),
                        float(rs[cold].mean()) if cold.any() else float("nan"), int(rs.size), skipped)


def precision(probe: np.ndarray, lists: Sequence[RecommendationList], L: int, train: BipartiteGraph,
              k_cold: int = DEFAULT_K_COLD) -> Precision:
    """Fraction of top-L slots holding probe links, over all m users.

    ``P_k`` counts only hits on items of training degree k, with the same
    m*L denominator, so the ``P_k`` sum to ``P``.
    """
    by_user = _group_probe(probe)
    hits_by_degree: dict[int, int] = defaultdict(int)
    total = 0
    for rec in lists:
        items = by_user.get(int(rec.user))
        if items is None or len(rec) == 0:
            continue
        hit = np.intersect1d(rec.items[:L], items, assume_unique=True)
        total += hit.size
        for k in train.item_degree[hit]:
            hits_by_degree[int(k)] += 1
    denom = train.m * L
    P_k = {k: v / denom for k, v in sorted(hits_by_degree.items())}
    cold = sum(v for k, v in hits_by_degree.items() if k <= k_cold)
    return Precision(total / denom, P_k, cold / denom)


def _list_matrix(lists: Sequence[RecommendationList], n: int, L: int) -> sp.csr_matrix:
    rows = [rec.items[:L] for rec in lists]
    ptr = np.zeros(len(rows) + 1, dtype=np.int64)
    np.cumsum([r.size for r in rows], out=ptr[1:])
    idx = np.concatenate(rows) if rows else np.zeros(0, np.int64)
    return sp.csr_matrix((np.ones(idx.size), idx, ptr), shape=(len(rows), n))


def inter_diversity(lists: Sequence[RecommendationList], L: int, n: int | None = None,
                    sample_pairs: int | None = None, seed: int = 0, block: int = 512) -> float:
    """Mean of 1 - |L_i & L_j| / L over pairs of users with non-empty lists.

    With ``sample_pairs`` set and fewer than that many pairs available the
    exact sum is used; otherwise that many uniformly random distinct pairs
    are drawn from ``seed``.
    """
    lists = [rec for rec in lists if len(rec)]
    u = len(lists)
    if u < 2:
        raise ValueError("need at least two non-empty lists")
    if n is None:
        n = int(max(rec.items.max() for rec in lists)) + 1
    R = _list_matrix(lists, n, L)
    n_pairs = u * (u - 1) // 2
    if sample_pairs is not None and n_pairs > sample_pairs:
        rng = np.random.default_rng(seed)
        i = rng.integers(0, u, size=sample_pairs)
        j = rng.integers(0, u - 1, size=sample_pairs)
        j = j + (j >= i)
        overlap = np.asarray(R[i].multiply(R[j]).sum(axis=1)).ravel()
        return float(1.0 - overlap.mean() / L)
    total = 0.0
    RT = R.T.tocsc()
    for s in range(0, u, block):
        O = (R[s:s + block] @ RT).toarray()
        # strict upper triangle of this row block
        mask = np.arange(u)[None, :] > np.arange(s, min(s + block, u))[:, None]
        total += O[mask].sum()
    return float(1.0 - total / (n_pairs * L))


def cooccurrence(train: BipartiteGraph) -> sp.csr_matrix:
    A = train.adjacency
    C = (A.T @ A).tocsr()
    C.sort_indices()
    return C


def inner_diversity(lists: Sequence[RecommendationList], train: BipartiteGraph, L: int,
                    shared: sp.csr_matrix | None = None) -> float:
    """Mean of 1 - cos(a, b) over ordered item pairs within each list.

    Cosine similarity uses training user sets; an item without training
    users has similarity 0 with anything.  Normalised by L(L-1) per user and
    averaged over users with non-empty lists.
    """
    if L < 2:
        raise ValueError("L must be >= 2")
    C = cooccurrence(train) if shared is None else shared
    k = train.item_degree.astype(np.float64)
    inv = np.divide(1.0, np.sqrt(k), out=np.zeros_like(k), where=k > 0)
    S = sp.diags(inv) @ C @ sp.diags(inv)
    nonempty = [rec for rec in lists if len(rec)]
    if not nonempty:
        raise ValueError("no non-empty lists")
    R = _list_matrix(nonempty, train.n, L)
    lengths = np.diff(R.indptr).astype(np.float64)
    # sum of S over ordered pairs (a, b) inside each list, diagonal removed
    pair_sim = (R @ S).multiply(R).sum() - (k[R.indices] > 0).sum()
    total = float((lengths * (lengths - 1)).sum() - pair_sim)
    return total / (len(nonempty) * L * (L - 1))


def improvement(q_alg: float, q_dcb: float) -> float:
    """Relative difference (q_alg - q_dcb) / q_dcb."""
    if q_dcb == 0:
        raise ZeroDivisionError("reference value is zero")
    return (q_alg - q_dcb) / q_dcb


def recommended_degree_distribution(lists: Sequence[RecommendationList], train: BipartiteGraph,
                                    L: int | None = None) -> dict[int, float]:
    """Normalised histogram of training degrees over all list entries."""
    items = [rec.items[:L] if L else rec.items for rec in lists]
    items = np.concatenate(items) if items else np.zeros(0, np.int64)
    if items.size == 0:
        return {}
    degs, counts = np.unique(train.item_degree[items], return_counts=True)
    return {int(k): c / items.size for k, c in zip(degs, counts)}


def mean_list_degree(lists: Sequence[RecommendationList], train: BipartiteGraph, L: int) -> float:
    items = np.concatenate([rec.items[:L] for rec in lists] or [np.zeros(0, np.int64)])
    return float(train.item_degree[items].mean())
