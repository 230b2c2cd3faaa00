"""Two-hop resource propagation on the bipartite network.

All five scorers share one kernel.  Resource leaves a collected item b, is
split over b's users, each user j passes it on to its items, and item a keeps
the share

    (k_a / k_b) ** lam_b / (k_a * k_j)

per path b -> j -> a, where ``lam_b`` is the source item's hybridization
parameter (constant for PBS/HTS/HHP, degree dependent for OHHP/DCB).  Powers
are evaluated as ``exp(lam_b * (ln k_a - ln k_b))`` from a per-item log
table.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .algorithms import AlgorithmSpec, item_lambdas
from .graph import BipartiteGraph

# Lambda quantisation levels for the optional lookup-table path.
QUANT_LEVELS = 256
# Block of users scored per kernel call; fixed so results never depend on
# how blocks are distributed over workers.
USER_BLOCK = 128
# Use a dense transfer matrix above this fill ratio (and below the size cap).
DENSE_FILL = 0.1
DENSE_MAX_ENTRIES = 50_000_000


@dataclass(frozen=True)
class RecommendationList:
    user: int
    items: np.ndarray
    scores: np.ndarray

    def __len__(self):
        return len(self.items)


def _log_degrees(k: np.ndarray) -> np.ndarray:
    k = k.astype(np.float64)
    return np.log(np.where(k > 0, k, 1.0))


def _path_weights(src_lam: np.ndarray, ln_k: np.ndarray, k: np.ndarray, dst: np.ndarray,
                  src: np.ndarray, quantize: bool) -> np.ndarray:
    """(k_dst / k_src) ** lam_src / k_dst for arrays of (dst, src) item pairs."""
    if quantize:
        q = np.rint(src_lam * (QUANT_LEVELS - 1)).astype(np.int64)
        levels = np.arange(QUANT_LEVELS) / (QUANT_LEVELS - 1)
        uniq, inv = np.unique(k, return_inverse=True)
        table = np.exp(np.outer(levels, _log_degrees(uniq)))
        ratio = table[q[src], inv[dst]] / table[q[src], inv[src]]
    else:
        ratio = np.exp(src_lam[src] * (ln_k[dst] - ln_k[src]))
    return ratio / np.where(k[dst] > 0, k[dst], 1)


def transfer_matrix(g: BipartiteGraph, spec: AlgorithmSpec, quantize: bool = False) -> sp.csr_matrix:
    """Sparse n x n transfer matrix W (f = W f0), built from the item
    co-occurrence structure A^T diag(1/k_user) A."""
    A = g.adjacency
    ku = g.user_degree.astype(np.float64)
    inv_ku = np.divide(1.0, ku, out=np.zeros_like(ku), where=ku > 0)
    shared = (A.T @ sp.diags(inv_ku) @ A).tocoo()
    k = g.item_degree
    lam = item_lambdas(spec, k)
    w = shared.data * _path_weights(lam, _log_degrees(k), k, shared.row, shared.col, quantize)
    W = sp.csr_matrix((w, (shared.row, shared.col)), shape=(g.n, g.n))
    W.sort_indices()
    return W


class Propagator:
    """Scores users of one graph under one algorithm.

    Builds the transfer matrix once; ``scores(users)`` then costs one sparse
    product per block.  Each output row depends only on that user's row of
    the adjacency matrix, so any partition of users gives identical bits.
    """

    def __init__(self, g: BipartiteGraph, spec: AlgorithmSpec, quantize: bool = False):
        self.graph = g
        self.spec = spec
        W = transfer_matrix(g, spec, quantize)
        # f_u = W a_u  <=>  F = A W^T
        Wt = W.T.tocsr()
        if Wt.nnz > DENSE_FILL * g.n * g.n and g.n * g.n <= DENSE_MAX_ENTRIES:
            self._Wt = Wt.toarray()
        else:
            self._Wt = Wt

    def scores(self, users: Sequence[int] | np.ndarray) -> np.ndarray:
        users = np.asarray(users, dtype=np.int64)
        out = np.empty((users.size, self.graph.n))
        for s in range(0, users.size, USER_BLOCK):
            rows = self.graph.adjacency[users[s:s + USER_BLOCK]]
            block = rows @ self._Wt
            out[s:s + USER_BLOCK] = block.toarray() if sp.issparse(block) else block
        return out


def score_user(g: BipartiteGraph, user: int, spec: AlgorithmSpec) -> np.ndarray:
    """Resource vector of one user by explicit path enumeration.

    Walks every path (user's item b) -> (user j of b) -> (item a of j) and
    accumulates its share.  Cost is the number of such paths, so this is
    the cheap route for a single user; use :class:`Propagator` for many.
    """
    n = g.n
    src = g.items_of_user(user)
    if src.size == 0:
        return np.zeros(n)
    k = g.item_degree
    ln_k = _log_degrees(k)
    lam = item_lambdas(spec, k)
    inv_ku = 1.0 / np.maximum(g.user_degree, 1)

    # hop 1: item b -> its users j
    b_counts = k[src]
    b_of_path = np.repeat(src, b_counts)
    j_of_path = np.concatenate([g.users_of_item(b) for b in src])
    # hop 2: user j -> its items a
    j_counts = g.user_degree[j_of_path]
    b_full = np.repeat(b_of_path, j_counts)
    j_full = np.repeat(j_of_path, j_counts)
    a_full = np.concatenate([g.items_of_user(j) for j in j_of_path])

    share = inv_ku[j_full] * _path_weights(lam, ln_k, k, a_full, b_full, False)
    return np.bincount(a_full, weights=share, minlength=n)


def top_l(f: np.ndarray, collected, L: int, user: int = -1) -> RecommendationList:
    """Best ``L`` uncollected items ordered by (score desc, index asc)."""
    if L < 1:
        raise ValueError("L must be >= 1")
    f = np.asarray(f, dtype=np.float64)
    eligible = np.ones(f.size, dtype=bool)
    eligible[np.asarray(list(collected) if not isinstance(collected, np.ndarray) else collected,
                        dtype=np.int64)] = False
    idx = np.flatnonzero(eligible)
    order = np.argsort(-f[idx], kind="stable")[:L]
    items = idx[order]
    return RecommendationList(user, items, f[items])


def _rank_rows(prop: Propagator, users: np.ndarray, L: int) -> list[RecommendationList]:
    g = prop.graph
    out = []
    for row, u in zip(prop.scores(users), users):
        if g.user_degree[u] == 0:
            out.append(RecommendationList(int(u), np.zeros(0, np.int64), np.zeros(0)))
        else:
            out.append(top_l(row, g.items_of_user(u), L, int(u)))
    return out


_WORKER_STATE = {}


def _init_worker(g, spec, quantize):
    _WORKER_STATE["prop"] = Propagator(g, spec, quantize)


def _worker_block(users, L):
    return _rank_rows(_WORKER_STATE["prop"], users, L)


def recommend_all(g: BipartiteGraph, spec: AlgorithmSpec, L: int, workers: int = 1,
                  users: Sequence[int] | None = None,
                  quantize: bool = False) -> list[RecommendationList]:
    """Top-``L`` list for every user (or the given subset), in user order.

    Users without training links get empty lists.  With ``workers > 1``
    fixed-size user blocks are fanned out over processes; the result is
    identical for any worker count.
    """
    users = np.arange(g.m) if users is None else np.asarray(users, dtype=np.int64)
    if workers <= 1 or users.size <= USER_BLOCK:
        return _rank_rows(Propagator(g, spec, quantize), users, L)
    blocks = [users[s:s + USER_BLOCK] for s in range(0, users.size, USER_BLOCK)]
    with ProcessPoolExecutor(max_workers=min(workers, len(blocks)),
                             initializer=_init_worker, initargs=(g, spec, quantize)) as ex:
        parts = list(ex.map(_worker_block, blocks, [L] * len(blocks)))
    return [r for part in parts for r in part]


def score_all(g: BipartiteGraph, spec: AlgorithmSpec, quantize: bool = False) -> np.ndarray:
    """m x n score matrix."""
    return Propagator(g, spec, quantize).scores(np.arange(g.m))
