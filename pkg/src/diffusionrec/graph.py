"""Unary user-item bipartite network."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp


class GraphError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class BipartiteGraph:
    """Immutable user-item network.

    Adjacency is stored twice, as CSR over users and CSR over items, so both
    ``items_of_user`` and ``users_of_item`` are O(1) slices.  Use
    :func:`build_graph` rather than calling the constructor directly.
    """

    m: int
    n: int
    user_ptr: np.ndarray
    user_adj: np.ndarray
    item_ptr: np.ndarray
    item_adj: np.ndarray

    def __post_init__(self):
        for arr in (self.user_ptr, self.user_adj, self.item_ptr, self.item_adj):
            arr.setflags(write=False)

    @property
    def n_links(self) -> int:
        return int(self.user_adj.size)

    @cached_property
    def user_degree(self) -> np.ndarray:
        d = np.diff(self.user_ptr)
        d.setflags(write=False)
        return d

    @cached_property
    def item_degree(self) -> np.ndarray:
        d = np.diff(self.item_ptr)
        d.setflags(write=False)
        return d

    def items_of_user(self, i: int) -> np.ndarray:
        return self.user_adj[self.user_ptr[i]:self.user_ptr[i + 1]]

    def users_of_item(self, a: int) -> np.ndarray:
        return self.item_adj[self.item_ptr[a]:self.item_ptr[a + 1]]

    def links(self) -> np.ndarray:
        """(L, 2) array of (user, item) pairs, sorted by user then item."""
        users = np.repeat(np.arange(self.m), self.user_degree)
        return np.column_stack([users, self.user_adj]).astype(np.int64)

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        """m x n CSR incidence matrix with unit entries."""
        data = np.ones(self.user_adj.size, dtype=np.float64)
        a = sp.csr_matrix((data, self.user_adj, self.user_ptr), shape=(self.m, self.n))
        a.has_sorted_indices = True
        return a

    def dense(self) -> np.ndarray:
        """Dense m x n 0/1 matrix; test-sized graphs only."""
        out = np.zeros((self.m, self.n))
        l = self.links()
        out[l[:, 0], l[:, 1]] = 1.0
        return out

    def positive_item_degree_bounds(self) -> tuple[int, int]:
        """Min and max degree over items with at least one link."""
        k = self.item_degree[self.item_degree > 0]
        if k.size == 0:
            raise GraphError("graph has no links")
        return int(k.min()), int(k.max())


def _csr(rows: np.ndarray, cols: np.ndarray, n_rows: int) -> tuple[np.ndarray, np.ndarray]:
    order = np.lexsort((cols, rows))
    counts = np.bincount(rows, minlength=n_rows)
    ptr = np.zeros(n_rows + 1, dtype=np.int64)
    np.cumsum(counts, out=ptr[1:])
    return ptr, cols[order].astype(np.int64)


def build_graph(links: Iterable[Sequence[int]] | np.ndarray, m: int | None = None,
                n: int | None = None) -> BipartiteGraph:
    """Build a graph from (user, item) index pairs.

    Duplicate pairs collapse to one link.  When ``m``/``n`` are omitted they
    are inferred as ``max index + 1``.
    """
    arr = np.asarray(list(links) if not isinstance(links, np.ndarray) else links)
    if arr.size == 0:
        arr = np.zeros((0, 2), dtype=np.int64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise GraphError(f"links must be (user, item) pairs, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(np.mod(arr, 1) == 0):
            raise GraphError("link indices must be integers")
        arr = arr.astype(np.int64)
    arr = arr.astype(np.int64, copy=False)

    m = int(arr[:, 0].max() + 1) if m is None and len(arr) else (m or 0)
    n = int(arr[:, 1].max() + 1) if n is None and len(arr) else (n or 0)
    bad = (arr[:, 0] < 0) | (arr[:, 0] >= m) | (arr[:, 1] < 0) | (arr[:, 1] >= n)
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        raise GraphError(f"link row {row} {tuple(arr[row])} out of range for m={m}, n={n}")

    arr = np.unique(arr, axis=0)
    u, i = arr[:, 0], arr[:, 1]
    user_ptr, user_adj = _csr(u, i, m)
    item_ptr, item_adj = _csr(i, u, n)
    return BipartiteGraph(m, n, user_ptr, user_adj, item_ptr, item_adj)
