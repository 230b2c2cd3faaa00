"""Dense reference transfer matrix.

Direct transcription of the hybrid transfer rule on a dense adjacency matrix.
Only meant for small graphs in tests; it shares no code with the sparse
kernels in :mod:`diffusionrec.diffusion` apart from the graph container.
"""

from __future__ import annotations

import math

import numpy as np

from .algorithms import AlgorithmSpec, Kind
from .graph import BipartiteGraph


def _source_lambda(spec: AlgorithmSpec, k: int) -> float:
    if spec.kind is Kind.PBS:
        return 1.0
    if spec.kind is Kind.HTS:
        return 0.0
    if spec.kind is Kind.HHP:
        return spec.lam
    if spec.kind is Kind.OHHP:
        lam = math.pow(k / spec.k_max, spec.gamma)
    else:
        a, b, c, d = spec.coeffs
        x = (k - spec.k_min) / (spec.k_max - spec.k_min)
        lam = a * math.exp(b * x) + c * math.exp(d * x)
    return min(1.0, max(0.0, lam))


def dense_transform_matrix(g: BipartiteGraph, spec: AlgorithmSpec) -> np.ndarray:
    """n x n matrix W with ``f = W @ f0``.

    W[a, b] = sum_j A[j, a] A[j, b] / k_j  /  (k_a^(1 - lam_b) * k_b^lam_b)

    where ``lam_b`` is the hybridization parameter of the source item b.  Rows
    and columns of zero-degree items are left at zero.
    """
    A = g.dense()
    ku = A.sum(axis=1)
    ki = A.sum(axis=0)
    inv_ku = np.divide(1.0, ku, out=np.zeros_like(ku), where=ku > 0)
    shared = A.T @ (A * inv_ku[:, None])
    n = g.n
    W = np.zeros((n, n))
    for b in range(n):
        if ki[b] == 0:
            continue
        lam = _source_lambda(spec, int(ki[b]))
        for a in range(n):
            s = shared[a, b]
            if s:
                W[a, b] = s / (math.pow(ki[a], 1.0 - lam) * math.pow(ki[b], lam))
    return W
