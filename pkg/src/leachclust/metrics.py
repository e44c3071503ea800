"""Partition-agreement scores and imputation error.

The pair-counting scores work from the contingency table, so they run in
O(n + ca * cb) rather than enumerating pairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigurationError, DimensionError


@dataclass
class MetricsRecord:
    nmi: float
    f_score: float
    rand_index: float
    rmse_missing: Optional[float] = None
    runtime_seconds: float = 0.0


def _contingency(a, b):
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape or a.ndim != 1:
        raise DimensionError(f"label vectors differ in shape: {a.shape} vs {b.shape}")
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    table = np.zeros((ia.max(initial=-1) + 1, ib.max(initial=-1) + 1), dtype=np.int64)
    np.add.at(table, (ia, ib), 1)
    return table


def _entropy(counts, n):
    p = counts[counts > 0] / n
    return float(-np.sum(p * np.log(p)))


def nmi(a, b):
    """Mutual information over the geometric mean of the two entropies.

    Both partitions trivial gives 1; exactly one trivial gives 0.
    """
    table = _contingency(a, b)
    n = table.sum()
    if n == 0:
        raise DimensionError("empty label vectors")
    ha = _entropy(table.sum(axis=1), n)
    hb = _entropy(table.sum(axis=0), n)
    if ha == 0 and hb == 0:
        return 1.0
    if ha == 0 or hb == 0:
        return 0.0
    pa = table.sum(axis=1) / n
    pb = table.sum(axis=0) / n
    nz = table > 0
    pij = table[nz] / n
    mi = float(np.sum(pij * np.log(pij / np.outer(pa, pb)[nz])))
    return min(1.0, max(0.0, mi / math.sqrt(ha * hb)))


def _pair_counts(a, b):
    """(same in both, same in a, same in b, total pairs)."""
    table = _contingency(a, b)
    n = int(table.sum())
    both = int(np.sum(table * (table - 1)) // 2)
    sa = table.sum(axis=1)
    sb = table.sum(axis=0)
    same_a = int(np.sum(sa * (sa - 1)) // 2)
    same_b = int(np.sum(sb * (sb - 1)) // 2)
    return both, same_a, same_b, n * (n - 1) // 2


def rand_index(a, b):
    if len(a) < 2:
        raise ConfigurationError("rand index needs at least two instances")
    both, same_a, same_b, total = _pair_counts(a, b)
    # agreements: same in both + different in both
    return (total - same_a - same_b + 2 * both) / total


def pairwise_f(truth, pred):
    """Pair-counting F1 of ``pred`` against ``truth``.

    Precision is the share of same-cluster pairs in ``pred`` that are also
    together in ``truth``; recall swaps the roles.
    """
    if len(truth) != len(pred):
        raise DimensionError("label vectors differ in length")
    if len(truth) < 2:
        raise ConfigurationError("pairwise F needs at least two instances")
    both, same_t, same_p, _ = _pair_counts(truth, pred)
    if same_t == 0 and same_p == 0:
        return 1.0
    if both == 0:
        return 0.0
    precision = both / same_p
    recall = both / same_t
    return 2 * precision * recall / (precision + recall)


def rmse_missing(truth, filled, L):
    truth, filled, L = np.asarray(truth, float), np.asarray(filled, float), np.asarray(L)
    if not truth.shape == filled.shape == L.shape:
        raise DimensionError("truth, filled and mask shapes differ")
    miss = L == 0
    if not miss.any():
        raise ConfigurationError("no masked cells to score")
    return float(np.sqrt(np.mean((truth[miss] - filled[miss]) ** 2)))
