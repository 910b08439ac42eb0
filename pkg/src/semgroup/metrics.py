"""Partition-agreement and continual-learning metrics.

ARI is computed over the contingency table in exact rational arithmetic
before the final float conversion, so it matches pair-counting oracles
bit for bit on small inputs.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

from .core import Partition


def _contingency(a: Partition, b: Partition) -> np.ndarray:
    if len(a) != len(b):
        raise ValueError("partition length mismatch")
    table = np.zeros((a.num_clusters, b.num_clusters), dtype=np.int64)
    for la, lb in zip(a.labels, b.labels):
        table[la, lb] += 1
    return table


def adjusted_rand_index(a: Partition, b: Partition) -> float:
    """Contingency-table ARI in [-1, 1]; degenerate identical partitions
    (both single-cluster, or both all-singletons) score 1."""
    table = _contingency(a, b)
    n = len(a)
    index = sum(math.comb(int(v), 2) for v in table.flat)
    sum_a = sum(math.comb(int(v), 2) for v in table.sum(axis=1))
    sum_b = sum(math.comb(int(v), 2) for v in table.sum(axis=0))
    pairs = math.comb(n, 2)
    if pairs == 0:
        return 1.0
    expected = Fraction(sum_a * sum_b, pairs)
    maximum = Fraction(sum_a + sum_b, 2)
    if maximum == expected:
        return 1.0
    return float((index - expected) / (maximum - expected))


def normalized_mutual_information(a: Partition, b: Partition) -> float:
    """MI normalized by the arithmetic mean of the two label entropies."""
    table = _contingency(a, b)
    n = len(a)
    pa = table.sum(axis=1) / n
    pb = table.sum(axis=0) / n
    ha = -sum(p * math.log(p) for p in pa if p > 0)
    hb = -sum(p * math.log(p) for p in pb if p > 0)
    if ha == 0.0 and hb == 0.0:
        return 1.0 if a.labels == b.labels else 0.0
    if ha == 0.0 or hb == 0.0:
        return 0.0
    mi = 0.0
    for i in range(table.shape[0]):
        for j in range(table.shape[1]):
            nij = table[i, j]
            if nij:
                pij = nij / n
                mi += pij * math.log(pij / (pa[i] * pb[j]))
    mi = max(mi, 0.0)
    return mi / ((ha + hb) / 2)


class AccuracyMatrix:
    """Lower-triangular accuracy record: entry (i, j) is the accuracy on
    task j measured right after learning task i (0-indexed, j <= i)."""

    def __init__(self):
        self.rows: list[list[float]] = []

    def append_row(self, row) -> None:
        row = [float(v) for v in row]
        if len(row) != len(self.rows) + 1:
            raise ValueError("row length must equal task index + 1")
        if any(v < 0.0 or v > 1.0 for v in row):
            raise ValueError("accuracies must lie in [0, 1]")
        self.rows.append(row)

    @property
    def num_tasks(self) -> int:
        return len(self.rows)

    def __getitem__(self, ij) -> float:
        i, j = ij
        return self.rows[i][j]


def last_accuracy(acc: AccuracyMatrix) -> float:
    """Mean accuracy over all tasks after the final task."""
    if acc.num_tasks == 0:
        raise ValueError("empty accuracy matrix")
    return float(np.mean(acc.rows[-1]))


def forgetting(acc: AccuracyMatrix, mode: str = "max_gap") -> float:
    """Mean drop from each task's best (or first-learned) accuracy to its
    final accuracy; 0 for a single task."""
    T = acc.num_tasks
    if T == 0:
        raise ValueError("empty accuracy matrix")
    if T == 1:
        return 0.0
    drops = []
    for j in range(T - 1):
        history = [acc.rows[k][j] for k in range(j, T - 1)]
        ref = max(history) if mode == "max_gap" else history[-1]
        drops.append(ref - acc.rows[T - 1][j])
    return float(np.mean(drops))


def grouping_objective(member_sets, semantics: dict, alpha: float) -> float:
    """Diagnostic objective: total intra-group pairwise semantic distance
    plus alpha times the number of groups."""
    total = 0.0
    count = 0
    for group in member_sets:
        ids = sorted(group)
        count += 1
        for i in range(len(ids)):
            si = np.asarray(semantics[ids[i]], dtype=float)
            for j in range(i + 1, len(ids)):
                total += float(np.linalg.norm(si - np.asarray(semantics[ids[j]], dtype=float)))
    return total + alpha * count
