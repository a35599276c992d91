"""Map quality scores: mutual information and adjusted mutual information.

All logarithms are natural; AMI does not depend on the base.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .fusion import GlobalSemanticMap
from .world import GroundTruthMap


@dataclass
class ContingencyTable:
    """``counts[u, v]``: cells with ground-truth label ``row_labels[u]`` and fused label ``col_labels[v]``."""

    counts: np.ndarray
    row_labels: np.ndarray
    col_labels: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def row_marginals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def col_marginals(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    @property
    def T(self) -> "ContingencyTable":
        return ContingencyTable(self.counts.T.copy(), self.col_labels, self.row_labels)


def table_from_labels(a, b) -> ContingencyTable:
    """Contingency table of two aligned label arrays; empty rows/cols never appear."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError("label arrays must have the same shape")
    ra, ia = np.unique(a, return_inverse=True)
    rb, ib = np.unique(b, return_inverse=True)
    counts = np.zeros((len(ra), len(rb)), dtype=np.int64)
    np.add.at(counts, (ia.ravel(), ib.ravel()), 1)
    return ContingencyTable(counts, ra, rb)


def contingency(truth: GroundTruthMap, fused: GlobalSemanticMap) -> ContingencyTable:
    """Count label pairs over the cells labeled in both maps."""
    if fused.grid is not None and (fused.grid.width, fused.grid.height) != (truth.grid.width, truth.grid.height):
        raise ValueError("fused map and ground truth use different grids")
    if len(fused.cells) and (fused.cells.min() < 0 or fused.cells.max() >= truth.grid.num_cells):
        raise ValueError("fused map references cells outside the ground-truth grid")
    return table_from_labels(truth.labels[fused.cells], fused.labels)


def entropy(counts) -> float:
    c = np.asarray(counts, dtype=np.float64)
    c = c[c > 0]
    n = c.sum()
    if n == 0:
        return 0.0
    p = c / n
    return float(-(p * np.log(p)).sum())


def mutual_information(table: ContingencyTable) -> float:
    """Standard non-negative MI, ``sum p(u,v) log(p(u,v) / (p(u) p(v)))``."""
    N = table.total
    if N <= 0:
        raise ValueError("contingency table is empty")
    nij = table.counts.astype(np.float64)
    a = table.row_marginals.astype(np.float64)
    b = table.col_marginals.astype(np.float64)
    i, j = np.nonzero(nij)
    v = nij[i, j]
    mi = float(np.sum(v / N * (np.log(v) + np.log(N) - np.log(a[i]) - np.log(b[j]))))
    return max(mi, 0.0)


def _log_factorials(n: int) -> np.ndarray:
    out = np.zeros(n + 1)
    if n:
        out[1:] = np.cumsum(np.log(np.arange(1, n + 1, dtype=np.float64)))
    return out


def expected_mi(row_marginals, col_marginals) -> float:
    """Expected MI under the hypergeometric model of random tables with fixed marginals.

    For each pair of marginals ``a_i``, ``b_j`` the cell count ``n_ij`` ranges
    over ``max(1, a_i + b_j - N) .. min(a_i, b_j)`` and contributes
    ``n/N * log(N n / (a b))`` weighted by its hypergeometric probability.
    """
    a = np.asarray(row_marginals, dtype=np.int64)
    b = np.asarray(col_marginals, dtype=np.int64)
    a, b = a[a > 0], b[b > 0]
    N = int(a.sum())
    if N != int(b.sum()):
        raise ValueError("row and column marginals must have the same total")
    if N == 0 or len(a) == 1 or len(b) == 1:
        return 0.0
    lf = _log_factorials(N)
    logN = np.log(N)
    emi = 0.0
    for ai in a.tolist():
        for bj in b.tolist():
            lo = max(1, ai + bj - N)
            hi = min(ai, bj)
            if hi < lo:
                continue
            n = np.arange(lo, hi + 1)
            logp = (lf[ai] + lf[bj] + lf[N - ai] + lf[N - bj] - lf[N]
                    - lf[n] - lf[ai - n] - lf[bj - n] - lf[N - ai - bj + n])
            term = n / N * (np.log(n) + logN - np.log(ai) - np.log(bj))
            emi += float(np.sum(term * np.exp(logp)))
    return emi


def _same_partition(counts: np.ndarray) -> bool:
    nz = counts > 0
    return bool(np.all(nz.sum(axis=0) == 1) and np.all(nz.sum(axis=1) == 1))


def ami(table: ContingencyTable) -> float:
    """Adjusted mutual information, normalized by the larger entropy.

    Identical partitions score exactly 1; a table whose two labelings are both
    constant is, by this convention, one identical partition (1.0).
    """
    counts = table.counts
    if table.total <= 0:
        raise ValueError("contingency table is empty")
    if _same_partition(counts):
        return 1.0
    mi = mutual_information(table)
    emi = expected_mi(table.row_marginals, table.col_marginals)
    h = max(entropy(table.row_marginals), entropy(table.col_marginals))
    denom = h - emi
    if abs(denom) < 1e-15:
        return 0.0
    return float((mi - emi) / denom)


def ami_score(truth_labels, predicted_labels) -> float:
    return ami(table_from_labels(truth_labels, predicted_labels))


def coverage_fraction(fused: GlobalSemanticMap, truth: GroundTruthMap) -> float:
    return len(fused.cells) / truth.grid.num_cells


def score_record(env: str, algorithm: str, metric, num_robots: int, repetition: int,
                 ami_value: float, coverage: float, **extra) -> dict:
    rec = {"env": env, "algorithm": algorithm, "metric": metric, "num_robots": num_robots,
           "repetition": repetition, "ami": ami_value, "coverage_fraction": coverage}
    rec.update(extra)
    return rec


def record_to_json(rec: dict) -> str:
    return json.dumps(rec, sort_keys=True)
