"""Similarity between topic descriptors and the team-wide similarity matrix."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist

SIMPLEX_TOL = 1e-6
METRICS = ("cosine", "to")


def _check_simplex(p: np.ndarray, name: str) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1:
        raise ValueError(f"{name} must be a 1-D descriptor")
    if np.any(p < 0) or abs(p.sum() - 1.0) > SIMPLEX_TOL:
        raise ValueError(f"{name} is not a point on the probability simplex")
    return p


def topic_overlap(a, b) -> float:
    """Probability mass two topics share: one minus total variation distance."""
    a = _check_simplex(a, "a")
    b = _check_simplex(b, "b")
    if a.shape != b.shape:
        raise ValueError("descriptors have different vocabulary sizes")
    return float(np.clip(1.0 - 0.5 * np.abs(a - b).sum(), 0.0, 1.0))


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("cosine similarity is undefined for a zero vector")
    return float(np.clip(a @ b / (na * nb), 0.0, 1.0))


@dataclass
class SimilarityMatrix:
    """Scores between every pair of topics; ``registry[i] = (robot, local topic)``."""

    scores: np.ndarray
    registry: list[tuple[int, int]]
    metric: str

    def __len__(self):
        return len(self.registry)

    @property
    def robots(self) -> np.ndarray:
        return np.asarray([r for r, _ in self.registry], dtype=np.int64)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["topic"] + [f"r{r}:t{t}" for r, t in self.registry])
            for (r, t), row in zip(self.registry, self.scores):
                w.writerow([f"r{r}:t{t}"] + [f"{v:.9g}" for v in row])


def build_registry(descriptor_sets: Sequence[np.ndarray], robot_ids: Sequence[int] | None = None):
    if robot_ids is None:
        robot_ids = list(range(len(descriptor_sets)))
    if len(robot_ids) != len(descriptor_sets):
        raise ValueError("one robot id per descriptor set is required")
    order = sorted(range(len(robot_ids)), key=lambda i: robot_ids[i])
    registry, rows = [], []
    for i in order:
        d = np.asarray(descriptor_sets[i], dtype=np.float64)
        for t in range(d.shape[0]):
            registry.append((int(robot_ids[i]), t))
            rows.append(d[t])
    return registry, rows


def similarity_scores(X: np.ndarray, metric: str) -> np.ndarray:
    """All-pairs scores between the rows of ``X``."""
    if metric == "cosine":
        norms = np.linalg.norm(X, axis=1)
        if np.any(norms == 0):
            raise ValueError("cosine similarity is undefined for a zero vector")
        U = X / norms[:, None]
        S = U @ U.T
        S = 0.5 * (S + S.T)
    elif metric == "to":
        S = 1.0 - 0.5 * cdist(X, X, "cityblock")
    else:
        raise ValueError(f"unknown similarity metric {metric!r}; choose from {METRICS}")
    np.clip(S, 0.0, 1.0, out=S)
    np.fill_diagonal(S, 1.0)
    return S


def pairwise_similarity_matrix(descriptor_sets: Sequence[np.ndarray], metric: str = "cosine",
                               robot_ids: Sequence[int] | None = None) -> SimilarityMatrix:
    """Score every pair of topics across the team.

    Rows enumerate robots in ascending id order and each robot's topics in
    local order.
    """
    registry, rows = build_registry(descriptor_sets, robot_ids)
    if not rows:
        raise ValueError("need at least one topic")
    X = np.vstack(rows)
    if metric == "to":
        for i, row in enumerate(X):
            _check_simplex(row, f"descriptor {registry[i]}")
    return SimilarityMatrix(similarity_scores(X, metric), registry, metric)
