"""Topic correspondences across robots.

CLEAR-style spectral rectification of the thresholded association graph, plus
the two baselines it is compared with: ID-based matching and sequential
Hungarian matching against the first robot.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .similarity import SimilarityMatrix, build_registry, pairwise_similarity_matrix

DEFAULT_SIGMA = 0.75
EIG_THRESHOLD = 0.5
EIG_TIE_TOL = 1e-9
ALGORITHMS = ("clear", "hungarian", "id")
HUNGARIAN_COSTS = ("l1", "l2", "cosine")


@dataclass
class NoisyAssociationGraph:
    adjacency: np.ndarray
    registry: list[tuple[int, int]]
    sigma: float

    @property
    def robots(self) -> np.ndarray:
        return np.asarray([r for r, _ in self.registry], dtype=np.int64)

    def __len__(self):
        return len(self.registry)


@dataclass
class ClusterAssignment:
    """Global label of every (robot, local topic) vertex."""

    registry: list[tuple[int, int]]
    labels: np.ndarray
    num_global_labels: int
    algorithm: str
    metric: Optional[str] = None
    sigma: Optional[float] = None
    estimated_labels: Optional[int] = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)

    def correspondences(self) -> dict[int, dict[int, int]]:
        out: dict[int, dict[int, int]] = {}
        for (r, t), g in zip(self.registry, self.labels.tolist()):
            out.setdefault(r, {})[t] = g
        return out

    def translation(self, robot: int, num_topics: Optional[int] = None) -> np.ndarray:
        """Array mapping local topic id -> global label for one robot (-1 if unmapped)."""
        corr = self.correspondences().get(robot, {})
        n = num_topics if num_topics is not None else (max(corr) + 1 if corr else 0)
        out = np.full(n, -1, dtype=np.int64)
        for t, g in corr.items():
            if t < n:
                out[t] = g
        return out

    def validate(self):
        if len(self.labels) != len(self.registry):
            raise ValueError("one label per registered topic is required")
        if len(set(self.registry)) != len(self.registry):
            raise ValueError("duplicate topic in registry")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_global_labels):
            raise ValueError("global label out of range")
        if len(np.unique(self.labels)) != self.num_global_labels:
            raise ValueError("unused global label")
        for r, corr in self.correspondences().items():
            if len(set(corr.values())) != len(corr):
                raise ValueError(f"robot {r} maps two topics to one global label")

    def to_json(self) -> str:
        return json.dumps({
            "num_global_labels": self.num_global_labels,
            "assignments": [[r, t, int(g)] for (r, t), g in zip(self.registry, self.labels)],
            "algorithm": self.algorithm,
            "metric": self.metric,
            "sigma": self.sigma,
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ClusterAssignment":
        doc = json.loads(text)
        rows = doc["assignments"]
        a = cls([(int(r), int(t)) for r, t, _ in rows], [int(g) for _, _, g in rows],
                int(doc["num_global_labels"]), doc["algorithm"], doc.get("metric"), doc.get("sigma"))
        a.validate()
        return a


def _compact(labels: np.ndarray, registry) -> tuple[np.ndarray, int]:
    """Renumber clusters by their smallest member key so ids are order-free."""
    first: dict[int, tuple[int, int]] = {}
    for key, g in zip(registry, labels.tolist()):
        if g not in first or key < first[g]:
            first[g] = key
    order = sorted(first, key=first.get)
    remap = {g: i for i, g in enumerate(order)}
    return np.asarray([remap[g] for g in labels.tolist()], dtype=np.int64), len(order)


# -- association graph ------------------------------------------------------------

def build_association_graph(sim: SimilarityMatrix, sigma: float = DEFAULT_SIGMA) -> NoisyAssociationGraph:
    """Keep an edge wherever the similarity reaches ``sigma``."""
    if not 0.0 < sigma < 1.0:
        raise ValueError(f"sigma must lie in (0, 1), got {sigma}")
    A = (np.asarray(sim.scores) >= sigma).astype(np.int8)
    np.fill_diagonal(A, 1)
    return NoisyAssociationGraph(A, list(sim.registry), sigma)


# -- CLEAR ----------------------------------------------------------------------------

def normalized_laplacian(A: np.ndarray) -> np.ndarray:
    """``(D + I)^-1/2 (D - A) (D + I)^-1/2`` with ``D`` the row sums of ``A``."""
    A = np.asarray(A, dtype=np.float64)
    d = A.sum(axis=1)
    s = 1.0 / np.sqrt(d + 1.0)
    return s[:, None] * (np.diag(d) - A) * s[None, :]


def estimate_num_labels(A: np.ndarray) -> int:
    w = np.linalg.eigvalsh(normalized_laplacian(A))
    return max(1, int(np.sum(w < EIG_THRESHOLD + EIG_TIE_TOL)))


def _argmax_by_key(values: np.ndarray, keys: Sequence, candidates: np.ndarray) -> int:
    best = values[candidates].max()
    tied = [i for i in candidates.tolist() if values[i] >= best - EIG_TIE_TOL]
    return min(tied, key=lambda i: keys[i])


def clear_rectify(graph: NoisyAssociationGraph, ignore_intra_robot: bool = True) -> ClusterAssignment:
    """Rectify a noisy association graph into a consistent cluster graph.

    The number of clusters is the count of normalized-Laplacian eigenvalues
    below 0.5. Vertices are embedded by the matching eigenvectors, one pivot
    per cluster is picked by greatest residual from the span of earlier pivots,
    and every robot's topics are then assigned greedily to the most similar
    pivot not yet taken by another topic of the same robot.

    With ``ignore_intra_robot`` the block of edges among one robot's own
    topics is replaced by the identity, since those topics are distinct by
    construction.
    """
    n = len(graph)
    if n == 0:
        raise ValueError("cannot rectify an empty graph")
    keys = list(graph.registry)
    robots = graph.robots
    A = np.asarray(graph.adjacency, dtype=np.float64).copy()
    if ignore_intra_robot:
        A[robots[:, None] == robots[None, :]] = 0.0
    np.fill_diagonal(A, 1.0)

    w, vecs = np.linalg.eigh(normalized_laplacian(A))
    m = max(1, int(np.sum(w < EIG_THRESHOLD + EIG_TIE_TOL)))
    U = vecs[:, :m].copy()
    norms = np.linalg.norm(U, axis=1)
    nz = norms > 1e-12
    U[nz] /= norms[nz, None]

    # pivots: greedy max residual after projecting out chosen pivots
    pivots: list[int] = []
    R = U.copy()
    available = np.ones(n, dtype=bool)
    for _ in range(m):
        res = np.linalg.norm(R, axis=1)
        cand = np.flatnonzero(available)
        if cand.size == 0 or res[cand].max() <= 1e-9:
            break
        p = _argmax_by_key(res, keys, cand)
        pivots.append(p)
        available[p] = False
        q = R[p] / res[p]
        R -= np.outer(R @ q, q)
    P = len(pivots)
    aff = U @ U[pivots].T

    labels = np.full(n, -1, dtype=np.int64)
    next_label = P
    for r in np.unique(robots):
        members = np.flatnonzero(robots == r)
        pairs = sorted(((-round(float(aff[v, j]), 9), keys[v], j) for v in members for j in range(P)))
        # highest affinity first; each vertex and pivot used once per robot
        taken: set[int] = set()
        done: set[int] = set()
        key_to_v = {keys[v]: v for v in members}
        for _, key, j in pairs:
            v = key_to_v[key]
            if v in done or j in taken:
                continue
            labels[v] = j
            done.add(v)
            taken.add(j)
        for v in members:
            if labels[v] < 0:
                labels[v] = next_label
                next_label += 1

    labels, g = _compact(labels, keys)
    return ClusterAssignment(keys, labels, g, "clear", sigma=graph.sigma, estimated_labels=m)


# -- baselines ------------------------------------------------------------------------

def id_based_match(topics_per_robot: Sequence[int], robot_ids: Sequence[int] | None = None) -> ClusterAssignment:
    """Local topic ``k`` of every robot is global label ``k``."""
    if robot_ids is None:
        robot_ids = list(range(len(topics_per_robot)))
    registry, labels = [], []
    for r, k in sorted(zip(robot_ids, topics_per_robot)):
        for t in range(k):
            registry.append((int(r), t))
            labels.append(t)
    G = max(topics_per_robot, default=0)
    return ClusterAssignment(registry, labels, int(G), "id")


def hungarian_solve(cost) -> tuple[np.ndarray, np.ndarray, float]:
    """Minimum-cost assignment for a (possibly rectangular) cost matrix.

    Returns ``(rows, cols, total)``; ``min(n, m)`` pairs are assigned and rows
    come back sorted. Shortest augmenting paths with dual potentials, O(n^2 m).
    """
    C = np.asarray(cost, dtype=np.float64)
    if C.ndim != 2 or C.size == 0:
        raise ValueError("cost matrix must be a non-empty 2-D array")
    if not np.all(np.isfinite(C)):
        raise ValueError("cost matrix must be finite")
    transposed = C.shape[0] > C.shape[1]
    if transposed:
        C = C.T
    n, m = C.shape
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    p = np.zeros(m + 1, dtype=np.int64)  # p[j]: row (1-based) matched to column j
    way = np.zeros(m + 1, dtype=np.int64)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(m + 1, np.inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used[1:]
            cur = C[i0 - 1] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            cand = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
            u[p[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    cols = np.flatnonzero(p[1:])
    rows = p[1:][cols] - 1
    if transposed:
        rows, cols = cols, rows
    order = np.argsort(rows)
    rows, cols = rows[order], cols[order]
    total = math.fsum(np.asarray(cost, dtype=np.float64)[rows, cols].tolist())
    return rows, cols, total


def pairwise_costs(X: np.ndarray, Y: np.ndarray, cost: str) -> np.ndarray:
    if cost == "l1":
        return np.abs(X[:, None, :] - Y[None, :, :]).sum(axis=2)
    if cost == "l2":
        return np.sqrt(((X[:, None, :] - Y[None, :, :]) ** 2).sum(axis=2))
    if cost == "cosine":
        nx = np.linalg.norm(X, axis=1)
        ny = np.linalg.norm(Y, axis=1)
        return 1.0 - (X @ Y.T) / np.outer(nx, ny)
    raise ValueError(f"unknown Hungarian cost {cost!r}; choose from {HUNGARIAN_COSTS}")


def _sequential(registry: list[tuple[int, int]], block_cost: Callable[[np.ndarray, np.ndarray], np.ndarray],
                metric: Optional[str]) -> ClusterAssignment:
    robots = np.asarray([r for r, _ in registry], dtype=np.int64)
    order = list(dict.fromkeys(robots.tolist()))
    labels = np.full(len(registry), -1, dtype=np.int64)
    seed = np.flatnonzero(robots == order[0])
    labels[seed] = np.arange(seed.size)
    next_label = seed.size
    for r in order[1:]:
        idx = np.flatnonzero(robots == r)
        if seed.size:
            rows, cols, _ = hungarian_solve(block_cost(seed, idx))
            labels[idx[cols]] = labels[seed[rows]]
        for v in idx:
            if labels[v] < 0:
                labels[v] = next_label
                next_label += 1
    return ClusterAssignment(list(registry), labels, int(next_label), "hungarian", metric=metric)


def hungarian_sequential_match(descriptor_sets: Sequence[np.ndarray], cost: str = "l2",
                               robot_ids: Sequence[int] | None = None) -> ClusterAssignment:
    """Match every robot's topics to the first robot's by min-cost assignment.

    Surplus topics of a robot with more topics than the first become new
    global labels.
    """
    if cost not in HUNGARIAN_COSTS:
        raise ValueError(f"unknown Hungarian cost {cost!r}; choose from {HUNGARIAN_COSTS}")
    registry, rows = build_registry(descriptor_sets, robot_ids)
    if not registry:
        return ClusterAssignment([], [], 0, "hungarian", metric=cost)
    X = np.vstack(rows)
    return _sequential(registry, lambda a, b: pairwise_costs(X[a], X[b], cost), cost)


def hungarian_sequential_from_similarity(sim: SimilarityMatrix | NoisyAssociationGraph) -> ClusterAssignment:
    """Sequential Hungarian matching with cost ``1 - score`` from a precomputed matrix."""
    S = np.asarray(sim.scores if isinstance(sim, SimilarityMatrix) else sim.adjacency, dtype=np.float64)
    return _sequential(list(sim.registry), lambda a, b: 1.0 - S[np.ix_(a, b)], "similarity")


# -- dispatch & scoring ------------------------------------------------------------------

def match(algorithm: str, descriptor_sets: Sequence[np.ndarray], metric: Optional[str] = None,
          sigma: float = DEFAULT_SIGMA, robot_ids: Sequence[int] | None = None) -> ClusterAssignment:
    """Run one matching algorithm on a team's descriptor sets."""
    if algorithm == "clear":
        metric = metric or "cosine"
        sim = pairwise_similarity_matrix(descriptor_sets, metric, robot_ids)
        out = clear_rectify(build_association_graph(sim, sigma))
        out.metric = metric
        return out
    if algorithm == "hungarian":
        return hungarian_sequential_match(descriptor_sets, metric or "l2", robot_ids)
    if algorithm == "id":
        return id_based_match([len(d) for d in descriptor_sets], robot_ids)
    raise ValueError(f"unknown matching algorithm {algorithm!r}; choose from {ALGORITHMS}")


def pairwise_f1(assignment: ClusterAssignment, truth: Sequence[int]) -> float:
    """F1 of predicted cross-robot matches against planted cluster ids."""
    pred = assignment.labels
    truth = np.asarray(truth)
    robots = np.asarray([r for r, _ in assignment.registry])
    iu = np.triu_indices(len(pred), k=1)
    cross = robots[iu[0]] != robots[iu[1]]
    p = (pred[iu[0]] == pred[iu[1]])[cross]
    t = (truth[iu[0]] == truth[iu[1]])[cross]
    tp = int(np.sum(p & t))
    fp = int(np.sum(p & ~t))
    fn = int(np.sum(~p & t))
    if tp + fp + fn == 0:
        return 1.0
    return 2 * tp / (2 * tp + fp + fn)
