"""Online spatiotemporal topic model with an adaptive number of topics.

Each token (word occurrence) carries a topic. Resampling a token in cell ``c``
weighs existing topic ``k`` by

    (n[nbhd(c), k] + alpha) * (n[k, w] + beta) / (n[k] + V * beta)

where ``nbhd(c)`` pools the topic counts of all cells within a Manhattan
radius, and a fresh topic by ``gamma / V``. The fresh-topic option is offered
when a frame's words are first assigned; refinement sweeps only move tokens
between live topics unless ``sweep_new_topics`` is set, so noise words cannot
freeze into singleton topics once their frame leaves the refinement window.
Topics that lose their last token die and are compacted away; ids stay in
creation order.
"""
from __future__ import annotations

import io
import json
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from ..world import GridSpec, ObservationFrame
from ._backend import get_kernel

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TopicModelConfig:
    """Sampler hyperparameters.

    The defaults come from a grid search over local-map AMI on both presets
    at environment seed 3 (see ``benchmarks/tune_hyperparameters.py``).
    """

    alpha: float = 1.0
    beta: float = 0.1
    gamma: float = 1.0
    vocabulary_size: int = 1000
    neighborhood_radius: int = 1
    refine_sweeps_per_frame: int = 3
    window: int = 10
    seed: int = 0
    # new topics are opened only when a frame's words are first assigned
    sweep_new_topics: bool = False

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0 and self.gamma > 0):
            raise ValueError("alpha, beta and gamma must be positive")
        if self.vocabulary_size < 1:
            raise ValueError("vocabulary_size must be >= 1")
        if self.neighborhood_radius < 0 or self.refine_sweeps_per_frame < 0 or self.window < 1:
            raise ValueError("radius and sweeps must be >= 0, window >= 1")


@dataclass
class LocalSemanticMap:
    """Maximum-likelihood topic per visited cell of one robot."""

    robot_id: int
    cells: np.ndarray
    labels: np.ndarray
    timesteps: np.ndarray
    num_topics: int

    def __post_init__(self):
        self.cells = np.asarray(self.cells, dtype=np.int64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.timesteps = np.asarray(self.timesteps, dtype=np.int64)
        if not (len(self.cells) == len(self.labels) == len(self.timesteps)):
            raise ValueError("cells, labels and timesteps must have equal length")

    def __len__(self):
        return len(self.cells)

    def as_dict(self) -> dict[int, tuple[int, int]]:
        return {int(c): (int(l), int(t)) for c, l, t in zip(self.cells, self.labels, self.timesteps)}

    def relabel(self, remap) -> "LocalSemanticMap":
        remap = np.asarray(remap)
        return LocalSemanticMap(self.robot_id, self.cells.copy(), remap[self.labels],
                                self.timesteps.copy(), self.num_topics)


def neighborhood_csr(grid: GridSpec, radius: int) -> tuple[np.ndarray, np.ndarray]:
    """Von Neumann neighbourhoods (self included) as CSR arrays."""
    offsets = [(dx, dy) for dy in range(-radius, radius + 1) for dx in range(-radius, radius + 1)
               if abs(dx) + abs(dy) <= radius]
    ptr = [0]
    idx = []
    for cell in range(grid.num_cells):
        x, y = grid.coords(cell)
        for dx, dy in offsets:
            nx, ny = x + dx, y + dy
            if 0 <= nx < grid.width and 0 <= ny < grid.height:
                idx.append(ny * grid.width + nx)
        ptr.append(len(idx))
    return np.asarray(ptr, dtype=np.int32), np.asarray(idx, dtype=np.int32)


class TopicModel:
    """Single-robot topic model state plus the operations that evolve it.

    Not thread-safe; give each robot its own instance.
    """

    def __init__(self, config: TopicModelConfig, grid: GridSpec, robot_id: int = 0,
                 backend: Optional[str] = None, capacity: int = 16):
        self.config = config
        self.grid = grid
        self.robot_id = robot_id
        self.backend = backend
        self._kernel = get_kernel(backend)
        self.rng = np.random.default_rng(config.seed)
        self._nbr_ptr, self._nbr_idx = neighborhood_csr(grid, config.neighborhood_radius)

        V, C = config.vocabulary_size, grid.num_cells
        self.nkw = np.zeros((capacity, V), dtype=np.int32)
        self.nk = np.zeros(capacity, dtype=np.int32)
        self.nck = np.zeros((C, capacity), dtype=np.int32)
        self._cum = np.zeros(capacity + 1)
        self.n_used = 0

        self._words = np.zeros(1024, dtype=np.int32)
        self._z = np.full(1024, -1, dtype=np.int32)
        self._cells = np.zeros(1024, dtype=np.int32)
        self.n_tokens = 0
        # per frame: (cell, timestep, first token, end token)
        self.frames: list[tuple[int, int, int, int]] = []
        self.last_visit = np.full(C, -1, dtype=np.int64)
        self.last_remap = np.zeros(0, dtype=np.int64)

    # -- views ---------------------------------------------------------------
    @property
    def num_topics(self) -> int:
        return self.n_used

    @property
    def words(self) -> np.ndarray:
        return self._words[:self.n_tokens]

    @property
    def assignments(self) -> np.ndarray:
        return self._z[:self.n_tokens]

    @property
    def token_cells(self) -> np.ndarray:
        return self._cells[:self.n_tokens]

    @property
    def topic_word_counts(self) -> np.ndarray:
        return self.nkw[:self.n_used]

    @property
    def cell_topic_counts(self) -> np.ndarray:
        return self.nck[:, :self.n_used]

    # -- storage ---------------------------------------------------------------
    def _reserve_tokens(self, extra: int):
        need = self.n_tokens + extra
        if need <= len(self._words):
            return
        cap = max(need, 2 * len(self._words))
        for name, fill in (("_words", 0), ("_z", -1), ("_cells", 0)):
            old = getattr(self, name)
            new = np.full(cap, fill, dtype=np.int32)
            new[:self.n_tokens] = old[:self.n_tokens]
            setattr(self, name, new)

    def _grow_topics(self):
        cap = 2 * len(self.nk)
        nkw = np.zeros((cap, self.nkw.shape[1]), dtype=np.int32)
        nkw[:len(self.nk)] = self.nkw
        nk = np.zeros(cap, dtype=np.int32)
        nk[:len(self.nk)] = self.nk
        nck = np.zeros((self.nck.shape[0], cap), dtype=np.int32)
        nck[:, :len(self.nk)] = self.nck
        self.nkw, self.nk, self.nck = nkw, nk, nck
        self._cum = np.zeros(cap + 1)

    # -- sampling --------------------------------------------------------------
    def _sample_range(self, start: int, stop: int, allow_new: bool = True):
        if stop <= start:
            return
        cfg = self.config
        uniforms = self.rng.random(stop - start)
        offset = start
        while True:
            pos, self.n_used = self._kernel(
                self._words, self._z, self._cells, start, stop,
                self.nkw, self.nk, self.nck, self._nbr_ptr, self._nbr_idx,
                cfg.alpha, cfg.beta, cfg.gamma, self.n_used, allow_new,
                uniforms[start - offset:], self._cum)
            if pos >= stop:
                return
            self._grow_topics()
            start = pos

    def _compact(self) -> np.ndarray:
        n = self.n_used
        live = self.nk[:n] > 0
        remap = np.full(n, -1, dtype=np.int64)
        remap[live] = np.arange(int(live.sum()))
        if live.all():
            return remap
        k = int(live.sum())
        z = self._z[:self.n_tokens]
        z[:] = remap[z]
        self.nkw[:k] = self.nkw[:n][live]
        self.nkw[k:n] = 0
        self.nk[:k] = self.nk[:n][live]
        self.nk[k:n] = 0
        self.nck[:, :k] = self.nck[:, :n][:, live]
        self.nck[:, k:n] = 0
        self.n_used = k
        return remap

    def ingest(self, frame: ObservationFrame) -> np.ndarray:
        """Add one observation, assign its words, refine the recent window.

        Returns the topic remap table (old id -> new id, -1 for dead topics)
        produced by compaction.
        """
        V = self.config.vocabulary_size
        tokens = frame.tokens()
        if tokens.size and (tokens.min() < 0 or tokens.max() >= V):
            raise ValueError(f"frame contains word ids outside [0, {V})")
        if not self.grid.contains(frame.cell):
            raise ValueError(f"frame cell {frame.cell} is outside the grid")
        start = self.n_tokens
        self._reserve_tokens(tokens.size)
        stop = start + tokens.size
        self._words[start:stop] = tokens
        self._cells[start:stop] = frame.cell
        self._z[start:stop] = -1
        self.n_tokens = stop
        self.frames.append((int(frame.cell), int(frame.timestep), start, stop))
        self.last_visit[frame.cell] = max(self.last_visit[frame.cell], frame.timestep)

        self._sample_range(start, stop)
        return self._refine_frames(self.config.refine_sweeps_per_frame, self.config.window)

    def refine(self, sweeps: int, window: Optional[int] = None) -> np.ndarray:
        """Run Gibbs sweeps over the last ``window`` frames (all frames if None)."""
        return self._refine_frames(sweeps, window)

    def _refine_frames(self, sweeps, window):
        if window is None or window >= len(self.frames):
            first = 0
        else:
            first = self.frames[-window][2]
        for _ in range(sweeps):
            self._sample_range(first, self.n_tokens, self.config.sweep_new_topics)
        self.last_remap = self._compact()
        return self.last_remap

    # -- outputs ---------------------------------------------------------------
    def descriptors(self) -> np.ndarray:
        """One smoothed word distribution per live topic, shape ``(K, V)``."""
        rows = self.topic_word_counts.astype(np.float64) + self.config.beta
        if rows.shape[0] == 0:
            return rows
        return rows / rows.sum(axis=1, keepdims=True)

    def local_map(self) -> LocalSemanticMap:
        """Most likely topic of every visited cell; ties go to the lowest id."""
        counts = self.cell_topic_counts
        visited = np.flatnonzero((self.last_visit >= 0) & (counts.sum(axis=1) > 0))
        labels = counts[visited].argmax(axis=1) if self.n_used else np.zeros(0, dtype=np.int64)
        return LocalSemanticMap(self.robot_id, visited, labels, self.last_visit[visited], self.n_used)

    def check_consistency(self):
        """Raise ``AssertionError`` if count tables disagree with token assignments."""
        z, w, c = self.assignments, self.words, self.token_cells
        K, V, C = self.n_used, self.config.vocabulary_size, self.grid.num_cells
        assert z.size == 0 or (z.min() >= 0 and z.max() < K), "assignment outside live topics"
        nkw = np.bincount(z.astype(np.int64) * V + w, minlength=K * V).reshape(K, V)
        nck = np.bincount(c.astype(np.int64) * K + z, minlength=C * K).reshape(C, K)
        assert np.array_equal(nkw, self.nkw[:K]), "topic-word table mismatch"
        assert np.array_equal(nkw.sum(axis=1), self.nk[:K]), "topic totals mismatch"
        assert np.array_equal(nck, self.nck[:, :K]), "cell-topic table mismatch"
        assert not self.nkw[K:].any() and not self.nck[:, K:].any(), "stale counts in dead slots"
        assert (self.nk[:K] > 0).all(), "dead topic not compacted"

    # -- checkpoints ------------------------------------------------------------
    def save(self, fh):
        """Write a checkpoint (npz) that restores this exact state, RNG included."""
        meta = {
            "version": CHECKPOINT_VERSION,
            "config": asdict(self.config),
            "grid": self.grid.to_dict(),
            "robot_id": self.robot_id,
            "n_used": self.n_used,
            "rng": self.rng.bit_generator.state,
        }
        frames = np.asarray(self.frames, dtype=np.int64).reshape(-1, 4)
        np.savez_compressed(
            fh, meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
            words=self.words, z=self.assignments, cells=self.token_cells, frames=frames,
            last_visit=self.last_visit, nkw=self.topic_word_counts, nck=self.cell_topic_counts)

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        self.save(buf)
        return buf.getvalue()

    @classmethod
    def load(cls, fh, backend: Optional[str] = None) -> "TopicModel":
        data = np.load(fh)
        meta = json.loads(bytes(data["meta"]).decode())
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
        g = meta["grid"]
        model = cls(TopicModelConfig(**meta["config"]), GridSpec(g["width"], g["height"], g["cell_size"]),
                    meta["robot_id"], backend=backend)
        model.rng.bit_generator.state = meta["rng"]
        n = len(data["words"])
        model._reserve_tokens(n)
        model._words[:n] = data["words"]
        model._z[:n] = data["z"]
        model._cells[:n] = data["cells"]
        model.n_tokens = n
        model.frames = [tuple(int(v) for v in row) for row in data["frames"]]
        model.last_visit[:] = data["last_visit"]
        while len(model.nk) < meta["n_used"]:
            model._grow_topics()
        K = meta["n_used"]
        model.n_used = K
        model.nkw[:K] = data["nkw"]
        model.nk[:K] = data["nkw"].sum(axis=1)
        model.nck[:, :K] = data["nck"]
        model.check_consistency()
        return model

    @classmethod
    def from_bytes(cls, blob: bytes, backend: Optional[str] = None) -> "TopicModel":
        return cls.load(io.BytesIO(blob), backend=backend)


# functional aliases -----------------------------------------------------------

def ingest_observation(state: TopicModel, frame: ObservationFrame) -> TopicModel:
    state.ingest(frame)
    return state


def refine(state: TopicModel, sweeps: int, window: Optional[int] = None) -> TopicModel:
    state.refine(sweeps, window)
    return state


def descriptors(state: TopicModel) -> np.ndarray:
    return state.descriptors()


def local_map(state: TopicModel) -> LocalSemanticMap:
    return state.local_map()
