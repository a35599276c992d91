"""Synthetic ground-truth environments, coverage plans and word observations.

Environments are 2D grids of cells, each carrying a single ground-truth class.
Robots sweep disjoint regions and every visit yields a bag of visual "words"
drawn from the class's emission distribution.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

FORMAT_NAME = "topicfuse.environment"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class GridSpec:
    width: int
    height: int
    cell_size: float = 1.0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"grid must be at least 1x1, got {self.width}x{self.height}")

    @property
    def num_cells(self) -> int:
        return self.width * self.height

    def index(self, x: int, y: int) -> int:
        return y * self.width + x

    def coords(self, cell: int) -> tuple[int, int]:
        return cell % self.width, cell // self.width

    def contains(self, cell: int) -> bool:
        return 0 <= cell < self.num_cells

    def to_dict(self) -> dict:
        return {"width": self.width, "height": self.height, "cell_size": self.cell_size}


@dataclass
class GroundTruthMap:
    """Per-cell ground-truth class ids, stored row-major."""

    grid: GridSpec
    labels: np.ndarray
    num_classes: int
    seed: Optional[int] = None
    preset: Optional[str] = None

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if self.labels.size != self.grid.num_cells:
            raise ValueError("label count does not match grid size")
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise ValueError("label id out of range")

    def label_of(self, cell: int) -> int:
        return int(self.labels[cell])

    def as_image(self) -> np.ndarray:
        return self.labels.reshape(self.grid.height, self.grid.width)


@dataclass
class LabelEmissionModel:
    """Per-class categorical word distributions blended with uniform noise.

    ``class_rows[c]`` is the clean distribution of class ``c``; observations are
    drawn from ``(1 - noise_mix) * class_rows[c] + noise_mix / V``.
    """

    class_rows: np.ndarray
    noise_mix: float = 0.0

    def __post_init__(self):
        self.class_rows = np.asarray(self.class_rows, dtype=np.float64)
        if self.class_rows.ndim != 2:
            raise ValueError("class_rows must be a 2-D array")
        if not 0.0 <= self.noise_mix < 1.0:
            raise ValueError("noise_mix must lie in [0, 1)")
        if np.any(self.class_rows < 0) or not np.allclose(self.class_rows.sum(axis=1), 1.0, atol=1e-9):
            raise ValueError("every class row must be a probability vector")

    @property
    def num_classes(self) -> int:
        return self.class_rows.shape[0]

    @property
    def vocabulary_size(self) -> int:
        return self.class_rows.shape[1]

    def mixture(self, label: int) -> np.ndarray:
        row = (1.0 - self.noise_mix) * self.class_rows[label] + self.noise_mix / self.vocabulary_size
        return row / row.sum()

    def to_dict(self) -> dict:
        return {"class_rows": self.class_rows.tolist(), "noise_mix": self.noise_mix}


def make_emission_model(seed: int, num_classes: int, vocabulary_size: int,
                        words_per_class: int = 40, noise_mix: float = 0.05,
                        concentration: float = 1.0) -> LabelEmissionModel:
    """Draw a sparse word distribution per class.

    Each class puts all its clean mass on ``words_per_class`` words picked at
    random, so supports of different classes overlap only by chance.
    """
    if words_per_class < 1 or words_per_class > vocabulary_size:
        raise ValueError("words_per_class must be in [1, vocabulary_size]")
    rng = np.random.default_rng([seed, 0xE41])
    rows = np.zeros((num_classes, vocabulary_size))
    for c in range(num_classes):
        while True:
            support = rng.choice(vocabulary_size, size=words_per_class, replace=False)
            weights = rng.dirichlet(np.full(words_per_class, concentration))
            row = np.zeros(vocabulary_size)
            row[support] = weights
            # rows must be pairwise distinct
            if all(np.abs(row - rows[d]).sum() > 0 for d in range(c)):
                break
        rows[c] = row
    return LabelEmissionModel(rows, noise_mix)


def generate_environment(seed: int, grid: GridSpec, num_classes: int,
                         patchiness: float = 4.0) -> GroundTruthMap:
    """Seeded region growing over the grid.

    ``max(num_classes, cells / patchiness**2)`` seed points are scattered; the
    first ``num_classes`` of them get classes ``0..num_classes-1`` so every class
    is present, the rest draw a random class. Patches then grow by repeatedly
    claiming an unlabeled neighbour of a random frontier cell, so the typical
    patch diameter scales with ``patchiness``.
    """
    if num_classes < 1:
        raise ValueError("num_classes must be >= 1")
    if num_classes > grid.num_cells:
        raise ValueError(f"num_classes={num_classes} exceeds the {grid.num_cells} cells of the grid")
    if patchiness <= 0:
        raise ValueError("patchiness must be positive")

    rng = np.random.default_rng([seed, 0x6E7])
    n = grid.num_cells
    n_seeds = int(min(n, max(num_classes, round(n / patchiness ** 2))))
    seeds = rng.choice(n, size=n_seeds, replace=False)
    seed_classes = np.concatenate([np.arange(num_classes),
                                   rng.integers(0, num_classes, size=n_seeds - num_classes)])

    labels = np.full(n, -1, dtype=np.int64)
    labels[seeds] = seed_classes
    frontier = list(seeds.tolist())
    w, h = grid.width, grid.height
    while frontier:
        i = int(rng.integers(len(frontier)))
        cell = frontier[i]
        x, y = cell % w, cell // w
        free = []
        if x > 0 and labels[cell - 1] < 0:
            free.append(cell - 1)
        if x < w - 1 and labels[cell + 1] < 0:
            free.append(cell + 1)
        if y > 0 and labels[cell - w] < 0:
            free.append(cell - w)
        if y < h - 1 and labels[cell + w] < 0:
            free.append(cell + w)
        if not free:
            frontier[i] = frontier[-1]
            frontier.pop()
            continue
        nxt = free[int(rng.integers(len(free)))]
        labels[nxt] = labels[cell]
        frontier.append(nxt)

    return GroundTruthMap(grid, labels, num_classes, seed=seed)


@dataclass(frozen=True)
class EnvironmentPreset:
    name: str
    width: int
    height: int
    num_classes: int
    patchiness: float
    words_per_class: int
    noise_mix: float
    description: str = ""


PRESETS = {
    "ENV1": EnvironmentPreset(
        "ENV1", 64, 64, 8, 4.0, 40, 0.05,
        "8 classes in small patches scattered everywhere; every robot region shares most classes"),
    "ENV2": EnvironmentPreset(
        "ENV2", 64, 64, 12, 16.0, 40, 0.05,
        "12 classes in large patches; robot regions share few classes"),
}


def preset_environment(name: str, seed: int) -> tuple[GroundTruthMap, LabelEmissionModel]:
    try:
        p = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    truth = generate_environment(seed, GridSpec(p.width, p.height), p.num_classes, p.patchiness)
    truth.preset = name
    return truth, make_emission_model(seed, p.num_classes, 1000, p.words_per_class, p.noise_mix)


# -- coverage planning -------------------------------------------------------

def _band_widths(width: int, n_bands: int) -> list[int]:
    base, extra = divmod(width, n_bands)
    return [base + (1 if b < extra else 0) for b in range(n_bands)]


def sweep_order(grid: GridSpec, n_bands: int = 1) -> np.ndarray:
    """Boustrophedon path visiting every cell once, band by band.

    The grid is cut into ``n_bands`` vertical bands. Bands are traversed
    alternately top-down and bottom-up, and each band's row direction is chosen
    so the path ends on the band's right edge; consecutive cells of the result
    are therefore always 4-adjacent.
    """
    n_bands = max(1, min(n_bands, grid.width))
    path = []
    x0 = 0
    for b, bw in enumerate(_band_widths(grid.width, n_bands)):
        rows = range(grid.height) if b % 2 == 0 else range(grid.height - 1, -1, -1)
        # last row goes left-to-right
        flip = (grid.height - 1) % 2
        for r_i, y in enumerate(rows):
            xs = range(x0, x0 + bw)
            if (r_i + flip) % 2 == 1:
                xs = reversed(xs)
            path.extend(y * grid.width + x for x in xs)
        x0 += bw
    return np.asarray(path, dtype=np.int64)


@dataclass
class TrajectoryPlan:
    grid: GridSpec
    regions: list[np.ndarray]
    cells: list[np.ndarray]
    timesteps: list[np.ndarray]
    observations_per_robot: int

    @property
    def num_robots(self) -> int:
        return len(self.cells)

    def frames(self, robot: int):
        return zip(self.cells[robot].tolist(), self.timesteps[robot].tolist())

    def to_dict(self) -> dict:
        return {
            "observations_per_robot": self.observations_per_robot,
            "regions": [r.tolist() for r in self.regions],
            "cells": [c.tolist() for c in self.cells],
            "timesteps": [t.tolist() for t in self.timesteps],
        }


def _resample_path(path: np.ndarray, n: int) -> np.ndarray:
    if len(path) >= n:
        idx = np.round(np.linspace(0, len(path) - 1, n)).astype(np.int64)
        return path[idx]
    # sweep back and forth until n frames are produced
    bounce = np.concatenate([path, path[-2:0:-1]]) if len(path) > 1 else path
    reps = -(-n // len(bounce))
    return np.tile(bounce, reps)[:n]


def plan_coverage_trajectories(truth: GroundTruthMap, num_robots: int, observations_per_robot: int,
                               seed: int = 0, overlap: float = 0.0) -> TrajectoryPlan:
    """Split the grid among robots and give each a lawnmower sweep of its region.

    A global banded boustrophedon path is cut into ``num_robots`` consecutive
    pieces whose lengths differ by at most one cell, so every region is
    contiguous. ``overlap`` extends each piece along the path by that fraction
    of its length on both ends (0 gives disjoint regions). ``seed`` is accepted
    for interface symmetry; the plan itself is deterministic.
    """
    if num_robots < 1:
        raise ValueError("num_robots must be >= 1")
    if observations_per_robot < 1:
        raise ValueError("observations_per_robot must be >= 1")
    if overlap < 0:
        raise ValueError("overlap must be non-negative")
    grid = truth.grid
    if num_robots > grid.num_cells:
        raise ValueError("more robots than cells")
    n_bands = int(np.ceil(np.sqrt(num_robots)))
    path = sweep_order(grid, n_bands)
    bounds = np.linspace(0, len(path), num_robots + 1).round().astype(np.int64)

    regions, cells, steps = [], [], []
    for r in range(num_robots):
        lo, hi = int(bounds[r]), int(bounds[r + 1])
        ext = int(round(overlap * (hi - lo)))
        seg = path[max(0, lo - ext):min(len(path), hi + ext)]
        regions.append(np.sort(seg))
        cells.append(_resample_path(seg, observations_per_robot))
        steps.append(np.arange(observations_per_robot, dtype=np.int64))
    return TrajectoryPlan(grid, regions, cells, steps, observations_per_robot)


# -- observations ---------------------------------------------------------------

@dataclass
class ObservationFrame:
    robot_id: int
    timestep: int
    cell: int
    word_ids: np.ndarray
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def histogram(self) -> dict[int, int]:
        return {int(w): int(c) for w, c in zip(self.word_ids, self.counts)}

    def tokens(self) -> np.ndarray:
        return np.repeat(self.word_ids, self.counts).astype(np.int32)


def observe(truth: GroundTruthMap, emission: LabelEmissionModel, cell: int, words_per_obs: int,
            seed: int, robot_id: int = 0, timestep: int = 0) -> ObservationFrame:
    """Draw a bag of words for one visit to ``cell``."""
    if not truth.grid.contains(cell):
        raise ValueError(f"cell {cell} is outside the grid")
    if words_per_obs < 0:
        raise ValueError("words_per_obs must be non-negative")
    rng = np.random.default_rng([seed, robot_id, timestep, cell])
    counts = rng.multinomial(words_per_obs, emission.mixture(truth.label_of(cell)))
    ids = np.flatnonzero(counts)
    return ObservationFrame(robot_id, timestep, cell, ids.astype(np.int64), counts[ids].astype(np.int64))


# -- serialization --------------------------------------------------------------

def environment_to_json(truth: GroundTruthMap, emission: Optional[LabelEmissionModel] = None,
                        plan: Optional[TrajectoryPlan] = None, patchiness: Optional[float] = None) -> str:
    doc = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "preset": truth.preset,
        "seed": truth.seed,
        "grid": truth.grid.to_dict(),
        "num_classes": truth.num_classes,
        "patchiness": patchiness,
        "labels": truth.labels.tolist(),
    }
    if emission is not None:
        doc["emission"] = emission.to_dict()
    if plan is not None:
        doc["plan"] = plan.to_dict()
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def environment_from_json(text: str):
    """Inverse of :func:`environment_to_json`; returns ``(truth, emission, plan)``."""
    doc = json.loads(text)
    if doc.get("format") != FORMAT_NAME:
        raise ValueError("not an environment document")
    if doc.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported environment version {doc.get('version')}")
    g = doc["grid"]
    grid = GridSpec(g["width"], g["height"], g.get("cell_size", 1.0))
    truth = GroundTruthMap(grid, np.asarray(doc["labels"]), doc["num_classes"],
                           seed=doc.get("seed"), preset=doc.get("preset"))
    emission = None
    if "emission" in doc:
        e = doc["emission"]
        emission = LabelEmissionModel(np.asarray(e["class_rows"]), e["noise_mix"])
    plan = None
    if "plan" in doc:
        p = doc["plan"]
        plan = TrajectoryPlan(
            grid,
            [np.asarray(r, dtype=np.int64) for r in p["regions"]],
            [np.asarray(c, dtype=np.int64) for c in p["cells"]],
            [np.asarray(t, dtype=np.int64) for t in p["timesteps"]],
            p["observations_per_robot"],
        )
    return truth, emission, plan
