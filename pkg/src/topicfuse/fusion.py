"""Fuse per-robot local maps into one global map."""
from __future__ import annotations

import colorsys
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .matching import ClusterAssignment
from .rost import LocalSemanticMap
from .world import GridSpec


@dataclass
class GlobalSemanticMap:
    """Global label per observed cell together with the visit it came from."""

    cells: np.ndarray
    labels: np.ndarray
    robots: np.ndarray
    timesteps: np.ndarray
    num_global_labels: int
    grid: Optional[GridSpec] = None

    def __len__(self):
        return len(self.cells)

    def dense(self, num_cells: Optional[int] = None) -> np.ndarray:
        """Row-major label array with -1 for unobserved cells."""
        if num_cells is None:
            if self.grid is None:
                raise ValueError("grid size unknown")
            num_cells = self.grid.num_cells
        out = np.full(num_cells, -1, dtype=np.int64)
        out[self.cells] = self.labels
        return out

    def relabel(self, remap) -> "GlobalSemanticMap":
        remap = np.asarray(remap)
        return GlobalSemanticMap(self.cells.copy(), remap[self.labels], self.robots.copy(),
                                 self.timesteps.copy(), self.num_global_labels, self.grid)

    def to_csv(self, path, grid: Optional[GridSpec] = None):
        grid = grid or self.grid
        if grid is None:
            raise ValueError("grid required for CSV export")
        img = self.dense(grid.num_cells).reshape(grid.height, grid.width)
        np.savetxt(path, img, fmt="%d", delimiter=",")

    def to_ppm(self, path, grid: Optional[GridSpec] = None, scale: int = 4):
        """Binary PPM with one palette colour per label, black for unobserved."""
        grid = grid or self.grid
        if grid is None:
            raise ValueError("grid required for image export")
        write_label_ppm(path, self.dense(grid.num_cells).reshape(grid.height, grid.width), scale)


def label_palette(n: int) -> np.ndarray:
    """Deterministic, well-spread RGB colours (golden-angle hues)."""
    rgb = [colorsys.hsv_to_rgb((k * 0.618033988749895) % 1.0, 0.65, 0.95) for k in range(n)]
    return (np.asarray(rgb).reshape(n, 3) * 255).astype(np.uint8)


def write_label_ppm(path, image: np.ndarray, scale: int = 4):
    labels = np.asarray(image, dtype=np.int64)
    pal = label_palette(int(labels.max()) + 1 if labels.size and labels.max() >= 0 else 0)
    rgb = np.zeros(labels.shape + (3,), dtype=np.uint8)
    seen = labels >= 0
    rgb[seen] = pal[labels[seen]]
    rgb = np.repeat(np.repeat(rgb, scale, axis=0), scale, axis=1)
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (rgb.shape[1], rgb.shape[0]))
        fh.write(rgb.tobytes())


def fuse_maps(local_maps: Sequence[LocalSemanticMap], assignment: ClusterAssignment,
              grid: Optional[GridSpec] = None) -> GlobalSemanticMap:
    """Label each cell from the robot that visited it most recently.

    Equal timestamps go to the lowest robot id. Every local label must be
    covered by ``assignment``; a missing one raises ``KeyError``.
    """
    corr = assignment.correspondences()
    cells, labels, robots, steps = [], [], [], []
    for lm in local_maps:
        table = corr.get(lm.robot_id)
        if table is None and len(lm):
            raise KeyError(f"robot {lm.robot_id} has no correspondences")
        if len(lm) == 0:
            continue
        uniq = np.unique(lm.labels)
        missing = [int(t) for t in uniq if int(t) not in table]
        if missing:
            raise KeyError(f"robot {lm.robot_id}: local labels {missing} are not in the assignment")
        lut = np.full(int(uniq.max()) + 1, -1, dtype=np.int64)
        for t in uniq:
            lut[t] = table[int(t)]
        cells.append(lm.cells)
        labels.append(lut[lm.labels])
        robots.append(np.full(len(lm), lm.robot_id, dtype=np.int64))
        steps.append(lm.timesteps)
    if not cells:
        empty = np.zeros(0, dtype=np.int64)
        return GlobalSemanticMap(empty, empty.copy(), empty.copy(), empty.copy(),
                                 assignment.num_global_labels, grid)
    cells = np.concatenate(cells)
    labels = np.concatenate(labels)
    robots = np.concatenate(robots)
    steps = np.concatenate(steps)
    # sort by cell, then latest visit, then lowest robot id
    order = np.lexsort((robots, -steps, cells))
    cells, labels, robots, steps = cells[order], labels[order], robots[order], steps[order]
    first = np.ones(len(cells), dtype=bool)
    first[1:] = cells[1:] != cells[:-1]
    return GlobalSemanticMap(cells[first], labels[first], robots[first], steps[first],
                             assignment.num_global_labels, grid)
