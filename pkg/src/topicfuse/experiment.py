"""Multi-robot mapping experiments: simulate, snapshot, match, fuse, score.

Seed splitting rule: every random stream is seeded with
``SeedSequence([master_seed, repetition, robot, purpose])`` where purpose is
0 for observations, 1 for the topic model and 2 for subset draws (robot = -1
maps to ``2**32 - 1``; the single-robot baseline uses robot = num_robots).
The environment and trajectories depend on ``master_seed`` only, so every
repetition maps the same world along the same paths.

Within a repetition one robot permutation is drawn and the size-k subset is
its first k robots, so subsets are nested across sizes.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from . import wire
from .fusion import fuse_maps
from .matching import ALGORITHMS, HUNGARIAN_COSTS, match
from .metrics import ami, contingency, coverage_fraction, table_from_labels
from .rost import TopicModel, TopicModelConfig
from .world import (
    PRESETS,
    GridSpec,
    generate_environment,
    make_emission_model,
    observe,
    plan_coverage_trajectories,
    preset_environment,
)

PURPOSE_OBS, PURPOSE_MODEL, PURPOSE_SUBSET = 0, 1, 2

DEFAULT_METHODS = (
    ("id", None),
    ("hungarian", "l1"),
    ("hungarian", "l2"),
    ("hungarian", "cosine"),
    ("clear", "to"),
    ("clear", "cosine"),
)


class ConfigError(ValueError):
    pass


def derive_seed(master: int, repetition: int, robot: int, purpose: int) -> int:
    robot = robot if robot >= 0 else 2 ** 32 - 1
    return int(np.random.SeedSequence([master, repetition, robot, purpose]).generate_state(1)[0])


@dataclass
class ExperimentConfig:
    env: str = "ENV2"
    master_seed: int = 0
    num_robots: int = 12
    observations_per_robot: int = 250
    words_per_obs: int = 50
    repetitions: int = 24
    subset_sizes: Optional[list[int]] = None
    methods: list = field(default_factory=lambda: [list(m) for m in DEFAULT_METHODS])
    sigma: float = 0.75
    snapshot_steps: Optional[list[int]] = None
    single_robot: bool = True
    region_overlap: float = 0.0
    alpha: float = TopicModelConfig.alpha
    beta: float = TopicModelConfig.beta
    gamma: float = TopicModelConfig.gamma
    neighborhood_radius: int = TopicModelConfig.neighborhood_radius
    refine_sweeps_per_frame: int = TopicModelConfig.refine_sweeps_per_frame
    window: int = TopicModelConfig.window
    # custom environments (env == "custom")
    width: int = 64
    height: int = 64
    num_classes: int = 8
    patchiness: float = 4.0
    vocabulary_size: int = 1000
    words_per_class: int = 40
    noise_mix: float = 0.05
    output_dir: Optional[str] = None
    save_payloads: bool = False
    workers: int = 1

    def __post_init__(self):
        self.methods = [list(m) for m in self.methods]

    @property
    def sizes(self) -> list[int]:
        return list(self.subset_sizes) if self.subset_sizes else list(range(1, self.num_robots + 1))

    @property
    def snapshots(self) -> list[int]:
        return list(self.snapshot_steps) if self.snapshot_steps else [self.observations_per_robot]

    def validate(self) -> "ExperimentConfig":
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if self.num_robots < 1:
            raise ConfigError("num_robots must be >= 1")
        if self.observations_per_robot < 1:
            raise ConfigError("observations_per_robot must be >= 1")
        if self.words_per_obs < 1:
            raise ConfigError("words_per_obs must be >= 1")
        if any(k < 1 or k > self.num_robots for k in self.sizes):
            raise ConfigError(f"subset sizes must lie in 1..{self.num_robots}")
        if any(s < 1 or s > self.observations_per_robot for s in self.snapshots):
            raise ConfigError(f"snapshot steps must lie in 1..{self.observations_per_robot}")
        if not 0.0 < self.sigma < 1.0:
            raise ConfigError("sigma must lie in (0, 1)")
        if self.env != "custom" and self.env not in PRESETS:
            raise ConfigError(f"unknown environment {self.env!r}; use one of {sorted(PRESETS)} or 'custom'")
        for m in self.methods:
            if len(m) != 2 or m[0] not in ALGORITHMS:
                raise ConfigError(f"bad method {m!r}")
            alg, metric = m
            if alg == "clear" and metric not in ("cosine", "to"):
                raise ConfigError(f"CLEAR needs metric 'cosine' or 'to', got {metric!r}")
            if alg == "hungarian" and metric not in HUNGARIAN_COSTS:
                raise ConfigError(f"Hungarian needs cost in {HUNGARIAN_COSTS}, got {metric!r}")
            if alg == "id" and metric is not None:
                raise ConfigError("ID-based matching takes no metric")
        try:
            self.topic_config(0)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        return self

    def topic_config(self, seed: int) -> TopicModelConfig:
        vocab = 1000 if self.env in PRESETS else self.vocabulary_size
        return TopicModelConfig(self.alpha, self.beta, self.gamma, vocab, self.neighborhood_radius,
                                self.refine_sweeps_per_frame, self.window, seed)

    def digest(self) -> str:
        d = asdict(self)
        for k in ("output_dir", "workers", "save_payloads"):
            d.pop(k)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)


def build_world(cfg: ExperimentConfig):
    if cfg.env in PRESETS:
        return preset_environment(cfg.env, cfg.master_seed)
    truth = generate_environment(cfg.master_seed, GridSpec(cfg.width, cfg.height), cfg.num_classes, cfg.patchiness)
    truth.preset = "custom"
    emission = make_emission_model(cfg.master_seed, cfg.num_classes, cfg.vocabulary_size,
                                   cfg.words_per_class, cfg.noise_mix)
    return truth, emission


@dataclass
class Snapshot:
    robot: int
    step: int
    local_map: object
    descriptors: np.ndarray


def simulate_robot(truth, emission, cells: Sequence[int], cfg: ExperimentConfig, repetition: int,
                   robot: int, snapshot_steps: Iterable[int]) -> list[Snapshot]:
    """Run one robot's topic model over its frames, snapshotting after given frame counts."""
    want = set(snapshot_steps)
    model = TopicModel(cfg.topic_config(derive_seed(cfg.master_seed, repetition, robot, PURPOSE_MODEL)),
                       truth.grid, robot)
    obs_seed = derive_seed(cfg.master_seed, repetition, robot, PURPOSE_OBS)
    out = []
    for t, cell in enumerate(cells):
        model.ingest(observe(truth, emission, int(cell), cfg.words_per_obs, obs_seed, robot, t))
        if t + 1 in want:
            out.append(Snapshot(robot, t + 1, model.local_map(), model.descriptors()))
    return out


def _robot_task(args):
    truth, emission, cells, cfg, rep, robot, steps = args
    return simulate_robot(truth, emission, cells, cfg, rep, robot, steps)


def fuse_and_score(truth, snaps: Sequence[Snapshot], algorithm: str, metric, sigma: float):
    descs = [s.descriptors for s in snaps]
    ids = [s.robot for s in snaps]
    assignment = match(algorithm, descs, metric, sigma, ids)
    fused = fuse_maps([s.local_map for s in snaps], assignment, truth.grid)
    score = ami(contingency(truth, fused)) if len(fused) else float("nan")
    return score, coverage_fraction(fused, truth), assignment


def run_repetition(cfg: ExperimentConfig, truth, emission, plan, rep: int, pool=None,
                   payload_dir: Optional[Path] = None) -> list[dict]:
    steps = cfg.snapshots
    tasks = [(truth, emission, plan.cells[r], cfg, rep, r, steps) for r in range(cfg.num_robots)]
    runs = list(pool.map(_robot_task, tasks)) if pool else [_robot_task(t) for t in tasks]
    by_step = {s: {} for s in steps}
    for snaps in runs:
        for s in snaps:
            by_step[s.step][s.robot] = s

    if payload_dir is not None:
        payload_dir.mkdir(parents=True, exist_ok=True)
        last = max(steps)
        for r, s in sorted(by_step[last].items()):
            blob = wire.encode(s.local_map, s.descriptors, truth.grid.num_cells, timestep=last)
            (payload_dir / f"robot_{r:02d}.tfm").write_bytes(blob)

    subset_seed = derive_seed(cfg.master_seed, rep, -1, PURPOSE_SUBSET)
    perm = np.random.default_rng(subset_seed).permutation(cfg.num_robots)

    def seeds(robots):
        return {"subset": subset_seed,
                "model": [derive_seed(cfg.master_seed, rep, r, PURPOSE_MODEL) for r in robots],
                "observations": [derive_seed(cfg.master_seed, rep, r, PURPOSE_OBS) for r in robots]}

    env = truth.preset or "custom"
    base = {"config_hash": cfg.digest(), "master_seed": cfg.master_seed}
    records = []
    for step in steps:
        for k in cfg.sizes:
            subset = sorted(int(r) for r in perm[:k])
            snaps = [by_step[step][r] for r in subset]
            for alg, metric in cfg.methods:
                score, cov, a = fuse_and_score(truth, snaps, alg, metric, cfg.sigma)
                records.append(dict(base, env=env, algorithm=alg, metric=metric, num_robots=k,
                                    repetition=rep, timestep=step, ami=score, coverage_fraction=cov,
                                    num_global_labels=a.num_global_labels, subset=subset,
                                    sigma=cfg.sigma if alg == "clear" else None, seeds=seeds(subset)))

    if cfg.single_robot:
        # one robot sweeps the regions of perm[0], perm[1], ... in turn, so after
        # k * T frames it has covered exactly the area of the size-k subset
        T = cfg.observations_per_robot
        cells = np.concatenate([plan.cells[r] for r in perm])
        want = [k * T for k in cfg.sizes]
        snaps = simulate_robot(truth, emission, cells, cfg, rep, cfg.num_robots, want)
        for k, s in zip(cfg.sizes, snaps):
            lm = s.local_map
            score = ami(table_from_labels(truth.labels[lm.cells], lm.labels)) if len(lm) else float("nan")
            records.append(dict(base, env=env, algorithm="single", metric=None, num_robots=k,
                                repetition=rep, timestep=k * T, ami=score,
                                coverage_fraction=len(lm) / truth.grid.num_cells,
                                num_global_labels=lm.num_topics, subset=sorted(int(r) for r in perm[:k]),
                                sigma=None, seeds=seeds([cfg.num_robots])))
    return records


def run_experiment(cfg: ExperimentConfig, progress=None) -> list[dict]:
    cfg.validate()
    truth, emission = build_world(cfg)
    plan = plan_coverage_trajectories(truth, cfg.num_robots, cfg.observations_per_robot,
                                      overlap=cfg.region_overlap)
    records = []
    pool = ProcessPoolExecutor(cfg.workers) if cfg.workers > 1 else None
    try:
        for rep in range(cfg.repetitions):
            pdir = Path(cfg.output_dir) / "payloads" if cfg.save_payloads and cfg.output_dir and rep == 0 else None
            records.extend(run_repetition(cfg, truth, emission, plan, rep, pool, pdir))
            if progress:
                progress(rep + 1, cfg.repetitions)
    finally:
        if pool:
            pool.shutdown()
    if cfg.output_dir:
        write_outputs(cfg, records, Path(cfg.output_dir))
    return records


# -- summaries -------------------------------------------------------------------------

def _stats(values: Sequence[float]) -> dict:
    v = np.asarray([x for x in values if not math.isnan(x)], dtype=np.float64)
    n = len(v)
    mean = float(v.mean()) if n else float("nan")
    if n < 2:
        return {"n": n, "mean": mean, "std": float("nan"), "ci_low": mean, "ci_high": mean, "degenerate": 1}
    std = float(v.std(ddof=1))
    half = 1.96 * std / math.sqrt(n)
    return {"n": n, "mean": mean, "std": std, "ci_low": mean - half, "ci_high": mean + half, "degenerate": 0}


def _method_key(rec) -> tuple[str, str]:
    return rec["algorithm"], rec["metric"] or ""


def summarize(records: Sequence[dict], num_robots: Optional[int] = None) -> list[dict]:
    """Summary rows: mean and std of AMI per method at the largest team, final step."""
    if not records:
        return []
    n = num_robots or max(r["num_robots"] for r in records)
    team = [r for r in records if r["num_robots"] == n and r["algorithm"] != "single"]
    final = max((r["timestep"] for r in team), default=None)
    rows = []
    groups: dict = {}
    for r in team:
        if r["timestep"] == final:
            groups.setdefault(_method_key(r), []).append(r["ami"])
    for r in records:
        if r["algorithm"] == "single" and r["num_robots"] == n:
            groups.setdefault(_method_key(r), []).append(r["ami"])
    for (alg, metric), vals in groups.items():
        st = _stats(vals)
        rows.append({"algorithm": alg, "metric": metric, "num_robots": n, "n": st["n"],
                     "mean_ami": st["mean"], "std_ami": st["std"]})
    order = {a: i for i, a in enumerate(["id", "hungarian", "clear", "single"])}
    rows.sort(key=lambda r: (order.get(r["algorithm"], 9), r["metric"]))
    return rows


TREND_FIELDS = ["axis", "x", "algorithm", "metric", "n", "mean", "std", "ci_low", "ci_high", "degenerate"]


def emit_trend_data(records: Sequence[dict], path=None) -> list[dict]:
    """AMI mean/std/95% CI against team size (final step) and against frames ingested (full team).

    Rows with ``axis == "num_robots"`` give AMI against team size; rows with
    ``axis == "timestep"`` give AMI as the robots explore. ``degenerate`` is 1
    when fewer than two records back a point (CI collapses to the mean).
    """
    if not records:
        raise ValueError("no records to summarise")
    team_recs = [r for r in records if r["algorithm"] != "single"]
    final = max(r["timestep"] for r in team_recs) if team_recs else None
    full = max(r["num_robots"] for r in records)
    groups: dict = {}
    for r in records:
        if r["algorithm"] == "single" or r["timestep"] == final:
            groups.setdefault(("num_robots", r["num_robots"]) + _method_key(r), []).append(r["ami"])
        if r["algorithm"] != "single" and r["num_robots"] == full:
            groups.setdefault(("timestep", r["timestep"]) + _method_key(r), []).append(r["ami"])
    rows = []
    for (axis, x, alg, metric), vals in sorted(groups.items()):
        rows.append({"axis": axis, "x": x, "algorithm": alg, "metric": metric, **_stats(vals)})
    if path is not None:
        write_csv(path, TREND_FIELDS, rows)
    return rows


def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(round(v, 12))
    return v


def write_csv(path, fields, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r.get(k)) for k in fields})


def write_outputs(cfg: ExperimentConfig, records: Sequence[dict], out: Path):
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(asdict(replace(cfg, output_dir=None, workers=1, save_payloads=False)),
                                                sort_keys=True, indent=2) + "\n")
    with open(out / "records.jsonl", "w") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")
    write_csv(out / "summary.csv", ["algorithm", "metric", "num_robots", "n", "mean_ami", "std_ami"],
               summarize(records))
    emit_trend_data(records, out / "trend.csv")


def load_records(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
