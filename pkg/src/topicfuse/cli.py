"""Command-line entry point.

Subcommands:

    gen-env   write an environment (ground truth, emission model, trajectories) as JSON
    run       run a full experiment and write records, summary and trend CSVs
    fuse      match and fuse robot payloads into a global map
    score     score a fused map CSV against an environment
    trend     rebuild trend and summary CSVs from a records file

Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, wire
from .experiment import (
    ConfigError,
    ExperimentConfig,
    build_world,
    emit_trend_data,
    load_records,
    run_experiment,
    summarize,
    write_csv,
)
from .fusion import GlobalSemanticMap, fuse_maps, write_label_ppm
from .matching import ALGORITHMS, match
from .metrics import ami, contingency, coverage_fraction
from .world import environment_from_json, environment_to_json, plan_coverage_trajectories

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _methods(text: str) -> list[list]:
    """``clear:cosine,hungarian:l2,id`` -> ``[["clear", "cosine"], ["hungarian", "l2"], ["id", None]]``."""
    out = []
    for item in text.split(","):
        alg, _, metric = item.strip().partition(":")
        out.append([alg, metric or None])
    return out


_CUSTOM_TYPES = {"subset_sizes": _int_list, "snapshot_steps": _int_list, "methods": _methods}


def _add_config_flags(p: argparse.ArgumentParser):
    """One flag per ExperimentConfig field; unset flags stay out of the namespace."""
    g = p.add_argument_group("experiment config (flags override --config)")
    for f in dataclasses.fields(ExperimentConfig):
        flag = "--" + f.name.replace("_", "-")
        default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
        kw = dict(dest=f.name, default=argparse.SUPPRESS, help=f"default: {default}")
        if f.name in _CUSTOM_TYPES:
            g.add_argument(flag, type=_CUSTOM_TYPES[f.name], **kw)
        elif isinstance(default, bool):
            g.add_argument(flag, action=argparse.BooleanOptionalAction, **kw)
        elif isinstance(default, (int, float)):
            g.add_argument(flag, type=type(default), **kw)
        else:
            g.add_argument(flag, type=str, **kw)


def build_config(args) -> ExperimentConfig:
    base: dict = {}
    if getattr(args, "config", None):
        try:
            base = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(base, dict):
            raise ConfigError("config file must hold a JSON object")
    names = {f.name for f in dataclasses.fields(ExperimentConfig)}
    base.update({k: v for k, v in vars(args).items() if k in names})
    try:
        return ExperimentConfig.from_dict(base).validate()
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def cmd_gen_env(args) -> int:
    cfg = build_config(args)
    truth, emission = build_world(cfg)
    plan = plan_coverage_trajectories(truth, cfg.num_robots, cfg.observations_per_robot,
                                      overlap=cfg.region_overlap)
    text = environment_to_json(truth, emission, plan, None if cfg.env != "custom" else cfg.patchiness)
    if args.out == "-":
        sys.stdout.write(text + "\n")
    else:
        Path(args.out).write_text(text + "\n")
    if args.ppm:
        write_label_ppm(args.ppm, truth.labels.reshape(truth.grid.height, truth.grid.width))
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = build_config(args)
    t0 = time.perf_counter()

    def progress(i, n):
        if not args.quiet:
            print(f"repetition {i}/{n} ({time.perf_counter() - t0:.1f} s)", file=sys.stderr)

    records = run_experiment(cfg, progress)
    if not args.quiet:
        for row in summarize(records):
            metric = row["metric"] or "-"
            print(f"{row['algorithm']:10s} {metric:7s} AMI {row['mean_ami']:.3f} ({row['std_ami']:.3f})")
    return EXIT_OK


def _load_env(path):
    try:
        return environment_from_json(Path(path).read_text())
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot read environment {path}: {exc}") from None


def cmd_fuse(args) -> int:
    if args.algorithm not in ALGORITHMS:
        raise ConfigError(f"unknown algorithm {args.algorithm!r}")
    truth, _, _ = _load_env(args.env_file)
    maps, descs = [], []
    for path in args.payloads:
        p = wire.decode_payload(Path(path).read_bytes())
        if p.grid_cells != truth.grid.num_cells:
            raise ValueError(f"{path}: payload grid has {p.grid_cells} cells, environment {truth.grid.num_cells}")
        maps.append(p.local_map)
        descs.append(p.descriptors)
    if not maps:
        raise ConfigError("no payloads given")
    ids = [m.robot_id for m in maps]
    if len(set(ids)) != len(ids):
        raise ValueError("two payloads share a robot id")
    assignment = match(args.algorithm, descs, args.metric, args.sigma, ids)
    fused = fuse_maps(maps, assignment, truth.grid)
    fused.to_csv(args.out)
    if args.assignment:
        Path(args.assignment).write_text(assignment.to_json() + "\n")
    if args.ppm:
        fused.to_ppm(args.ppm)
    print(json.dumps({"robots": len(maps), "global_labels": assignment.num_global_labels,
                      "coverage_fraction": coverage_fraction(fused, truth),
                      "ami": ami(contingency(truth, fused))}, sort_keys=True))
    return EXIT_OK


def cmd_score(args) -> int:
    truth, _, _ = _load_env(args.env_file)
    img = np.loadtxt(args.fused, delimiter=",", dtype=np.int64, ndmin=2)
    if img.shape != (truth.grid.height, truth.grid.width):
        raise ValueError(f"fused map is {img.shape}, environment is {(truth.grid.height, truth.grid.width)}")
    flat = img.ravel()
    cells = np.flatnonzero(flat >= 0)
    if not len(cells):
        raise ValueError("fused map has no labeled cells")
    labels = flat[cells]
    zeros = np.zeros(len(cells), dtype=np.int64)
    fused = GlobalSemanticMap(cells, labels, zeros, zeros, int(labels.max()) + 1, truth.grid)
    print(json.dumps({"ami": ami(contingency(truth, fused)),
                      "coverage_fraction": coverage_fraction(fused, truth)}, sort_keys=True))
    return EXIT_OK


def cmd_trend(args) -> int:
    try:
        records = load_records(args.records)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read records {args.records}: {exc}") from None
    if not records:
        raise ConfigError("records file is empty")
    emit_trend_data(records, args.out)
    if args.summary:
        write_csv(args.summary, ["algorithm", "metric", "num_robots", "n", "mean_ami", "std_ami"],
                   summarize(records))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="topicfuse", description="Multi-robot semantic map fusion experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-env", help="write an environment as JSON")
    p.add_argument("--config", help="JSON file with ExperimentConfig fields")
    p.add_argument("--out", default="-", help="output path ('-' for stdout)")
    p.add_argument("--ppm", help="also write the ground truth as a PPM image")
    _add_config_flags(p)
    p.set_defaults(func=cmd_gen_env)

    p = sub.add_parser("run", help="run an experiment")
    p.add_argument("--config", help="JSON file with ExperimentConfig fields")
    p.add_argument("--quiet", action="store_true")
    _add_config_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("fuse", help="fuse robot payloads into a global map")
    p.add_argument("payloads", nargs="+", help="payload files written by 'run --save-payloads'")
    p.add_argument("--env-file", required=True, help="environment JSON from gen-env")
    p.add_argument("--algorithm", default="clear", choices=ALGORITHMS)
    p.add_argument("--metric", default=None, help="cosine/to for clear; l1/l2/cosine for hungarian")
    p.add_argument("--sigma", type=float, default=0.75)
    p.add_argument("--out", required=True, help="fused map CSV (-1 marks unobserved cells)")
    p.add_argument("--assignment", help="write the cluster assignment JSON here")
    p.add_argument("--ppm", help="write a colour image of the fused map")
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("score", help="AMI and coverage of a fused map CSV")
    p.add_argument("fused")
    p.add_argument("--env-file", required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("trend", help="trend CSV from a records file")
    p.add_argument("records")
    p.add_argument("--out", required=True)
    p.add_argument("--summary", help="also write the summary table here")
    p.set_defaults(func=cmd_trend)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"topicfuse: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - report any failure as a runtime error
        print(f"topicfuse: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
