import json

import numpy as np
import pytest

from topicfuse.cli import main

SMALL = ["--env", "custom", "--width", "16", "--height", "16", "--vocabulary-size", "100",
         "--words-per-class", "15", "--num-classes", "4", "--num-robots", "3",
         "--observations-per-robot", "40", "--words-per-obs", "20"]


@pytest.fixture
def run_dir(tmp_path):
    out = tmp_path / "run"
    assert main(["run", *SMALL, "--repetitions", "2", "--quiet", "--save-payloads",
                 "--output-dir", str(out)]) == 0
    assert main(["gen-env", *SMALL, "--out", str(tmp_path / "env.json")]) == 0
    return tmp_path


def test_run_writes_outputs(run_dir):
    out = run_dir / "run"
    cfg = json.loads((out / "config.json").read_text())
    assert cfg["num_robots"] == 3 and cfg["repetitions"] == 2
    header = (out / "summary.csv").read_text().splitlines()[0]
    assert header == "algorithm,metric,num_robots,n,mean_ami,std_ami"


def test_config_file_and_flag_override(tmp_path):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"env": "custom", "width": 16, "height": 16, "vocabulary_size": 100,
                                "words_per_class": 15, "num_classes": 4, "num_robots": 2,
                                "observations_per_robot": 20, "repetitions": 5}))
    out = tmp_path / "o"
    assert main(["run", "--config", str(conf), "--repetitions", "1", "--methods", "id,clear:cosine",
                 "--quiet", "--output-dir", str(out)]) == 0
    cfg = json.loads((out / "config.json").read_text())
    assert cfg["repetitions"] == 1 and cfg["num_robots"] == 2
    assert cfg["methods"] == [["id", None], ["clear", "cosine"]]


def test_fuse_and_score_round_trip(run_dir, capsys):
    payloads = sorted(str(p) for p in (run_dir / "run" / "payloads").iterdir())
    fused = run_dir / "fused.csv"
    capsys.readouterr()
    assert main(["fuse", *payloads, "--env-file", str(run_dir / "env.json"), "--algorithm", "clear",
                 "--metric", "cosine", "--out", str(fused), "--assignment", str(run_dir / "a.json"),
                 "--ppm", str(run_dir / "f.ppm")]) == 0
    fuse_out = json.loads(capsys.readouterr().out)
    assert fuse_out["robots"] == 3
    assert np.loadtxt(fused, delimiter=",").shape == (16, 16)
    assert main(["score", str(fused), "--env-file", str(run_dir / "env.json")]) == 0
    score_out = json.loads(capsys.readouterr().out)
    assert score_out["ami"] == pytest.approx(fuse_out["ami"], abs=1e-12)
    assert score_out["coverage_fraction"] == fuse_out["coverage_fraction"]


def test_trend_subcommand(run_dir):
    out = run_dir / "trend.csv"
    assert main(["trend", str(run_dir / "run" / "records.jsonl"), "--out", str(out),
                 "--summary", str(run_dir / "s.csv")]) == 0
    assert out.read_bytes() == (run_dir / "run" / "trend.csv").read_bytes()
    assert (run_dir / "s.csv").read_bytes() == (run_dir / "run" / "summary.csv").read_bytes()


def test_gen_env_stdout(capsys):
    assert main(["gen-env", *SMALL]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["grid"]["width"] == 16


@pytest.mark.parametrize("argv", [
    ["run", "--repetitions", "0"],
    ["run", "--no-such-flag"],
    ["run", "--num-robots", "abc"],
    ["run", "--subset-sizes", "1,x"],
    ["run", "--config", "/nonexistent/config.json"],
    ["frobnicate"],
    ["trend", "/nonexistent/records.jsonl", "--out", "x.csv"],
])
def test_config_errors_exit_1(argv):
    assert main(argv) == 1


def test_runtime_errors_exit_2(tmp_path, run_dir):
    bad = tmp_path / "bad.tfm"
    bad.write_bytes(b"\x01TFM" + b"\x00" * 40)
    assert main(["fuse", str(bad), "--env-file", str(run_dir / "env.json"), "--out",
                 str(tmp_path / "x.csv")]) == 2
    wrong = tmp_path / "wrong.csv"
    wrong.write_text("0,1\n1,0\n")
    assert main(["score", str(wrong), "--env-file", str(run_dir / "env.json")]) == 2
