from __future__ import annotations

import json
import os
import time

import pytest

from cluttersolve.cli import main


def test_gen_prints_stable_digest(tmp_path, capsys):
    out = tmp_path / "s.json"
    assert main(["gen", "--preset", "desk", "--n", "5", "--seed", "3", "--out", str(out)]) == 0
    first = capsys.readouterr().out.split()[0]
    assert main(["gen", "--preset", "desk", "--n", "5", "--seed", "3", "--out", str(out)]) == 0
    assert capsys.readouterr().out.split()[0] == first
    assert len(first) == 64


@pytest.mark.parametrize("argv", [
    ["gen", "--preset", "desk", "--n", "0"],
    ["gen", "--preset", "garage", "--n", "3"],
    ["solve", "fig3", "--q", "-2"],
    ["bench", "--n-min", "9", "--n-max", "3"],
    [],
])
def test_usage_errors_exit_1(argv, tmp_path, monkeypatch):
    monkeypatch.setenv("CLUTTERSOLVE_OUT", str(tmp_path))
    assert main(argv) == 1


def test_malformed_scene_exits_1(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text("{ nope")
    assert main(["solve", str(p), "--out", str(tmp_path / "o")]) == 1
    assert "line 1" in capsys.readouterr().err


def test_solve_fig3_writes_logs(tmp_path):
    out = tmp_path / "run"
    assert main(["solve", "fig3", "--predictor", "oracle", "--out", str(out)]) == 0
    lines = (out / "steps.jsonl").read_text().splitlines()
    summary = json.loads(lines[-1])
    assert summary["success"] and summary["graph_adjust_events"] == 1
    assert sorted(os.listdir(out / "graphs")) == ["step_000.dot", "step_001.dot", "step_002.dot"]
    assert json.loads((out / "report.json").read_text())["order"] == [1, 2, 0]


def test_solve_no_ga_exits_2(tmp_path):
    assert main(["solve", "fig3", "--predictor", "oracle", "--variant", "no_ga", "--out", str(tmp_path)]) == 2


def test_out_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("CLUTTERSOLVE_OUT", str(tmp_path / "env"))
    assert main(["gen", "--preset", "food", "--n", "3", "--seed", "1"]) == 0
    assert os.listdir(tmp_path / "env") == ["food_3_1.json"]


def test_bench_small_run(tmp_path, capsys):
    t0 = time.perf_counter()
    rc = main(["bench", "--presets", "desk", "--scenes", "1", "--n-min", "4", "--n-max", "6",
               "--no-direction-metric", "--out", str(tmp_path)])
    assert rc == 0
    assert time.perf_counter() - t0 < 10
    assert (tmp_path / "report.csv").read_text().startswith("preset,variant,metric,mean,stderr,n\n")
    assert (tmp_path / "report.txt").exists()
    assert "full (" in capsys.readouterr().out


def test_inspect_export(tmp_path, capsys):
    assert main(["inspect", "double_occlusion", "--export", str(tmp_path)]) == 0
    assert sorted(os.listdir(tmp_path)) == ["affordance.json", "observation.json", "oracle_graph.dot"]
    assert "oracle support edges: [(0, 1), (0, 2), (0, 3), (2, 3)]" in capsys.readouterr().out
