"""Command-line interface tests (in-process via main, plus the entry point)."""

import json
import subprocess
import sys

import pytest

from safeteleop.cli import main
from safeteleop.dynamics import State
from safeteleop.world import default_scenario


def _run(capsys, argv):
    code = main(argv)
    out = capsys.readouterr().out.strip().splitlines()
    return code, out


def test_simulate_safe_exit_and_logs(tmp_path, capsys):
    out_dir = tmp_path / "logs"
    code, lines = _run(capsys, [
        "simulate", "--driver", "rammer", "--seeds", "2",
        "--duration", "3.0", "--out", str(out_dir),
    ])
    assert code == 0
    config = json.loads(lines[0])  # resolved config printed first
    assert config["command"] == "simulate"
    report = json.loads(lines[-1])
    assert report["episodes"] == 2 and report["min_h"] >= -1e-3
    assert len(list(out_dir.glob("episode_*.jsonl"))) == 2


def test_collect_train_eval_pipeline(tmp_path, capsys):
    ds_path = tmp_path / "ds.jsonl"
    code, lines = _run(capsys, ["collect", "--episodes", "4", "--out", str(ds_path)])
    assert code == 0
    assert json.loads(lines[-1])["rows"] > 0

    # shrink the dataset (first 120 ticks of each episode) to keep training fast
    lines = ds_path.read_text().splitlines()
    hdr = json.loads(lines[0])
    hdr["val_episodes"] = [0]
    kept = [json.dumps(hdr)]
    kept += [l for l in lines[1:] if json.loads(l)["tick"] < 120]
    small = tmp_path / "small.jsonl"
    small.write_text("\n".join(kept) + "\n")

    model_path = tmp_path / "m.npz"
    code, lines = _run(capsys, [
        "train", "--dataset", str(small), "--out", str(model_path),
        "--epochs", "1", "--batch-size", "64", "--label-shift", "0",
    ])
    assert code == 0
    rep = json.loads(lines[-1])
    assert rep["epochs_run"] == 1 and model_path.exists()

    code, lines = _run(capsys, [
        "eval", "--dataset", str(small), "--model", str(model_path),
        "--label-shift", "0",
    ])
    assert code == 0
    rep = json.loads(lines[-1])
    assert 0.0 <= rep["accuracy"] <= 1.0
    assert len(rep["confusion"]) == 3


def test_train_min_accuracy_gate(tmp_path, capsys):
    ds_path = tmp_path / "ds.jsonl"
    _run(capsys, ["collect", "--episodes", "2", "--out", str(ds_path)])
    model_path = tmp_path / "m.npz"
    code, lines = _run(capsys, [
        "train", "--dataset", str(ds_path), "--out", str(model_path),
        "--epochs", "1", "--min-accuracy", "1.01",
    ])
    assert code == 1  # impossible bar: command reports failure


def test_replay_identical(tmp_path, capsys):
    out_dir = tmp_path / "logs"
    _run(capsys, ["simulate", "--driver", "orbiter", "--seeds", "1",
                  "--duration", "2.0", "--out", str(out_dir)])
    log = next(out_dir.glob("episode_*.jsonl"))
    code, lines = _run(capsys, ["replay", "--log", str(log)])
    assert code == 0
    rep = json.loads(lines[-1])
    assert rep["identical"] is True and rep["first_diff_tick"] is None


def test_scenario_file_used(tmp_path, capsys):
    sc = default_scenario(start=State(-2.0, -0.8, 0.5), initial_policy=1)
    p = tmp_path / "sc.json"
    sc.save(p)
    code, lines = _run(capsys, [
        "simulate", "--scenario", str(p), "--driver", "orbiter",
        "--seeds", "1", "--duration", "1.0",
    ])
    assert code == 0


def test_bad_input_is_reported_not_raised(tmp_path, capsys):
    code = main(["replay", "--log", str(tmp_path / "missing.jsonl")])
    assert code == 2


def test_bad_subcommand_exits():
    with pytest.raises(SystemExit):
        main(["not-a-command"])


def test_module_entry_point():
    out = subprocess.run(
        [sys.executable, "-m", "safeteleop.cli", "--help"],
        capture_output=True, text=True, timeout=60,
    )
    assert out.returncode == 0
    for sub in ("simulate", "collect", "train", "eval", "replay", "serve", "verify"):
        assert sub in out.stdout
