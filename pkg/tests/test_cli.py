import json
import os

import numpy as np
import pytest

from confbandit import policy
from confbandit.cli import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, MANIFEST_FORMAT, main
from confbandit.data import generate_bucketed_dataset, write_dataset


def run_cli(*argv):
    return main(list(argv))


def test_usage_errors_exit_1(capsys):
    assert run_cli() == EXIT_USAGE
    assert run_cli("bogus-command") == EXIT_USAGE
    assert run_cli("train") == EXIT_USAGE  # missing --dataset
    assert run_cli("infer", "--checkpoint", "x.json") == EXIT_USAGE  # no question/dataset
    capsys.readouterr()


def test_runtime_errors_exit_2(tmp_path, capsys):
    # missing dataset file
    rc = run_cli("train", "--dataset", str(tmp_path / "nope.jsonl"), "--out", str(tmp_path / "o"))
    assert rc == EXIT_RUNTIME
    # malformed dataset
    bad = tmp_path / "bad.jsonl"
    bad.write_text("not json\n")
    rc = run_cli("train", "--dataset", str(bad), "--out", str(tmp_path / "o2"))
    assert rc == EXIT_RUNTIME
    capsys.readouterr()


def test_simulate_writes_artifacts(tmp_path, capsys):
    out = tmp_path / "run"
    rc = run_cli(
        "simulate", "--out", str(out), "--questions", "24", "--holdout", "8",
        "--trials", "2", "--seed", "3", "--buckets", "2", "--width", "64",
        "--snapshot-every", "16",
    )
    assert rc == EXIT_OK
    for name in ("manifest.json", "checkpoint.json", "transitions.csv", "regret.csv", "summary.json"):
        assert (out / name).exists(), name
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["format"] == MANIFEST_FORMAT
    assert manifest["backend"] in ("cython", "python")
    summary = json.loads((out / "summary.json").read_text())
    assert summary["steps"] == 48
    assert 0.0 <= summary["holdout_accuracy"] <= 1.0
    assert "cumulative_regret" in summary
    capsys.readouterr()


def test_simulate_manifest_replay_is_byte_identical(tmp_path, capsys):
    out1 = tmp_path / "a"
    out2 = tmp_path / "b"
    rc = run_cli("simulate", "--out", str(out1), "--questions", "20", "--holdout", "5",
                 "--trials", "2", "--seed", "11", "--buckets", "2", "--width", "64")
    assert rc == EXIT_OK
    rc = run_cli("simulate", "--out", str(out2), "--manifest", str(out1 / "manifest.json"))
    assert rc == EXIT_OK
    for name in ("transitions.csv", "regret.csv"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name
    ck1 = policy.checkpoint_load((out1 / "checkpoint.json").read_bytes())
    ck2 = policy.checkpoint_load((out2 / "checkpoint.json").read_bytes())
    np.testing.assert_array_equal(
        policy.flatten_struct(ck1[0]), policy.flatten_struct(ck2[0])
    )
    capsys.readouterr()


def test_train_then_infer(tmp_path, capsys):
    ds = tmp_path / "ds.jsonl"
    write_dataset(generate_bucketed_dataset(16, 2), str(ds))
    out = tmp_path / "train_out"
    rc = run_cli("train", "--dataset", str(ds), "--out", str(out),
                 "--trials", "2", "--seed", "0", "--buckets", "2", "--width", "64")
    assert rc == EXIT_OK
    ckpt = out / "checkpoint.json"
    assert ckpt.exists()
    capsys.readouterr()

    rc = run_cli("infer", "--checkpoint", str(ckpt), "--question", "alpha alpha 3", "--json")
    assert rc == EXIT_OK
    line = capsys.readouterr().out.strip()
    doc = json.loads(line)
    assert {"instruction_index", "temperature", "steps"} <= set(doc)

    rc = run_cli("infer", "--checkpoint", str(ckpt), "--dataset", str(ds))
    assert rc == EXIT_OK
    text = capsys.readouterr().out
    assert len(text.strip().splitlines()) == 16


def test_infer_missing_checkpoint_exits_2(tmp_path, capsys):
    rc = run_cli("infer", "--checkpoint", str(tmp_path / "none.json"), "--question", "q")
    assert rc == EXIT_RUNTIME
    capsys.readouterr()


def test_analyze_recomputes_from_run(tmp_path, capsys):
    out = tmp_path / "run"
    rc = run_cli("simulate", "--out", str(out), "--questions", "20", "--holdout", "5",
                 "--trials", "2", "--seed", "1", "--buckets", "2", "--width", "64")
    assert rc == EXIT_OK
    regret_before = (out / "regret.csv").read_bytes()
    an = tmp_path / "analysis"
    rc = run_cli("analyze", "--run", str(out), "--out", str(an))
    assert rc == EXIT_OK
    assert (an / "regret.csv").read_bytes() == regret_before
    doc = json.loads((an / "summary.json").read_text())
    assert "cumulative_regret" in doc
    capsys.readouterr()


def test_analyze_rejects_missing_run(tmp_path, capsys):
    rc = run_cli("analyze", "--run", str(tmp_path / "ghost"))
    assert rc == EXIT_RUNTIME
    capsys.readouterr()


def test_train_config_file_with_flag_override(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"learning_rate": 0.02, "trials_per_question": 2, "seed": 4}))
    ds = tmp_path / "ds.jsonl"
    write_dataset(generate_bucketed_dataset(8, 2), str(ds))
    out = tmp_path / "o"
    rc = run_cli("train", "--dataset", str(ds), "--out", str(out),
                 "--config", str(cfg), "--lr", "0.03", "--buckets", "2", "--width", "64")
    assert rc == EXIT_OK
    ck = json.loads((out / "checkpoint.json").read_text())
    train_meta = ck["metadata"]["train"]
    assert train_meta["learning_rate"] == 0.03  # flag wins
    assert train_meta["trials_per_question"] == 2  # file survives
    capsys.readouterr()
