import json
from pathlib import Path

import numpy as np
import pytest
import yaml
from click.testing import CliRunner

from quadfault.cli import main
from quadfault.container import containers_equal, load_container

TINY_CONFIG = {
    "seed": 3,
    "episode": {"duration": 4.0, "calibration_duration": 12.0, "calibration_trim": 3.0},
    "experiment": {"per_class": 6, "runs": 1},
    "train": {"max_epochs": 2, "patience": 2, "batch_size": 10, "mmd_batch": 4,
              "lambda_mmd": 10.0},
}


@pytest.fixture()
def runner():
    return CliRunner()


@pytest.fixture()
def tiny_config(tmp_path):
    path = tmp_path / "tiny.yaml"
    path.write_text(yaml.safe_dump(TINY_CONFIG))
    return str(path)


def test_unknown_config_key_exits_2(runner, tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("lerning_rate: 3\n")
    result = runner.invoke(main, ["gen", "--config", str(bad), "--domain", "target",
                                  "--out", str(tmp_path / "out")])
    assert result.exit_code == 2


def test_missing_dataset_exits_3(runner, tmp_path):
    result = runner.invoke(main, ["eval", "--checkpoint", str(tmp_path / "nope"),
                                  "--data", str(tmp_path / "nope2")])
    assert result.exit_code == 3


def test_gen_target_writes_dataset_and_resolved_config(runner, tiny_config, tmp_path):
    out = tmp_path / "ds"
    result = runner.invoke(main, ["gen", "--config", tiny_config, "--domain", "target",
                                  "--out", str(out), "--jobs", "1"])
    assert result.exit_code == 0, result.output
    assert "label 1: 6 windows" in result.output
    tensors, meta = load_container(out, kind="dataset")
    assert tensors["windows"].shape == (30, 7, 80)
    assert meta["domain"] == "target"
    resolved = yaml.safe_load((out / "resolved_config.yaml").read_text())
    assert resolved["seed"] == 3
    assert resolved["experiment"]["per_class"] == 6


def test_gen_source_runs_calibration_flow(runner, tiny_config, tmp_path):
    out = tmp_path / "src"
    result = runner.invoke(main, ["gen", "--config", tiny_config, "--domain", "source",
                                  "--out", str(out), "--jobs", "1"])
    assert result.exit_code == 0, result.output
    resolved = yaml.safe_load((out / "resolved_config.yaml").read_text())
    est = resolved["derived"]["estimated_unbalance"]
    assert est["rho"][0] == 1.0
    assert len(est["rho"]) == 4


def test_gen_is_deterministic(runner, tiny_config, tmp_path):
    for name in ("a", "b"):
        result = runner.invoke(main, ["gen", "--config", tiny_config, "--domain", "target",
                                      "--out", str(tmp_path / name), "--jobs", "1"])
        assert result.exit_code == 0, result.output
    assert containers_equal(tmp_path / "a", tmp_path / "b")


def test_train_eval_roundtrip(runner, tiny_config, tmp_path):
    src = tmp_path / "src"
    assert runner.invoke(main, ["gen", "--config", tiny_config, "--domain", "source",
                                "--out", str(src), "--jobs", "1"]).exit_code == 0
    ckpt = tmp_path / "ckpt"
    result = runner.invoke(main, ["train", "--config", tiny_config, "--source", str(src),
                                  "--out", str(ckpt)])
    assert result.exit_code == 0, result.output
    assert "source accuracy" in result.output
    reported = float(result.output.split("source accuracy")[1].split(";")[0])

    result = runner.invoke(main, ["eval", "--checkpoint", str(ckpt), "--data", str(src)])
    assert result.exit_code == 0, result.output
    evaluated = float(result.output.splitlines()[0].split(":")[1])
    assert evaluated == pytest.approx(reported, abs=1e-4)


def test_experiment_emits_summary_and_datasets(runner, tiny_config, tmp_path):
    out = tmp_path / "exp"
    result = runner.invoke(main, ["experiment", "--config", tiny_config,
                                  "--out", str(out), "--jobs", "1"])
    assert result.exit_code == 0, result.output
    summary = json.loads((out / "summary.json").read_text())
    assert set(summary["aggregates"]) == {"CF", "NIF", "NIF+DA"}
    assert len(summary["records"]) == 3
    assert (out / "summary.txt").exists()
    assert (out / "resolved_config.yaml").exists()
    for variant in ("nif", "cf"):
        for domain in ("source", "target"):
            assert (out / f"dataset_{variant}_{domain}" / "manifest.json").exists()
    # wall-clock timings never enter the persisted summary (reproducibility)
    assert "wall_time" not in json.dumps(summary)


def test_export_features_documented_layout(runner, tiny_config, tmp_path):
    src = tmp_path / "src"
    runner.invoke(main, ["gen", "--config", tiny_config, "--domain", "source",
                         "--out", str(src), "--jobs", "1"])
    tgt = tmp_path / "tgt"
    runner.invoke(main, ["gen", "--config", tiny_config, "--domain", "target",
                         "--out", str(tgt), "--jobs", "1"])
    ckpt = tmp_path / "ckpt"
    runner.invoke(main, ["train", "--config", tiny_config, "--source", str(src),
                         "--out", str(ckpt)])
    feats = tmp_path / "feats"
    result = runner.invoke(main, ["export-features", "--checkpoint", str(ckpt),
                                  "--data", str(src), "--data", str(tgt),
                                  "--out", str(feats)])
    assert result.exit_code == 0, result.output

    # parse the container from its documented layout alone: manifest + raw files
    manifest = json.loads((feats / "manifest.json").read_text())
    entry = manifest["tensors"]["features"]
    raw = (feats / entry["file"]).read_bytes()
    arr = np.frombuffer(raw, dtype="<f4").reshape(entry["shape"])
    assert arr.shape == (60, 128)
    labels = np.frombuffer((feats / manifest["tensors"]["labels"]["file"]).read_bytes(),
                           dtype="<i4")
    assert sorted(set(labels.tolist())) == [1, 2, 3, 4, 5]
