import json
import os

import pytest

import importance_arq_pipeline as pipeline
from src.config.presets import PRESETS, get_preset, validate_presets
from src.errors import ConfigError

SYNTHETIC = ["--preset", "synthetic-svm-binary", "--desk-scale", "--budget", "60", "--quiet"]


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    for name in ("IMPORTANCE_ARQ_MNIST_DIR", "IMPORTANCE_ARQ_OUTPUT_DIR", "IMPORTANCE_ARQ_WORKERS", "DEBUG_MODE"):
        monkeypatch.delenv(name, raising=False)


def read(path):
    with open(path, "rb") as f:
        return f.read()


def test_presets_validate():
    assert set(PRESETS) >= {"binary-svm-balanced", "multiclass-svm", "softmax-entropy",
                            "imbalanced-svm", "imbalanced-softmax"}
    assert all(not errors for errors in validate_presets().values())
    with pytest.raises(ConfigError):
        get_preset("nope")


def test_importance_policy_follows_the_model():
    assert get_preset("binary-svm-balanced").resolve()[0].arq.policy_kind == "importance_svm_binary"
    assert get_preset("multiclass-svm").resolve()[0].arq.policy_kind == "importance_svm_multiclass"
    assert get_preset("softmax-entropy").resolve()[0].arq.policy_kind == "importance_entropy"
    desk, _ = get_preset("multiclass-svm").resolve(desk_scale=True)
    assert desk.repetitions == 3 and desk.budget_blocks == 4000


@pytest.mark.parametrize("name", ["softmax-entropy", "imbalanced-softmax", "synthetic-softmax-entropy"])
def test_entropy_floor_sits_below_the_channel_threshold(name):
    importance = get_preset(name).resolve("importance")[0].arq
    channel = get_preset(name).resolve("channel")[0].arq
    assert importance.conversion_ratio < channel.max_snr_threshold < importance.max_snr_threshold


def test_synthetic_smoke_run(tmp_path):
    out = tmp_path / "out"
    assert pipeline.parse_and_run([*SYNTHETIC, "--seed", "7", "--reps", "1", "--out", str(out)]) == 0
    stem = out / "importance_svm_binary_svm_binary_7"
    for suffix in ("_curve.csv", "_decisions.csv", ".json"):
        assert os.path.exists(f"{stem}{suffix}")
    with open(f"{stem}_decisions.csv", encoding="utf-8") as f:
        assert f.readline().strip() == "round,sample_id,label,T,uncertainty,threshold,snr,decision"


def test_snr_is_recorded_linear(tmp_path):
    out = tmp_path / "out"
    assert pipeline.parse_and_run([*SYNTHETIC, "--seed", "1", "--reps", "1", "--snr-db", "4", "--out", str(out)]) == 0
    with open(out / "importance_svm_binary_svm_binary_1.json", encoding="utf-8") as f:
        echo = json.load(f)
    assert echo["config"]["simulation"]["channel"]["transmit_power"] == pytest.approx(2.5119, abs=1e-4)
    assert echo["header"]["average_snr_db"] == pytest.approx(4.0)


def test_config_echo_reproduces_the_run(tmp_path):
    first = tmp_path / "first"
    assert pipeline.parse_and_run([*SYNTHETIC, "--seed", "5", "--reps", "1", "--out", str(first)]) == 0
    stem = "importance_svm_binary_svm_binary_5"
    second = tmp_path / "second"
    code = pipeline.parse_and_run(["--config", str(first / f"{stem}.json"), "--out", str(second), "--quiet"])
    assert code == 0
    for suffix in ("_curve.csv", "_decisions.csv", ".json"):
        assert read(first / f"{stem}{suffix}") == read(second / f"{stem}{suffix}")


def test_mnist_preset_with_repetitions(fake_mnist_dir, tmp_path):
    out = tmp_path / "out"
    code = pipeline.parse_and_run([
        "--preset", "binary-svm-balanced", "--desk-scale", "--seed", "7", "--mnist", fake_mnist_dir,
        "--budget", "40", "--reps", "2", "--out", str(out), "--quiet",
    ])
    assert code == 0
    names = os.listdir(out)
    assert "importance_svm_binary_svm_binary_aggregate_curve.csv" in names
    assert sum(name.endswith("_decisions.csv") for name in names) == 2


def test_mnist_dir_from_environment(fake_mnist_dir, tmp_path, monkeypatch):
    monkeypatch.setenv("IMPORTANCE_ARQ_MNIST_DIR", fake_mnist_dir)
    code = pipeline.parse_and_run([
        "--preset", "imbalanced-svm", "--policy", "channel", "--budget", "30", "--reps", "1",
        "--out", str(tmp_path), "--quiet",
    ])
    assert code == 0
    assert os.path.exists(tmp_path / "channel_aware_svm_imbalanced_0_curve.csv")


def test_threshold_sweep_writes_one_directory_per_value(tmp_path):
    code = pipeline.parse_and_run([*SYNTHETIC, "--reps", "1", "--pc", "0.7,0.9", "--out", str(tmp_path)])
    assert code == 0
    assert sorted(os.listdir(tmp_path)) == ["pc0.7", "pc0.9"]


def test_invalid_alignment_probability(tmp_path, capsys):
    assert pipeline.parse_and_run([*SYNTHETIC, "--pc", "0.3", "--out", str(tmp_path)]) == 2
    assert "alignment_probability" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ["--preset", "synthetic-svm-binary", "--config", "x.json"],
    ["--policy", "channel"],
    ["--preset", "synthetic-svm-binary", "--policy", "channel", "--pc", "0.8"],
    ["--preset", "synthetic-svm-binary", "--fixed-transmissions", "3"],
    ["--preset", "synthetic-svm-binary", "--unknown-flag"],
    ["--preset", "not-a-preset"],
])
def test_usage_errors(argv):
    assert pipeline.parse_and_run(argv) == 2


def test_missing_mnist_path(tmp_path, capsys):
    code = pipeline.parse_and_run(["--preset", "binary-svm-balanced", "--out", str(tmp_path), "--quiet"])
    assert code == 2
    assert "MNIST" in capsys.readouterr().err


def test_bad_environment_is_a_config_error(monkeypatch, tmp_path):
    monkeypatch.setenv("IMPORTANCE_ARQ_WORKERS", "many")
    assert pipeline.parse_and_run([*SYNTHETIC, "--out", str(tmp_path)]) == 2


def test_binary_policy_on_multiclass_config_is_a_config_error(small_simulation, four_blobs_spec, tmp_path, capsys):
    path = tmp_path / "echo.json"
    path.write_text(json.dumps({"config": {
        "simulation": small_simulation.model_dump(mode="json"),
        "dataset": four_blobs_spec.model_dump(mode="json"),
    }}))
    code = pipeline.parse_and_run(["--config", str(path), "--out", str(tmp_path / "out"), "--quiet"])
    assert code == 2
    assert "importance_svm_binary" in capsys.readouterr().err


def test_corrupt_mnist_is_a_runtime_error(fake_mnist_dir, tmp_path):
    with open(os.path.join(fake_mnist_dir, "train-labels-idx1-ubyte"), "r+b") as f:
        f.write(b"\x00\x00\x00\x00")
    code = pipeline.parse_and_run([
        "--preset", "binary-svm-balanced", "--mnist", fake_mnist_dir, "--reps", "1", "--out", str(tmp_path), "--quiet",
    ])
    assert code == 1


def test_fixed_policy_flag(tmp_path):
    code = pipeline.parse_and_run([*SYNTHETIC, "--reps", "1", "--policy", "fixed", "--fixed-transmissions", "2",
                                   "--seed", "0", "--out", str(tmp_path)])
    assert code == 0
    with open(tmp_path / "fixed_repetition_svm_binary_0.json", encoding="utf-8") as f:
        summary = json.load(f)["summary"]
    assert summary["mean_transmissions"] == 2.0
