import json
from pathlib import Path

import pytest

from chainworld_finetune import Artifact, TrainSpec, exact_match, train
from chainworld_finetune.cli import dispatch
from conftest import PAIRS_PATH


class TestTrainSpec:
    def test_validates_epochs_and_lr(self):
        with pytest.raises(ValueError):
            TrainSpec(pairs_path="x", direction="effect", output_dir="y", epochs=0)
        with pytest.raises(ValueError):
            TrainSpec(pairs_path="x", direction="effect", output_dir="y", learning_rate=0)

    def test_reference_defaults(self):
        spec = TrainSpec(pairs_path="x", direction="effect", output_dir="y")
        assert spec.base_model == "google/flan-t5-large"
        assert spec.learning_rate == 5e-5
        assert spec.epochs == 50
        assert spec.batch_size == 8


class TestTraining:
    def test_loss_decreases_at_default_recipe(self, tmp_path):
        result = train(
            TrainSpec(
                pairs_path=str(PAIRS_PATH),
                direction="precondition",
                output_dir=str(tmp_path / "out"),
                base_model="tiny",
                seed=1,
            )
        )
        assert len(result.train_losses) == 50
        assert result.train_losses[-1] < result.train_losses[0]
        assert len(result.holdout_losses) == 50  # one pair monitored

    def test_artifact_contents(self, overfit_dir):
        root = Path(overfit_dir)
        assert (root / "model").is_dir()
        assert (root / "tokenizer.json").is_file()
        assert (root / "meta.json").is_file()
        log = json.loads((root / "training_log.json").read_text())
        assert len(log["train_loss"]) == 200
        assert log["holdout_loss"] == []

    def test_overfit_reproduces_targets(self, overfit_dir, toy_pairs):
        score = exact_match(overfit_dir, toy_pairs)
        assert score >= 0.95, f"memorization reached only {score:.0%}"

    def test_greedy_decoding_is_deterministic(self, overfit_dir, toy_pairs):
        artifact = Artifact(overfit_dir)
        text = toy_pairs[0].input
        assert artifact.generate(text) == artifact.generate(text)

    def test_malformed_pairs_file_fails(self, tmp_path):
        path = tmp_path / "broken.jsonl"
        path.write_text("{oops}\n", encoding="utf-8")
        with pytest.raises(Exception, match="line 1"):
            train(
                TrainSpec(
                    pairs_path=str(path),
                    direction="effect",
                    output_dir=str(tmp_path / "out"),
                    base_model="tiny",
                    epochs=1,
                )
            )

    def test_missing_artifact_rejected(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            Artifact(tmp_path / "nowhere")


class TestCli:
    def test_train_subcommand(self, tmp_path):
        out = tmp_path / "cli-model"
        code = dispatch([
            "train", "--pairs", str(PAIRS_PATH), "--direction", "precondition",
            "--out", str(out), "--base-model", "tiny", "--epochs", "2",
            "--batch-size", "8", "--seed", "3",
        ])
        assert code == 0
        assert (out / "model").is_dir()

    def test_usage_error_exit_2(self):
        assert dispatch(["train", "--nope"]) == 2

    def test_runtime_error_exit_1(self, tmp_path):
        code = dispatch([
            "train", "--pairs", str(tmp_path / "absent.jsonl"), "--direction", "effect",
            "--out", str(tmp_path / "out"), "--base-model", "tiny",
        ])
        assert code == 1

    def test_serve_missing_artifact_exit_1(self, tmp_path):
        code = dispatch(["serve", "--model-dir", str(tmp_path / "ghost"), "--port", "18123"])
        assert code == 1
