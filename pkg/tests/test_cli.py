import json
import os

import numpy as np
import pytest

from dloshape.cli import main
from dloshape.dataset_io import load_dataset
from dloshape.policy_file import load_policy


@pytest.fixture(scope="module")
def tiny_dataset_dir(tmp_path_factory):
    out = str(tmp_path_factory.mktemp("cli") / "ds")
    code = main(["collect", "--episodes", "6", "--material", "soft",
                 "--seed", "3", "--out", out])
    assert code == 0
    return out


class TestCollectAugment:
    def test_collect_wrote_dataset(self, tiny_dataset_dir):
        ds = load_dataset(tiny_dataset_dir)
        assert len(ds) == 6
        assert ds.manifest["material"] == "soft"

    def test_augment(self, tiny_dataset_dir, tmp_path):
        out = str(tmp_path / "aug")
        code = main(["augment", "--in", tiny_dataset_dir, "--mode", "intra",
                     "--ratio", "2", "--seed", "1", "--out", out])
        assert code == 0
        ds = load_dataset(out)
        assert len(ds) == 12
        assert ds.manifest["augmentation"] == {"mode": "intra", "ratio": 2, "seed": 1}

    def test_bad_mode_is_config_error(self, tiny_dataset_dir, tmp_path):
        code = main(["augment", "--in", tiny_dataset_dir, "--mode", "intra",
                     "--ratio", "0", "--seed", "1", "--out", str(tmp_path / "x")])
        assert code == 2

    def test_missing_dataset_is_config_error(self, tmp_path):
        code = main(["augment", "--in", str(tmp_path / "absent"), "--mode", "intra",
                     "--ratio", "2", "--seed", "1", "--out", str(tmp_path / "x")])
        assert code == 2


class TestTrainEval:
    def test_train_then_eval_policy(self, tiny_dataset_dir, tmp_path):
        policy = str(tmp_path / "tiny.dlop")
        code = main(["train", "--data", tiny_dataset_dir, "--steps", "30",
                     "--seed", "5", "--batch-size", "16", "--dtype", "float32",
                     "--alpha", "2.5", "--out", policy])
        assert code == 0
        params = load_policy(policy)
        assert params.actor.dtype == np.float32

        out = str(tmp_path / "evalp")
        code = main(["eval", "--policy", policy, "--material", "soft",
                     "--seed", "0", "--out", out])
        assert code == 0
        report = json.load(open(os.path.join(out, "report.json")))
        assert len(report["finals"]) == 8

    def test_eval_baseline_artifacts(self, tmp_path):
        out = str(tmp_path / "evalb")
        code = main(["eval", "--baseline", "k=1", "--material", "soft",
                     "--seed", "0", "--out", out])
        assert code == 0
        files = os.listdir(out)
        assert "metrics.csv" in files and "summary.csv" in files
        assert sum(1 for f in files if f.endswith(".svg")) == 8
        report = json.load(open(os.path.join(out, "report.json")))
        assert report["runner"] == "baseline"

    def test_bad_baseline_spec_is_config_error(self, tmp_path):
        code = main(["eval", "--baseline", "zeta=3", "--seed", "0",
                     "--out", str(tmp_path / "x")])
        assert code == 2


class TestGoals:
    def test_goals_json(self, tmp_path):
        out = str(tmp_path / "goals.json")
        code = main(["goals", "--seed", "2", "--material", "soft", "--out", out])
        assert code == 0
        payload = json.load(open(out))
        assert payload["tags"].count("convex") == 3
        assert len(payload["goals"]) == 8
        assert np.asarray(payload["goals"][0]).shape == (18, 2)
