"""命令行: 退出码、文件输出、端到端流程"""

import json

import numpy as np
import pandas as pd
import pytest

from app.main import EXIT_CALIBRATION, EXIT_INVALID, EXIT_OK, configs_from_dict, main
from core.dataset_io import dataset_bytes, read_dataset, read_model, read_truth, write_dataset
from core.errors import ConfigError
from core.estimation import LabeledData

SMALL = {
    "config_id": "cli",
    "shape": [5, 4, 3],
    "ranks": [2, 2, 2],
    "snr": 6.0,
    "n_train": 240,
    "n_test": 300,
    "reps": 2,
    "seed": 5,
    "methods": ["T-LDA", "T-LDA-NP", "Oracle"],
}


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "small.json"
    path.write_text(json.dumps(SMALL), encoding="utf-8")
    return path


@pytest.fixture
def dataset(tmp_path, small_config):
    path = tmp_path / "train.tnpd"
    assert main(["-q", "gen", "--config", str(small_config), "-o", str(path)]) == EXIT_OK
    return path


class TestSimulate:

    def test_outputs_reproducible_and_verified(self, tmp_path, small_config):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert main(["-q", "simulate", "--config", str(small_config), "--workers", "1", "-o", str(out_a)]) == EXIT_OK
        assert main(["-q", "simulate", "--config", str(small_config), "--workers", "2", "-o", str(out_b)]) == EXIT_OK
        for name in ("detail.csv", "aggregate.csv"):
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()
        detail = pd.read_csv(out_a / "detail.csv")
        assert len(detail) == 3 * 2
        assert main(["-q", "verify", "-o", str(out_a)]) == EXIT_OK

    @pytest.mark.slow
    def test_eight_workers_byte_identical(self, tmp_path):
        path = tmp_path / "eight.json"
        path.write_text(json.dumps({**SMALL, "reps": 8}), encoding="utf-8")
        outputs = []
        for workers in ("1", "2", "8"):
            out = tmp_path / f"w{workers}"
            assert main(["-q", "simulate", "--config", str(path), "--workers", workers, "-o", str(out)]) == EXIT_OK
            outputs.append([(out / name).read_bytes() for name in ("detail.csv", "aggregate.csv")])
        assert outputs[0] == outputs[1] == outputs[2]
        assert len(pd.read_csv(tmp_path / "w8" / "detail.csv")) == 8 * 3

    def test_unknown_example(self, tmp_path, capsys):
        assert main(["simulate", "--example", "ex9", "-o", str(tmp_path)]) == EXIT_INVALID
        assert "unknown example" in capsys.readouterr().err

    def test_unknown_key_named(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({**SMALL, "learning_rate": 1}), encoding="utf-8")
        assert main(["simulate", "--config", str(path), "-o", str(tmp_path / "o")]) == EXIT_INVALID
        assert "learning_rate" in capsys.readouterr().err

    def test_calibration_failure_exit_code(self, tmp_path):
        path = tmp_path / "tiny.json"
        path.write_text(json.dumps({**SMALL, "n_train": 60}), encoding="utf-8")
        code = main(["-q", "simulate", "--config", str(path), "--workers", "1", "-o", str(tmp_path / "o")])
        assert code == EXIT_CALIBRATION


class TestConfigFile:

    def test_n_train_list_expands(self):
        configs = configs_from_dict({**SMALL, "n_train": [200, 400]})
        assert [c.config_id for c in configs] == ["cli-n200", "cli-n400"]

    def test_example_mode_overrides(self):
        configs = configs_from_dict({"example": "ex1", "reps": 3, "methods": ["t-lda"]}, seed_override=9)
        assert len(configs) == 6
        assert all(c.reps == 3 and c.methods == ("T-LDA",) and c.base_seed == 9 for c in configs)

    def test_bad_nn_key(self):
        with pytest.raises(ConfigError) as info:
            configs_from_dict({**SMALL, "nn": {"dropout": 0.5}})
        assert info.value.key == "nn.dropout"


class TestGenFitPredict:

    def test_gen(self, tmp_path, small_config, dataset):
        data = read_dataset(dataset)
        assert data.counts() == (120, 120)
        truth = read_truth(str(dataset) + ".truth.json")
        assert np.linalg.norm(truth["discriminant"]) == pytest.approx(6.0)
        again = tmp_path / "again.tnpd"
        assert main(["-q", "gen", "--config", str(small_config), "-o", str(again)]) == EXIT_OK
        assert again.read_bytes() == dataset.read_bytes()

    def test_fit_predict_round_trip(self, tmp_path, dataset):
        model_path = tmp_path / "m.tnpm"
        pred_path = tmp_path / "p.csv"
        assert main(["-q", "fit", str(dataset), "--method", "t-lda-np", "--ranks", "2,2,2",
                     "-o", str(model_path)]) == EXIT_OK
        assert main(["-q", "predict", str(model_path), str(dataset), "-o", str(pred_path)]) == EXIT_OK
        model = read_model(model_path)
        data = read_dataset(dataset)
        pred = pd.read_csv(pred_path)
        assert list(pred.columns) == ["index", "score", "label"]
        np.testing.assert_array_equal(pred["label"].to_numpy(), model.predict(data.tensors))
        np.testing.assert_array_equal(pred["score"].to_numpy(), model.score(data.tensors))

    def test_vlda_and_tlda(self, tmp_path, dataset):
        assert main(["-q", "fit", str(dataset), "--method", "v-lda", "-o", str(tmp_path / "v.tnpm")]) == EXIT_OK
        assert main(["-q", "fit", str(dataset), "--method", "T-LDA", "--ranks", "2,2,2",
                     "-o", str(tmp_path / "t.tnpm")]) == EXIT_OK
        assert read_model(tmp_path / "t.tnpm").inclusive

    def test_benchmark_levels(self, tmp_path, dataset):
        out = tmp_path / "bench"
        assert main(["-q", "benchmark", str(dataset), "--method", "T-LDA,V-LDA", "--alpha", "0.05,0.1",
                     "--ranks", "2,2,2", "--reps", "2", "-o", str(out)]) == EXIT_OK
        aggregate = pd.read_csv(out / "aggregate.csv")
        assert sorted(set(aggregate["config_id"])) == ["train-a0.05-d0.1", "train-a0.1-d0.1"]
        assert len(aggregate) == 4
        assert len(pd.read_csv(out / "detail.csv")) == 8
        assert main(["-q", "verify", "-o", str(out)]) == EXIT_OK

    def test_ranks_exceed_dims(self, tmp_path, dataset, capsys):
        code = main(["fit", str(dataset), "--method", "t-lda", "--ranks", "2,9,2", "-o", str(tmp_path / "m")])
        assert code == EXIT_INVALID
        assert "mode 2" in capsys.readouterr().err

    @pytest.mark.parametrize("method", ["t-lda", "t-lda-np", "v-lda", "t-nn", "t-nn-np"])
    @pytest.mark.parametrize("label", [0, 1])
    def test_single_class(self, tmp_path, capsys, method, label):
        gen = np.random.default_rng(label)
        path = tmp_path / "one.tnpd"
        write_dataset(path, LabeledData(gen.standard_normal((200, 2, 2)), np.full(200, label)))
        code = main(["fit", str(path), "--method", method, "--ranks", "1,1", "-o", str(tmp_path / "m")])
        assert code == EXIT_INVALID
        assert "n_0=" in capsys.readouterr().err
        assert not (tmp_path / "m").exists()

    def test_calibration_too_small(self, tmp_path, capsys):
        gen = np.random.default_rng(0)
        path = tmp_path / "few.tnpd"
        write_dataset(path, LabeledData.from_classes(gen.standard_normal((60, 3, 3)),
                                                     gen.standard_normal((60, 3, 3)) + 1))
        code = main(["fit", str(path), "--method", "t-lda-np", "--ranks", "2,2", "-o", str(tmp_path / "m")])
        assert code == EXIT_CALIBRATION
        assert "45" in capsys.readouterr().err

    def test_predict_empty(self, tmp_path, dataset):
        model_path = tmp_path / "m.tnpm"
        assert main(["-q", "fit", str(dataset), "--method", "v-lda", "-o", str(model_path)]) == EXIT_OK
        empty = tmp_path / "empty.tnpd"
        write_dataset(empty, LabeledData(np.zeros((0, 5, 4, 3)), np.zeros(0)))
        out = tmp_path / "p.csv"
        assert main(["-q", "predict", str(model_path), str(empty), "-o", str(out)]) == EXIT_OK
        assert out.read_text() == "index,score,label\n"

    def test_predict_truncated(self, tmp_path, dataset, capsys):
        model_path = tmp_path / "m.tnpm"
        assert main(["-q", "fit", str(dataset), "--method", "v-lda", "-o", str(model_path)]) == EXIT_OK
        broken = tmp_path / "broken.tnpd"
        broken.write_bytes(dataset.read_bytes()[:-3])
        assert main(["predict", str(model_path), str(broken), "-o", str(tmp_path / "p.csv")]) == EXIT_INVALID
        assert "file length mismatch" in capsys.readouterr().err

    def test_predict_shape_mismatch(self, tmp_path, dataset):
        model_path = tmp_path / "m.tnpm"
        assert main(["-q", "fit", str(dataset), "--method", "v-lda", "-o", str(model_path)]) == EXIT_OK
        other = tmp_path / "other.tnpd"
        other.write_bytes(dataset_bytes(LabeledData(np.zeros((2, 3, 3)), np.array([0, 1]))))
        assert main(["-q", "predict", str(model_path), str(other), "-o", str(tmp_path / "p.csv")]) == EXIT_INVALID
