import json

import numpy as np
import pytest

from penn.cli import main
from penn.experiment import preset_config, run_experiment
from penn.io import ExperimentConfig, read_dataset

TINY = {
    "model": "model1", "d": 3, "n_train": 120, "n_val": 60, "n_test": 60, "repetitions": 2,
    "width": 6, "embedding_dim": 2,
    "train": {"warm_epochs": 1, "max_epochs": 3, "lambda_grid": [0.4, 0.8]},
}


def write(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


def run_cli(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


class TestSimulate:
    def test_rows_and_determinism(self, tmp_path, capsys):
        for name in ("a", "b"):
            code, _, _ = run_cli(["simulate", "--model", "model1", "--d", "4", "--n", "100", "--seed", "7",
                                  "--out", str(tmp_path / name)], capsys)
            assert code == 0
        a = (tmp_path / "a" / "dataset.csv").read_bytes()
        assert a == (tmp_path / "b" / "dataset.csv").read_bytes()
        assert len(a.decode().splitlines()) == 101
        manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
        assert manifest["seed"] == 7 and manifest["model"] == "model1"

    def test_model2_mechanism(self, tmp_path, capsys):
        run_cli(["simulate", "--model", "model2", "--d", "3", "--n", "500", "--out", str(tmp_path)], capsys)
        x, om, _ = read_dataset(tmp_path / "dataset.csv")
        obs = om[:, 1] == 1
        assert np.all(x[obs, 1] <= 0.4)

    def test_bad_config(self, tmp_path, capsys):
        code, _, err = run_cli(["simulate", "--config", write(tmp_path / "c.json", {"d": "x", "bogus": 1})], capsys)
        assert code == 2
        assert json.loads(err)["field"] == "bogus"


class TestRun:
    def test_single_nn_record(self):
        cfg = ExperimentConfig.from_dict({**TINY, "repetitions": 1, "estimators": ["NN"]})
        doc, _ = run_experiment(cfg)
        assert len(doc["records"]) == 1 and doc["records"][0]["label"] == "NN"
        assert doc["comparisons"] == {}

    def test_outputs_and_determinism(self, tmp_path, capsys):
        cfg = write(tmp_path / "c.json", TINY)
        for name in ("r1", "r2"):
            code, out, _ = run_cli(["run", "--config", cfg, "--out", str(tmp_path / name)], capsys)
            assert code == 0
        doc = json.loads((tmp_path / "r1" / "results.json").read_text())
        assert doc["comparisons"]["mean"]["seeds"] == [0, 1]
        for f in ("results.json", "per_seed.csv", "comparison.csv", "comparison.svg", "manifest.json"):
            assert (tmp_path / "r1" / f).read_bytes() == (tmp_path / "r2" / f).read_bytes()
        manifest = json.loads((tmp_path / "r1" / "manifest.json").read_text())
        assert {e["path"] for e in manifest["files"]} == {
            "results.json", "per_seed.csv", "comparison.csv", "comparison.svg"}

    def test_seed_flag_overrides(self, tmp_path, capsys):
        cfg = write(tmp_path / "c.json", {**TINY, "repetitions": 1})
        run_cli(["run", "--config", cfg, "--seed", "9", "--out", str(tmp_path / "o")], capsys)
        doc = json.loads((tmp_path / "o" / "results.json").read_text())
        assert doc["records"][0]["seed"] == 9

    def test_dataset_input(self, tmp_path, capsys):
        run_cli(["simulate", "--model", "model1", "--d", "3", "--n", "300", "--out", str(tmp_path)], capsys)
        cfg = {k: v for k, v in TINY.items() if k not in ("n_train", "n_val", "n_test")}
        cfg.update(dataset=str(tmp_path / "dataset.csv"), model=None, repetitions=1)
        code, _, _ = run_cli(["run", "--config", write(tmp_path / "c.json", cfg), "--out", str(tmp_path / "o")],
                             capsys)
        assert code == 0
        doc = json.loads((tmp_path / "o" / "results.json").read_text())
        # no oracle for a file: the summary falls back to PUV
        assert doc["comparisons"]["mean"]["metric"] == "puv"

    def test_failed_repetition_recorded(self, tmp_path):
        path = tmp_path / "tiny.csv"
        path.write_text("x_1,y\n1.0,2.0\n2.0,3.0\n")
        cfg = ExperimentConfig.from_dict({**TINY, "dataset": str(path), "model": None, "repetitions": 1})
        doc, _ = run_experiment(cfg)
        assert doc["records"] == [] and "too small" in doc["failures"][0]["error"]


class TestReproduce:
    def test_scale_zero_rejected(self, capsys):
        code, _, err = run_cli(["reproduce", "model1", "--scale", "0"], capsys)
        assert code == 2 and json.loads(err)["field"] == "scale"

    def test_preset_sizes(self):
        cfg = preset_config("model1")
        assert (cfg.n_train, cfg.n_val, cfg.n_test, cfg.d) == (2000, 1000, 1000, 20)
        assert cfg.imputers == ["mean", "iterative"]
        assert preset_config("example1").n_train == 1000

    def test_example1_emits_fit_curves(self, tmp_path, capsys):
        over = write(tmp_path / "o.json", {"width": 6, "embedding_dim": 2, "train": TINY["train"]})
        code, _, _ = run_cli(["reproduce", "example1", "--scale", "0.1", "--repetitions", "2",
                              "--config", over, "--out", str(tmp_path / "ex")], capsys)
        assert code == 0
        lines = (tmp_path / "ex" / "fitted.csv").read_text().splitlines()
        assert lines[0] == "z_1,omega_1,y,f_star,pred_NN,pred_PENN"
        assert len(lines) == 101
        svg = (tmp_path / "ex" / "comparison.svg").read_text()
        assert svg.lstrip().startswith("<?xml") and "<svg" in svg
        assert (tmp_path / "ex" / "fitted.svg").exists()


class TestCertify:
    def test_example1(self, tmp_path, capsys):
        doc = {"structure": "coordinates", "coordinates": [0],
               "cells": [[[1, 0], [1, 1]], [[0, 0], [0, 1]]]}
        code, out, _ = run_cli(["certify", write(tmp_path / "p.json", doc), "--out", str(tmp_path / "c.json")],
                               capsys)
        assert code == 0 and json.loads(out)["margin"] == 0.25
        cert = json.loads((tmp_path / "c.json").read_text())
        assert cert["verdict"] == "pass"

    def test_overlap(self, tmp_path, capsys):
        doc = {"cells": [[[1, 0], [1, 1]], [[1, 1]]]}
        code, _, err = run_cli(["certify", write(tmp_path / "p.json", doc), "--out", str(tmp_path / "c.json")],
                               capsys)
        assert code == 1
        assert json.loads(err)["patterns"] == [[1, 1]]

    def test_counterexample_pair(self, tmp_path, capsys):
        doc = {"coordinates": [0], "cells": [[[0, 0]], [[0, 1]]]}
        code, _, err = run_cli(["certify", write(tmp_path / "p.json", doc), "--out", str(tmp_path / "c.json")],
                               capsys)
        assert code == 1
        assert sorted(json.loads(err)["patterns"]) == [[0, 0], [0, 1]]
        assert json.loads((tmp_path / "c.json").read_text())["verdict"] == "fail"

    def test_halfspaces(self, tmp_path, capsys):
        doc = {"structure": "halfspaces", "cells": [[[1, 0], [1, 1]], [[0, 0], [0, 1]]],
               "halfspaces": [[{"v": [-1, 0], "b": -1}], [{"v": [1, 0], "b": 0}]]}
        code, _, _ = run_cli(["certify", write(tmp_path / "p.json", doc), "--out", str(tmp_path)], capsys)
        assert code == 0
        assert json.loads((tmp_path / "certificate.json").read_text())["method"] == "halfspaces"

    def test_random_full_cube(self, tmp_path, capsys):
        from penn.algebra import all_patterns

        rng = np.random.default_rng(0)
        labels = rng.permutation(np.arange(64) % 5)
        cells = [[list(map(int, w)) for w, lab in zip(all_patterns(6), labels) if lab == k] for k in range(5)]
        code, _, _ = run_cli(["certify", write(tmp_path / "p.json", {"cells": cells}),
                              "--out", str(tmp_path / "c.json")], capsys)
        assert code == 0

    def test_missing_file(self, capsys):
        code, _, err = run_cli(["certify", "/nonexistent/p.json"], capsys)
        assert code == 2 and json.loads(err)["error"] == "usage"


def test_unknown_subcommand():
    with pytest.raises(SystemExit):
        main(["frobnicate"])
