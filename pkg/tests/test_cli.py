import csv
import json

import numpy as np
import pytest

from rcreml.cli import main
from rcreml.model import load_dataset_json, save_dataset_json
from rcreml.simgen import SimConfig, generate


def write_sim_config(path, **overrides):
    doc = {
        "n_individuals": 30,
        "n_obs": 8,
        "p": 2,
        "q": 1,
        "true_alpha": [1.0, -0.5],
        "true_d": [[0.4]],
        "true_sigma2": 1.0,
        "seed": 5,
    }
    doc.update(overrides)
    path.write_text(json.dumps(doc))
    return path


@pytest.fixture
def dataset_file(tmp_path):
    cfg = SimConfig(n_individuals=30, n_obs=8, p=2, q=1, true_alpha=[1.0, -0.5],
                    true_d=[[0.4]], seed=5)
    path = tmp_path / "data.json"
    save_dataset_json(generate(cfg), path)
    return path


class TestValidate:
    def test_valid_dataset_exit_zero(self, dataset_file, capsys):
        assert main(["validate", "--input", str(dataset_file)]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["valid"]
        assert len(doc["individuals"]) == 30

    def test_stats_dump(self, dataset_file, capsys):
        assert main(["validate", "--input", str(dataset_file), "--stats"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert "sigma2_hat" in doc["stats"][0]

    def test_ragged_block_exit_one(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({
            "individuals": [{"id": "a", "x": [[1.0], [1.0]], "z": [[1.0]], "y": [1.0, 2.0]}]
        }))
        assert main(["validate", "--input", str(path)]) == 1
        assert "error" in capsys.readouterr().err

    def test_rank_deficient_design_exit_one(self, tmp_path, capsys):
        x = [[1.0, 1.0], [1.0, 1.0], [1.0, 1.0]]
        path = tmp_path / "collinear.json"
        path.write_text(json.dumps({
            "individuals": [
                {"id": "a", "x": x, "z": [[1.0], [1.0], [1.0]], "y": [1.0, 2.0, 3.0]}
            ]
        }))
        assert main(["validate", "--input", str(path)]) == 1
        doc = json.loads(capsys.readouterr().out)
        assert any("RankDeficientDesign" in f for f in doc["failures"])

    def test_containment_failure_names_individual(self, tmp_path, capsys):
        rng = np.random.default_rng(0)
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({
            "individuals": [{
                "id": "offender",
                "x": [[1.0]] * 4,
                "z": rng.standard_normal((4, 1)).tolist(),
                "y": [0.0, 1.0, 2.0, 3.0],
            }]
        }))
        assert main(["validate", "--input", str(path)]) == 1
        doc = json.loads(capsys.readouterr().out)
        assert any("offender" in f for f in doc["failures"])


class TestFit:
    def test_fit_defaults_converges(self, dataset_file, tmp_path):
        out = tmp_path / "fit.json"
        code = main(["fit", "--input", str(dataset_file), "--output", str(out)])
        assert code == 0
        doc = json.loads(out.read_text())
        assert doc["converged"] is True
        assert len(doc["sigma2"]) == 30
        assert len(doc["blups"]) == 30

    def test_fit_result_roundtrips(self, dataset_file, tmp_path):
        out = tmp_path / "fit.json"
        main(["fit", "--input", str(dataset_file), "--output", str(out)])
        doc = json.loads(out.read_text())
        assert json.loads(json.dumps(doc)) == doc

    def test_invalid_dataset_names_offender(self, tmp_path, capsys):
        rng = np.random.default_rng(0)
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({
            "individuals": [{
                "id": "offender",
                "x": [[1.0]] * 4,
                "z": rng.standard_normal((4, 1)).tolist(),
                "y": [0.0, 1.0, 2.0, 3.0],
            }]
        }))
        assert main(["fit", "--input", str(path)]) == 1
        assert "offender" in capsys.readouterr().err

    def test_user_fixed_without_sigma_is_an_error(self, dataset_file, capsys):
        code = main(["fit", "--input", str(dataset_file), "--sigma-mode", "user-fixed"])
        assert code == 1
        assert "sigma2" in capsys.readouterr().err

    def test_user_fixed_with_config_sigma(self, dataset_file, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"sigma_mode": "user-fixed", "sigma2": [1.0]}))
        out = tmp_path / "fit.json"
        assert main(["fit", "--input", str(dataset_file), "--config", str(cfg),
                     "--output", str(out)]) == 0

    def test_not_converged_exit_two(self, dataset_file, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"max_iters": 1, "grad_tol": 1e-14,
                                   "step_tol": 1e-14}))
        out = tmp_path / "fit.json"
        code = main(["fit", "--input", str(dataset_file), "--config", str(cfg),
                     "--output", str(out)])
        assert code == 2
        assert json.loads(out.read_text())["converged"] is False


class TestSimulate:
    def test_same_seed_identical_files(self, tmp_path):
        cfg = write_sim_config(tmp_path / "sim.json")
        out1, out2 = tmp_path / "a.json", tmp_path / "b.json"
        assert main(["simulate", "--config", str(cfg), "--output", str(out1),
                     "--seed", "99"]) == 0
        assert main(["simulate", "--config", str(cfg), "--output", str(out2),
                     "--seed", "99"]) == 0
        assert out1.read_text() == out2.read_text()

    def test_roundtrips_through_validate(self, tmp_path):
        cfg = write_sim_config(tmp_path / "sim.json")
        out = tmp_path / "data.json"
        assert main(["simulate", "--config", str(cfg), "--output", str(out)]) == 0
        assert main(["validate", "--input", str(out)]) == 0

    def test_truth_flag_embeds_block(self, tmp_path):
        cfg = write_sim_config(tmp_path / "sim.json")
        out = tmp_path / "data.json"
        assert main(["simulate", "--config", str(cfg), "--output", str(out),
                     "--truth"]) == 0
        doc = json.loads(out.read_text())
        assert doc["truth"]["d"] == [[0.4]]
        # loader ignores the extra block
        assert load_dataset_json(out).n_individuals == 30

    def test_bad_config_exit_one(self, tmp_path, capsys):
        cfg = tmp_path / "sim.json"
        cfg.write_text(json.dumps({"n_individuals": 2}))
        assert main(["simulate", "--config", str(cfg), "--output",
                     str(tmp_path / "o.json")]) == 1


class TestBench:
    def test_csv_format(self, tmp_path):
        cfg = tmp_path / "bench.json"
        cfg.write_text(json.dumps({"N": [4], "n_k": [6, 10], "p": [2], "q": [1],
                                   "reps": 1}))
        out = tmp_path / "bench.csv"
        assert main(["bench", "--config", str(cfg), "--output", str(out)]) == 0
        with open(out) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["N", "n_k", "p", "q", "method", "phase", "median_seconds"]
        assert len(rows) == 1 + 2 * 3  # two grid points, three rows each
        assert {r[4] for r in rows[1:]} == {"full", "reduced"}
        assert all(float(r[6]) > 0 for r in rows[1:])

    def test_missing_key_exit_one(self, tmp_path, capsys):
        cfg = tmp_path / "bench.json"
        cfg.write_text(json.dumps({"N": [2]}))
        assert main(["bench", "--config", str(cfg), "--output",
                     str(tmp_path / "b.csv")]) == 1
