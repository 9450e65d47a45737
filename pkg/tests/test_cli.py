import json
import time

import numpy as np
import pytest

from cfclass.cli import EXIT_CONFIG, EXIT_CONVERGENCE, EXIT_DATA, EXIT_FOLDS, EXIT_OK, main
from cfclass.config import schema_json
from cfclass.data import write_dataset
from cfclass.simulation import simulate

from .conftest import write_csv


@pytest.fixture(scope="module")
def sim_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "sim.csv"
    write_dataset(simulate(1500, 13).data, path)
    return path


@pytest.fixture(scope="module")
def fitted(sim_csv, tmp_path_factory):
    out = tmp_path_factory.mktemp("fit")
    assert main(["fit", "--data", str(sim_csv), "--out", str(out)]) == EXIT_OK
    return out


def _read_csv(path):
    lines = path.read_text().strip().split("\n")
    return lines[0].split(","), [ln.split(",") for ln in lines[1:]]


def test_fit_artifact(fitted):
    art = json.loads((fitted / "model.json").read_text())
    assert len(art["beta"]) == 27 and len(art["term_names"]) == 27
    assert max(abs(b) for b in art["beta"]) <= 1.0
    assert art["solution"]["converged"]
    assert art["inference"] == "inference.json"
    inf = json.loads((fitted / "inference.json").read_text())
    assert len(inf["ci_lower"]) == 27


def test_fit_byte_identical(sim_csv, fitted, tmp_path):
    assert main(["fit", "--data", str(sim_csv), "--out", str(tmp_path)]) == EXIT_OK
    for name in ("model.json", "inference.json", "train_scores.csv"):
        assert (tmp_path / name).read_bytes() == (fitted / name).read_bytes()


def test_predict_reproduces_training_scores(sim_csv, fitted, tmp_path):
    out = tmp_path / "pred.csv"
    assert main(["predict", "--model", str(fitted / "model.json"), "--data", str(sim_csv), "--out", str(out)]) == 0
    assert out.read_text() == (fitted / "train_scores.csv").read_text()
    _, rows = _read_csv(out)
    assert len(rows) == 1500


def test_predict_zero_row(fitted, tmp_path):
    data = write_csv(tmp_path / "z.csv", [f"x{j}" for j in range(1, 7)], [[0] * 6, [0.1] * 6])
    out = tmp_path / "p.csv"
    assert main(["predict", "--model", str(fitted / "model.json"), "--data", str(data), "--out", str(out)]) == 0
    _, rows = _read_csv(out)
    assert float(rows[0][1]) == 0.5 and len(rows) == 2


def test_predict_missing_column(fitted, tmp_path):
    data = write_csv(tmp_path / "z.csv", ["x1", "x2"], [[0, 0]])
    code = main(["predict", "--model", str(fitted / "model.json"), "--data", str(data), "--out", str(tmp_path / "p")])
    assert code == EXIT_DATA


def test_does_not_mutate_inputs(sim_csv, fitted, tmp_path):
    before = sim_csv.read_bytes(), (fitted / "model.json").read_bytes()
    main(["predict", "--model", str(fitted / "model.json"), "--data", str(sim_csv), "--out", str(tmp_path / "p.csv")])
    main(["evaluate", "--model", str(fitted / "model.json"), "--data", str(sim_csv), "--out", str(tmp_path / "e")])
    assert (sim_csv.read_bytes(), (fitted / "model.json").read_bytes()) == before


def _toy_model(tmp_path):
    art = {
        "format": "cfclass-model/1", "beta": [5.0], "basis": {"kind": "raw", "include_intercept": False, "terms": []},
        "v_columns": ["x1"], "columns": {"y": "y", "a": "a", "x": ["x1"]},
    }
    path = tmp_path / "m.json"
    path.write_text(json.dumps(art))
    return path


def test_evaluate_perfect_separation(tmp_path):
    model = _toy_model(tmp_path)
    data = write_csv(tmp_path / "d.csv", ["y", "a", "x1"], [[0, 1, -2], [0, 0, -1], [1, 1, 1], [1, 0, 3]])
    assert main(["evaluate", "--model", str(model), "--data", str(data), "--out", str(tmp_path / "e")]) == 0
    _, metrics = _read_csv(tmp_path / "e" / "metrics.csv")
    m = dict(metrics)
    assert float(m["auc"]) == 1.0 and float(m["accuracy"]) == 1.0
    _, roc = _read_csv(tmp_path / "e" / "roc.csv")
    fpr = [float(r[1]) for r in roc]
    tpr = [float(r[2]) for r in roc]
    assert np.all(np.diff(fpr) >= 0) and np.all(np.diff(tpr) >= 0)
    assert main(["evaluate", "--model", str(model), "--data", str(data), "--out", str(tmp_path / "e1"),
                 "--arm", "1"]) == 0
    assert dict(_read_csv(tmp_path / "e1" / "metrics.csv")[1])["n"] == "2"


def test_evaluate_single_class(tmp_path):
    model = _toy_model(tmp_path)
    data = write_csv(tmp_path / "d.csv", ["y", "a", "x1"], [[1, 1, -2], [1, 0, 3]])
    assert main(["evaluate", "--model", str(model), "--data", str(data), "--out", str(tmp_path / "e")]) == 0
    m = dict(_read_csv(tmp_path / "e" / "metrics.csv")[1])
    assert m["auc"] == "NA" and float(m["accuracy"]) == 0.5


def test_exit_codes(sim_csv, tmp_path):
    k1 = tmp_path / "k1.yaml"
    k1.write_text("folds: 1\n")
    assert main(["fit", "--config", str(k1), "--data", str(sim_csv), "--out", str(tmp_path / "o")]) == EXIT_FOLDS
    bad = tmp_path / "bad.yaml"
    bad.write_text("solver:\n  strats: 3\n")
    assert main(["fit", "--config", str(bad), "--data", str(sim_csv), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert main(["fit", "--config", str(tmp_path / "missing.yaml"), "--data", str(sim_csv),
                 "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    data = write_csv(tmp_path / "d.csv", ["y", "a", "x1"], [[0, 1, 1.0], [3, 0, 2.0]])
    assert main(["fit", "--data", str(data), "--out", str(tmp_path / "o")]) == EXIT_DATA
    one_arm = write_csv(tmp_path / "one.csv", ["y", "a", "x1"], [[i % 2, 1, i / 7] for i in range(40)])
    assert main(["fit", "--data", str(one_arm), "--out", str(tmp_path / "o")]) == EXIT_FOLDS
    assert main(["no-such-command"]) == EXIT_CONFIG


def test_nonconvergence_exit(sim_csv, tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("solver:\n  max_iter: 1\n  max_outer: 1\n  starts: 1\n  polish: false\n  kkt_tol: 1.0e-300\n")
    code = main(["fit", "--config", str(cfg), "--data", str(sim_csv), "--out", str(tmp_path / "o")])
    assert code == EXIT_CONVERGENCE
    assert json.loads((tmp_path / "o" / "model.json").read_text())["solution"]["converged"] is False


def test_simulate_smoke_and_determinism(tmp_path):
    cfg = tmp_path / "s.yaml"
    cfg.write_text("simulation:\n  sizes: [500]\n  reps: 2\n")
    t0 = time.perf_counter()
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "a")]) == EXIT_OK
    assert time.perf_counter() - t0 < 60
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "b")]) == EXIT_OK
    for name in ("summary.csv", "records.csv", "failures.csv", "metadata.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    header, rows = _read_csv(tmp_path / "a" / "summary.csv")
    assert header[:3] == ["method", "x_mode", "n"] and len(rows) == 4


def test_simulate_empty_sizes(tmp_path):
    cfg = tmp_path / "s.yaml"
    cfg.write_text("simulation:\n  sizes: []\n")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "a")]) == EXIT_CONFIG


def test_schema_command_matches_docs(tmp_path):
    out = tmp_path / "schema.json"
    assert main(["schema", "--out", str(out)]) == 0
    assert out.read_text() == schema_json()
