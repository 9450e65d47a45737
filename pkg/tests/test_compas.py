import pytest

from cfclass.cli import main
from cfclass.compas import COVARIATES, preprocess_compas, split_train_test
from cfclass.data import load_dataset
from cfclass.exceptions import SchemaError

HEADER = ["id", "age", "sex", "priors_count", "c_charge_degree", "race", "two_year_recid", "c_jail_in",
          "c_jail_out", "days_b_screening_arrest", "is_recid", "score_text", "decile_score"]


def _raw(tmp_path):
    rows = [
        # kept: released after 1 day -> a=0
        [1, 25, "Male", 2, "F", "African-American", 1, "2013-01-01 10:00:00", "2013-01-02 09:00:00", 0, 1, "High", 8],
        # kept: 5 days in jail -> a=1
        [2, 40, "Female", 0, "M", "Caucasian", 0, "2013-01-01 10:00:00", "2013-01-06 10:00:00", -1, 0, "Low", 2],
        # kept: Hispanic, exactly 3 days -> a=0
        [3, 31, "Male", 1, "M", "Hispanic", 0, "2013-02-01 00:00:00", "2013-02-04 00:00:00", 1, 0, "Low", 3],
        # screening gap too large
        [4, 22, "Male", 0, "F", "Caucasian", 1, "2013-01-01 10:00:00", "2013-01-02 10:00:00", 45, 1, "Low", 4],
        # ordinary traffic offense
        [5, 22, "Male", 0, "O", "Caucasian", 1, "2013-01-01 10:00:00", "2013-01-02 10:00:00", 0, 1, "Low", 4],
        # race outside the three groups
        [6, 50, "Male", 3, "F", "Asian", 0, "2013-01-01 10:00:00", "2013-01-02 10:00:00", 0, 0, "Low", 1],
        # missing score
        [7, 30, "Male", 3, "F", "Caucasian", 0, "2013-01-01 10:00:00", "2013-01-02 10:00:00", 0, 0, "N/A", 1],
        # missing jail dates
        [8, 30, "Male", 3, "F", "Caucasian", 0, "", "", 0, 0, "Low", 1],
    ]
    path = tmp_path / "raw.csv"
    path.write_text("\n".join(",".join(map(str, r)) for r in [HEADER, *rows]) + "\n")
    return path


def test_filters_and_encoding(tmp_path):
    rows, counts = preprocess_compas(_raw(tmp_path))
    assert counts == {"raw": 8, "propublica_filter": 5, "race_filter": 4, "jail_dates": 3}
    assert [r["a"] for r in rows] == [0, 1, 0]
    assert [r["y"] for r in rows] == [1, 0, 0]
    assert rows[0]["male"] == 1 and rows[0]["felony"] == 1 and rows[0]["race_black"] == 1
    assert rows[1]["race_black"] == 0 and rows[1]["race_hispanic"] == 0
    assert rows[2]["race_hispanic"] == 1


def test_missing_raw_column(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("age,sex\n1,Male\n")
    with pytest.raises(SchemaError):
        preprocess_compas(p)


def test_split():
    tr, te = split_train_test(10, 6, seed=1)
    assert len(tr) == 6 and len(te) == 4 and not set(tr) & set(te)
    with pytest.raises(ValueError):
        split_train_test(10, 10)


def test_cli_writes_loadable_files(tmp_path):
    out = tmp_path / "out"
    assert main(["preprocess-compas", "--raw", str(_raw(tmp_path)), "--out", str(out), "--n-train", "2"]) == 0
    ds = load_dataset(out / "train.csv", {"x": list(COVARIATES)})
    assert ds.n == 2 and ds.d_x == 6
    assert load_dataset(out / "test.csv", {"x": list(COVARIATES)}).n == 1
