"""Preprocessing of the public ProPublica two-year recidivism file.

The raw file (``compas-scores-two-years.csv``) is never bundled; the user
supplies it. Rows are filtered with the ProPublica analysis rules and
restricted to Black, White and Hispanic defendants. The intervention is
pretrial detention: ``a = 0`` when the defendant left jail within three
days of booking, else ``a = 1``. The outcome is two-year rearrest.
"""

from __future__ import annotations

import csv
from datetime import datetime

import numpy as np

from .data import atomic_write_text
from .exceptions import DataParseError, SchemaError

__all__ = ["COVARIATES", "RAW_COLUMNS", "preprocess_compas", "split_train_test", "write_rows"]

RACES = {"African-American": "black", "Caucasian": "white", "Hispanic": "hispanic"}
# age, sex, priors, charge degree and race (two indicators, White is the reference)
COVARIATES = ("age", "male", "priors_count", "felony", "race_black", "race_hispanic")
RAW_COLUMNS = (
    "age", "sex", "priors_count", "c_charge_degree", "race", "two_year_recid",
    "c_jail_in", "c_jail_out", "days_b_screening_arrest", "is_recid", "score_text", "decile_score",
)
OUT_COLUMNS = ("y", "a", *COVARIATES, "decile_score")
RELEASE_DAYS = 3.0
_DATE_FORMATS = ("%Y-%m-%d %H:%M:%S", "%Y-%m-%d")


def _date(token):
    for fmt in _DATE_FORMATS:
        try:
            return datetime.strptime(token.strip(), fmt)
        except ValueError:
            pass
    return None


def _number(token):
    try:
        return float(token)
    except ValueError:
        return None


def preprocess_compas(path):
    """Filter and encode the raw file.

    Returns
    -------
    rows : list of dict
        One dict per kept defendant with keys ``OUT_COLUMNS``, in file order.
    counts : dict
        Row counts after each filtering step.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in RAW_COLUMNS if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {missing}")
        counts = {"raw": 0, "propublica_filter": 0, "race_filter": 0, "jail_dates": 0}
        rows = []
        for row_no, rec in enumerate(reader, start=1):
            counts["raw"] += 1
            days = _number(rec["days_b_screening_arrest"])
            if (days is None or not -30 <= days <= 30 or rec["is_recid"].strip() == "-1"
                    or rec["c_charge_degree"].strip() == "O" or rec["score_text"].strip() == "N/A"):
                continue
            counts["propublica_filter"] += 1
            race = RACES.get(rec["race"].strip())
            if race is None:
                continue
            counts["race_filter"] += 1
            t_in, t_out = _date(rec["c_jail_in"]), _date(rec["c_jail_out"])
            if t_in is None or t_out is None:
                continue
            counts["jail_dates"] += 1
            age, priors = _number(rec["age"]), _number(rec["priors_count"])
            y, decile = rec["two_year_recid"].strip(), _number(rec["decile_score"])
            if age is None or priors is None or decile is None or y not in ("0", "1"):
                raise DataParseError(f"row {row_no}: malformed age, priors, score or outcome", row=row_no)
            stay = (t_out - t_in).total_seconds() / 86400.0
            rows.append({
                "y": int(y),
                "a": int(stay > RELEASE_DAYS),
                "age": age,
                "male": int(rec["sex"].strip() == "Male"),
                "priors_count": priors,
                "felony": int(rec["c_charge_degree"].strip() == "F"),
                "race_black": int(race == "black"),
                "race_hispanic": int(race == "hispanic"),
                "decile_score": decile,
            })
    return rows, counts


def split_train_test(n, n_train=3000, seed=0):
    """Random train/test row indices; ``n_train`` rows go to training."""
    if not 0 < n_train < n:
        raise ValueError(f"n_train must be in (0, {n}), got {n_train}")
    perm = np.random.default_rng(seed).permutation(n)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def _fmt(v):
    return str(v) if isinstance(v, int) else repr(float(v))


def write_rows(rows, path):
    lines = [",".join(OUT_COLUMNS)]
    lines += [",".join(_fmt(r[c]) for c in OUT_COLUMNS) for r in rows]
    atomic_write_text(path, "\n".join(lines) + "\n")
