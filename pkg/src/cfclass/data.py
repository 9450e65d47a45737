"""Dataset container, delimited-text ingestion and fold splitting."""

from __future__ import annotations

import csv
import os
import tempfile
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .exceptions import DataParseError, SchemaError

__all__ = [
    "Dataset",
    "FoldAssignment",
    "load_dataset",
    "load_columns",
    "write_dataset",
    "split_folds",
    "atomic_write_text",
]


@dataclass(frozen=True, eq=False)
class Dataset:
    """Observed tuples ``(y, a, x)`` plus the prediction covariate subset.

    Parameters
    ----------
    y : ndarray of shape (n,)
        Binary outcome.
    a : ndarray of shape (n,)
        Binary intervention.
    x : ndarray of shape (n, d_x)
        Confounders.
    v_indices : tuple of int
        Zero-based columns of ``x`` usable at prediction time.
    x_names : tuple of str, optional
        Column names of ``x``.
    """

    y: np.ndarray
    a: np.ndarray
    x: np.ndarray
    v_indices: tuple = ()
    x_names: tuple = ()

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.int64).ravel()
        a = np.asarray(self.a, dtype=np.int64).ravel()
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if y.size < 1:
            raise ValueError("a dataset needs at least one row")
        if not (y.size == a.size == x.shape[0]):
            raise ValueError(
                f"length mismatch: y={y.size}, a={a.size}, x rows={x.shape[0]}"
            )
        if not np.isin(y, (0, 1)).all() or not np.isin(a, (0, 1)).all():
            raise ValueError("y and a must be binary 0/1")
        if not np.isfinite(x).all():
            raise ValueError("x contains non-finite entries")
        v = tuple(int(j) for j in self.v_indices) if len(self.v_indices) else tuple(range(x.shape[1]))
        if len(set(v)) != len(v) or any(j < 0 or j >= x.shape[1] for j in v):
            raise ValueError(f"invalid v_indices {v} for d_x={x.shape[1]}")
        names = tuple(self.x_names) if len(self.x_names) else tuple(f"x{j + 1}" for j in range(x.shape[1]))
        if len(names) != x.shape[1]:
            raise ValueError("x_names length does not match x columns")
        for arr in (y, a, x):
            arr.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v_indices", v)
        object.__setattr__(self, "x_names", names)

    @property
    def n(self):
        return self.y.size

    @property
    def d_x(self):
        return self.x.shape[1]

    @property
    def v(self):
        """Prediction covariates ``V``, shape (n, len(v_indices))."""
        return self.x[:, list(self.v_indices)]

    @property
    def v_names(self):
        return tuple(self.x_names[j] for j in self.v_indices)


@dataclass(frozen=True, eq=False)
class FoldAssignment:
    """Fold label per row, drawn independently of the data.

    Labels are zero-based, ``0 <= labels[i] < n_folds``.
    """

    labels: np.ndarray
    n_folds: int
    seed: int

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self):
        return self.labels.size

    def fold(self, b):
        """Row indices belonging to fold ``b``."""
        return np.flatnonzero(self.labels == b)

    def complement(self, b):
        """Row indices outside fold ``b`` (the training rows for fold ``b``)."""
        return np.flatnonzero(self.labels != b)

    def sizes(self):
        return np.bincount(self.labels, minlength=self.n_folds)


def split_folds(n, n_folds=2, seed=0):
    """Assign each of ``n`` rows to one of ``n_folds`` folds uniformly at random.

    Labels are i.i.d. uniform. When ``n >= n_folds`` the whole assignment is
    redrawn until no fold is empty, so the result is a pure function of
    ``(n, n_folds, seed)``.
    """
    n = int(n)
    n_folds = int(n_folds)
    if n_folds < 1 or n_folds > n:
        raise ValueError(f"need 1 <= n_folds <= n, got n_folds={n_folds}, n={n}")
    rng = np.random.default_rng(seed)
    while True:
        labels = rng.integers(0, n_folds, size=n)
        if np.bincount(labels, minlength=n_folds).min() > 0:
            return FoldAssignment(labels=labels, n_folds=n_folds, seed=int(seed))


def _parse_binary(token, column, row):
    tok = token.strip()
    if tok in ("0", "1"):
        return int(tok)
    try:
        value = float(tok)
    except ValueError:
        value = None
    if value in (0.0, 1.0):
        return int(value)
    raise DataParseError(f"row {row}: column {column!r} has non-binary value {token!r}", row=row)


def load_dataset(path, schema=None, v_columns=None):
    """Read a comma-separated file with a header row into a :class:`Dataset`.

    Parameters
    ----------
    path : str or path-like
    schema : mapping, optional
        Keys ``"y"``, ``"a"`` name the outcome and intervention columns
        (default ``"y"`` and ``"a"``); ``"x"`` lists confounder columns
        (default: every other column, in file order).
    v_columns : sequence of str, optional
        Confounder columns used for prediction. Defaults to all of ``x``.

    Raises
    ------
    SchemaError
        A named column is missing from the header.
    DataParseError
        A ``y``/``a`` token is not 0/1 or an ``x`` token is not a finite
        number. ``row`` is the one-based data row (header excluded).
    """
    schema = dict(schema or {})
    y_col = schema.get("y", "y")
    a_col = schema.get("a", "a")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        x_cols = schema.get("x")
        if x_cols is None:
            x_cols = [h for h in header if h not in (y_col, a_col)]
        x_cols = list(x_cols)
        missing = [c for c in [y_col, a_col, *x_cols] if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {missing}")
        if v_columns is None:
            v_columns = x_cols
        bad_v = [c for c in v_columns if c not in x_cols]
        if bad_v:
            raise SchemaError(f"v_columns {bad_v} are not among the covariate columns")
        iy, ia = header.index(y_col), header.index(a_col)
        ix = [header.index(c) for c in x_cols]

        ys, as_, xs = [], [], []
        for row, rec in enumerate(reader, start=1):
            if not rec or all(not t.strip() for t in rec):
                continue
            if len(rec) != len(header):
                raise DataParseError(
                    f"row {row}: expected {len(header)} fields, got {len(rec)}", row=row
                )
            ys.append(_parse_binary(rec[iy], y_col, row))
            as_.append(_parse_binary(rec[ia], a_col, row))
            vals = []
            for j, c in zip(ix, x_cols):
                try:
                    val = float(rec[j])
                except ValueError:
                    raise DataParseError(
                        f"row {row}: column {c!r} has non-numeric value {rec[j]!r}", row=row
                    ) from None
                if not np.isfinite(val):
                    raise DataParseError(f"row {row}: column {c!r} is not finite", row=row)
                vals.append(val)
            xs.append(vals)
    if not ys:
        raise DataParseError(f"{path}: no data rows")
    x = np.array(xs, dtype=float).reshape(len(ys), len(x_cols))
    return Dataset(
        y=np.array(ys),
        a=np.array(as_),
        x=x,
        v_indices=tuple(x_cols.index(c) for c in v_columns),
        x_names=tuple(x_cols),
    )


def load_columns(path, columns):
    """Read the named numeric columns of a comma-separated file.

    Returns an array of shape (rows, len(columns)) in file order. Raises
    :class:`SchemaError` for a missing column and :class:`DataParseError`
    for a non-numeric or non-finite entry.
    """
    columns = list(columns)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        missing = [c for c in columns if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {missing}")
        idx = [header.index(c) for c in columns]
        out = []
        for row, rec in enumerate(reader, start=1):
            if not rec or all(not t.strip() for t in rec):
                continue
            if len(rec) != len(header):
                raise DataParseError(f"row {row}: expected {len(header)} fields, got {len(rec)}", row=row)
            vals = []
            for j, c in zip(idx, columns):
                try:
                    val = float(rec[j])
                except ValueError:
                    raise DataParseError(
                        f"row {row}: column {c!r} has non-numeric value {rec[j]!r}", row=row
                    ) from None
                if not np.isfinite(val):
                    raise DataParseError(f"row {row}: column {c!r} is not finite", row=row)
                vals.append(val)
            out.append(vals)
    return np.array(out, dtype=float).reshape(len(out), len(columns))


def atomic_write_text(path, text):
    """Write ``text`` to ``path`` through a temporary file and rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(value):
    # repr of a Python float is the shortest string that round-trips exactly
    return repr(float(value))


def write_dataset(data: Dataset, path, y_name="y", a_name="a", extra: Mapping[str, Sequence] | None = None):
    """Serialize ``data`` to the same comma-separated format read by :func:`load_dataset`."""
    extra = dict(extra or {})
    header = [y_name, a_name, *data.x_names, *extra]
    lines = [",".join(header)]
    cols = [np.asarray(v) for v in extra.values()]
    for i in range(data.n):
        fields = [str(int(data.y[i])), str(int(data.a[i]))]
        fields += [_fmt(v) for v in data.x[i]]
        fields += [_fmt(c[i]) for c in cols]
        lines.append(",".join(fields))
    atomic_write_text(path, "\n".join(lines) + "\n")
