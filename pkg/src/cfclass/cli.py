"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 degenerate
folds, 5 solver non-convergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import warnings
from dataclasses import asdict
from pathlib import Path

import numpy as np
from scipy.special import expit

from . import __version__
from .compas import preprocess_compas, split_train_test, write_rows
from .config import ConfigError, RunConfig, load_config, write_schema
from .data import atomic_write_text, load_columns, load_dataset
from .estimator import CounterfactualClassifier
from .exceptions import DataParseError, DegenerateFoldError, SchemaError
from .metrics import accuracy, cross_entropy, roc_auc, roc_curve
from .risk import BasisSpec, expand_basis, term_names
from .simulation import D_X, SUMMARY_COLUMNS, oracle_beta_star, run_dr_experiment

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_FOLDS = 4
EXIT_CONVERGENCE = 5

ARTIFACT_FORMAT = "cfclass-model/1"

logger = logging.getLogger("cfclass")


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _dumps(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _fmt(v):
    return repr(float(v))


def _write_csv(path, header, rows):
    lines = [",".join(header)]
    lines += [",".join(v if isinstance(v, str) else _fmt(v) if isinstance(v, float) else str(v) for v in r)
              for r in rows]
    atomic_write_text(path, "\n".join(lines) + "\n")


def _config(path):
    try:
        return load_config(path)
    except ConfigError as exc:
        raise CliError(str(exc), EXIT_CONFIG) from None


def _data_error(exc):
    return CliError(f"data error: {exc}", EXIT_DATA)


# -- fit ---------------------------------------------------------------------


def _estimator(cfg: RunConfig, dim):
    program = cfg.constraints.program(dim)
    return CounterfactualClassifier(
        target_a=cfg.target_a,
        method=cfg.method,
        n_folds=cfg.folds,
        epsilon=cfg.epsilon,
        propensity_learner=cfg.learners.propensity.spec(),
        outcome_learner=cfg.learners.outcome.spec(),
        basis=cfg.basis.spec(),
        lower=program.lower,
        upper=program.upper,
        constraints=program.constraints,
        solver=cfg.solver.options(),
        level=cfg.inference.level,
        sc_tol=cfg.inference.sc_tol,
        random_state=cfg.seed,
        compute_inference=cfg.inference.enabled,
    )


def cmd_fit(config, data, out):
    cfg = _config(config)
    cols = cfg.data.columns
    try:
        ds = load_dataset(data, {"y": cols.y, "a": cols.a, "x": cols.x}, cfg.data.v_columns)
    except (SchemaError, DataParseError, OSError) as exc:
        raise _data_error(exc) from None
    basis = cfg.basis.spec()
    try:
        dim = basis.k_prime(len(ds.v_indices))
    except ValueError as exc:
        raise CliError(f"config error: {exc}", EXIT_CONFIG) from None
    if not 2 <= cfg.folds <= ds.n:
        raise CliError(f"degenerate folds: K={cfg.folds} needs 2 <= K <= n={ds.n} for cross-fitting",
                       EXIT_FOLDS)
    try:
        est = _estimator(cfg, dim)
    except ConfigError as exc:
        raise CliError(str(exc), EXIT_CONFIG) from None
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            est.fit(ds.x, ds.y, ds.a)
    except DegenerateFoldError as exc:
        raise CliError(f"degenerate folds: {exc}", EXIT_FOLDS) from None
    except ValueError as exc:
        raise _data_error(exc) from None

    sol = est.solution_
    v_names = list(ds.v_names)
    out = Path(out)
    artifact = {
        "format": ARTIFACT_FORMAT,
        "version": __version__,
        "beta": sol.beta.tolist(),
        "basis": basis.to_dict(),
        "term_names": term_names(basis, v_names),
        "v_columns": v_names,
        "columns": {"y": cols.y, "a": cols.a, "x": list(ds.x_names)},
        "target_a": cfg.target_a,
        "method": cfg.method,
        "metadata": {
            "n": ds.n,
            "folds": cfg.folds,
            "seed": cfg.seed,
            "epsilon": cfg.epsilon,
            "learners": {"propensity": cfg.learners.propensity.spec().to_dict(),
                         "outcome": cfg.learners.outcome.spec().to_dict()},
            "constraints": cfg.constraints.model_dump(),
            "solver": asdict(cfg.solver.options()),
        },
        "solution": sol.to_dict(),
        "inference": "inference.json" if est.inference_ is not None else None,
        "inference_error": est.inference_error_,
    }
    atomic_write_text(out / "model.json", _dumps(artifact))
    if est.inference_ is not None:
        atomic_write_text(out / "inference.json", _dumps(est.inference_.to_dict()))
    elif (out / "inference.json").exists():
        os.unlink(out / "inference.json")
    scores = est.predict_proba_v(ds.v)
    _write_csv(out / "train_scores.csv", ["row", "score"], [(i + 1, float(s)) for i, s in enumerate(scores)])

    print(f"n={ds.n} k={dim} method={cfg.method} target_a={cfg.target_a}")
    print(f"value={sol.value:.6g} kkt_residual={sol.kkt_residual:.3g} status={sol.status}")
    print("active:", ", ".join(sol.constraint_names[j] for j in sol.active_set) or "none")
    if est.inference_ is not None:
        inf = est.inference_
        print(f"{'term':>16} {'estimate':>10} {'lower':>10} {'upper':>10}")
        for name, b, lo, hi in zip(artifact["term_names"], sol.beta, inf.ci_lower, inf.ci_upper):
            print(f"{name:>16} {b:10.4f} {lo:10.4f} {hi:10.4f}")
        for w in inf.warnings:
            print("warning:", w)
    elif est.inference_error_:
        print("inference unavailable:", est.inference_error_)
    if not sol.converged:
        raise CliError(f"solver did not converge (KKT residual {sol.kkt_residual:.3g}); "
                       f"artifact written with converged=false", EXIT_CONVERGENCE)
    return EXIT_OK


# -- predict / evaluate ------------------------------------------------------


def _load_artifact(path):
    try:
        art = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read model artifact {path}: {exc}", EXIT_DATA) from None
    if not isinstance(art, dict) or art.get("format") != ARTIFACT_FORMAT:
        raise CliError(f"{path} is not a {ARTIFACT_FORMAT} artifact", EXIT_DATA)
    return art


def _scores(art, V):
    basis = BasisSpec(art["basis"]["kind"], art["basis"]["include_intercept"],
                      tuple(tuple(t) for t in art["basis"]["terms"]))
    if V.shape[0] == 0:
        return np.empty(0)
    return expit(expand_basis(basis, V) @ np.asarray(art["beta"], dtype=float))


def cmd_predict(model, data, out):
    art = _load_artifact(model)
    try:
        V = load_columns(data, art["v_columns"])
    except (SchemaError, DataParseError, OSError) as exc:
        raise _data_error(exc) from None
    scores = _scores(art, V)
    _write_csv(out, ["row", "score"], [(i + 1, float(s)) for i, s in enumerate(scores)])
    return EXIT_OK


def cmd_evaluate(model, data, out, label=None, arm=None):
    art = _load_artifact(model)
    label = label or art["columns"]["y"]
    a_col = art["columns"]["a"]
    cols = art["v_columns"] + [label] + ([a_col] if arm is not None else [])
    try:
        M = load_columns(data, cols)
    except (SchemaError, DataParseError, OSError) as exc:
        raise _data_error(exc) from None
    k = len(art["v_columns"])
    if arm is not None:
        M = M[M[:, k + 1] == arm]
    V, y = M[:, :k], M[:, k]
    if not np.isin(y, (0.0, 1.0)).all():
        raise CliError(f"data error: label column {label!r} must be 0/1", EXIT_DATA)
    if y.size == 0:
        raise CliError("data error: no rows to evaluate", EXIT_DATA)
    y = y.astype(int)
    scores = _scores(art, V)
    try:
        auc = roc_auc(scores, y)
    except ValueError:
        auc = None
    metrics = [
        ("n", str(y.size)),
        ("auc", "NA" if auc is None else _fmt(auc)),
        ("accuracy", _fmt(accuracy(scores, y))),
        ("cross_entropy", _fmt(cross_entropy(scores, y))),
    ]
    out = Path(out)
    _write_csv(out / "metrics.csv", ["metric", "value"], metrics)
    thr, fpr, tpr = roc_curve(scores, y)
    _write_csv(out / "roc.csv", ["threshold", "fpr", "tpr"],
               [(float(t), float(f), float(p)) for t, f, p in zip(thr, fpr, tpr)])
    for name, value in metrics:
        print(f"{name}={value}")
    return EXIT_OK


# -- simulate ----------------------------------------------------------------


def cmd_simulate(config, out):
    cfg = _config(config)
    sim = cfg.simulation
    basis = cfg.basis.spec()
    try:
        dim = basis.k_prime(D_X)
        program = cfg.constraints.program(dim)
    except (ValueError, ConfigError) as exc:
        raise CliError(f"config error: {exc}", EXIT_CONFIG) from None
    if cfg.folds < 2:
        raise CliError(f"degenerate folds: K={cfg.folds}; cross-fitting needs K >= 2", EXIT_FOLDS)
    oracle_seed = sim.oracle_seed if sim.oracle_seed is not None else cfg.seed + 10_007
    try:
        oracle = oracle_beta_star(basis, program, sim.oracle_n, seed=oracle_seed, target_a=cfg.target_a)
    except RuntimeError as exc:
        raise CliError(str(exc), EXIT_CONVERGENCE) from None
    res = run_dr_experiment(
        sim.sizes, sim.reps, methods=tuple(sim.methods), seed=cfg.seed, x_modes=tuple(sim.x_modes),
        oracle=oracle, basis=basis, program=program,
        prop_spec=cfg.learners.propensity.spec(), out_spec=cfg.learners.outcome.spec(),
        epsilon=cfg.epsilon, n_folds=cfg.folds, solver=cfg.solver.options(),
        target_a=cfg.target_a, n_jobs=sim.n_jobs,
    )
    out = Path(out)
    summary = res.summary()
    _write_csv(out / "summary.csv", SUMMARY_COLUMNS, [[r[c] for c in SUMMARY_COLUMNS] for r in summary])
    rec_cols = ("method", "x_mode", "n", "rep", "beta_err", "value_err", "class_err", "kkt_residual",
                "max_violation")
    _write_csv(out / "records.csv", rec_cols, [[r[c] for c in rec_cols] for r in res.records])
    fail_cols = ("method", "x_mode", "n", "rep", "error")
    _write_csv(out / "failures.csv", fail_cols,
               [[f[c] if c != "error" else json.dumps(f[c]) for c in fail_cols] for f in res.failures])
    meta = {
        "oracle": {**oracle.metadata, "beta_star": oracle.beta_star.tolist(), "v_star": oracle.v_star},
        "n_records": len(res.records),
        "n_failures": len(res.failures),
        "config": cfg.model_dump(),
    }
    atomic_write_text(out / "metadata.json", _dumps(meta))
    for r in summary:
        print(f"{r['method']:>6} {r['x_mode']:>9} n={r['n']:<6} beta_err={r['mean_beta_err']:.4f} "
              f"value_err={r['mean_value_err']:.5f} class_err={r['mean_class_err']:.4f}")
    if res.failures:
        print(f"{len(res.failures)} replication fits failed and were excluded (see failures.csv)")
    if not res.records:
        raise CliError("every replication failed", EXIT_CONVERGENCE)
    return EXIT_OK


# -- preprocess-compas -------------------------------------------------------


def cmd_preprocess_compas(raw, out, n_train=3000, seed=0):
    try:
        rows, counts = preprocess_compas(raw)
    except (SchemaError, DataParseError, OSError) as exc:
        raise _data_error(exc) from None
    out = Path(out)
    write_rows(rows, out / "compas.csv")
    try:
        train, test = split_train_test(len(rows), n_train, seed)
    except ValueError as exc:
        raise _data_error(exc) from None
    write_rows([rows[i] for i in train], out / "train.csv")
    write_rows([rows[i] for i in test], out / "test.csv")
    counts.update(n=len(rows), n_train=len(train), n_test=len(test), seed=seed)
    atomic_write_text(out / "counts.json", _dumps(counts))
    print(", ".join(f"{k}={v}" for k, v in counts.items()))
    return EXIT_OK


# -- entry point -------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="cfclass", description="Constrained counterfactual classification.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit a model and write model.json, inference.json, train_scores.csv")
    f.add_argument("--config", help="YAML/JSON config; defaults apply when omitted")
    f.add_argument("--data", required=True)
    f.add_argument("--out", required=True, help="output directory")

    pr = sub.add_parser("predict", help="write counterfactual scores for new rows")
    pr.add_argument("--model", required=True, help="model.json from fit")
    pr.add_argument("--data", required=True)
    pr.add_argument("--out", required=True, help="output CSV")

    ev = sub.add_parser("evaluate", help="AUC, accuracy, cross-entropy and ROC points")
    ev.add_argument("--model", required=True)
    ev.add_argument("--data", required=True)
    ev.add_argument("--out", required=True, help="output directory")
    ev.add_argument("--label", help="label column (default: the model's outcome column)")
    ev.add_argument("--arm", type=int, choices=(0, 1),
                    help="keep only rows whose intervention column equals this value")

    s = sub.add_parser("simulate", help="run the simulated repeated-sampling experiment")
    s.add_argument("--config")
    s.add_argument("--out", required=True, help="output directory")

    c = sub.add_parser("preprocess-compas", help="filter and encode the public two-year recidivism file")
    c.add_argument("--raw", required=True, help="compas-scores-two-years.csv")
    c.add_argument("--out", required=True, help="output directory")
    c.add_argument("--n-train", type=int, default=3000)
    c.add_argument("--seed", type=int, default=0)

    sc = sub.add_parser("schema", help="write the config JSON schema")
    sc.add_argument("--out", required=True)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "fit":
            return cmd_fit(args.config, args.data, args.out)
        if args.command == "predict":
            return cmd_predict(args.model, args.data, args.out)
        if args.command == "evaluate":
            return cmd_evaluate(args.model, args.data, args.out, args.label, args.arm)
        if args.command == "simulate":
            return cmd_simulate(args.config, args.out)
        if args.command == "preprocess-compas":
            return cmd_preprocess_compas(args.raw, args.out, args.n_train, args.seed)
        if args.command == "schema":
            write_schema(args.out)
            return EXIT_OK
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
