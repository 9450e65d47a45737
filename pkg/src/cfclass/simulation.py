"""Synthetic data with known nuisances and the repeated-sampling experiment.

Six independent standard normal covariates; treatment is logistic in ``X``;
each potential outcome thresholds a linear index plus a shared standard
normal error, so ``E[Y^1 | X] = Phi(X1 + 2 X2 - 2 X3 - X4 + X5)`` exactly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from joblib import Parallel, delayed
from scipy.special import expit
from scipy.stats import norm

from .data import Dataset, split_folds
from .estimator import risk_targets, solve_risk
from .learners import LearnerSpec
from .nuisance import DEFAULT_EPSILON, fit_nuisances
from .optimizer import Program, SolverOptions
from .risk import BasisSpec, expand_basis

__all__ = [
    "DGPConfig",
    "SimulatedSample",
    "OracleResult",
    "ExperimentResult",
    "SUMMARY_COLUMNS",
    "SIMULATION_LEARNER",
    "true_propensity",
    "true_mu",
    "simulate",
    "generate_dgp",
    "distort_covariates",
    "oracle_beta_star",
    "run_dr_experiment",
]

logger = logging.getLogger(__name__)

D_X = 6
PROPENSITY_COEF = np.array([-1.0, 0.5, -0.25, -0.1, 0.05, 0.05])
INDEX1_COEF = np.array([1.0, 2.0, -2.0, -1.0, 1.0, 0.0])
INDEX0_COEF = np.array([1.0, 2.0, -2.0, -1.0, 0.0, 1.0])

# Default nuisance learner for the simulated design: the true propensity is
# linear-logit and Phi(linear index) is close to a linear logit, so the
# additive model is well specified (or nearly) for both nuisances.
SIMULATION_LEARNER = LearnerSpec("logistic-linear", regularization=1e-4)

SUMMARY_COLUMNS = (
    "method", "x_mode", "n",
    "mean_beta_err", "se_beta_err",
    "mean_value_err", "se_value_err",
    "mean_class_err", "se_class_err",
)


def true_propensity(x):
    """``P(A=1 | X)``."""
    return expit(np.asarray(x, dtype=float) @ PROPENSITY_COEF)


def true_mu(x, arm=1):
    """``E[Y | X, A=arm]``; closed form through the normal CDF."""
    x = np.asarray(x, dtype=float)
    if arm == 1:
        return norm.cdf(x @ INDEX1_COEF)
    # Y^0 = 1{index0 + e < 0}
    return norm.cdf(-(x @ INDEX0_COEF))


def distort_covariates(x):
    """``(X1 X3 X6, X2^2, X4 / (1 + exp(X5)), exp(X5 / 2))``, row-wise."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != D_X:
        raise ValueError(f"expected {D_X} covariates, got {x.shape[1]}")
    out = np.column_stack([
        x[:, 0] * x[:, 2] * x[:, 5],
        x[:, 1] ** 2,
        x[:, 3] / (1.0 + np.exp(x[:, 4])),
        np.exp(x[:, 4] / 2.0),
    ])
    return out[0] if single else out


@dataclass(frozen=True)
class DGPConfig:
    n: int
    seed: int = 0
    target_a: int = 1
    distort_outcome_covariates: bool = False

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")


class SimulatedSample(NamedTuple):
    data: Dataset
    y0: np.ndarray
    y1: np.ndarray
    pi1: np.ndarray
    mu0: np.ndarray
    mu1: np.ndarray


def simulate(n, rng):
    """Draw ``n`` rows with both potential outcomes materialized."""
    rng = np.random.default_rng(rng)
    x = rng.standard_normal((n, D_X))
    pi1 = true_propensity(x)
    a = (rng.random(n) < pi1).astype(int)
    e = rng.standard_normal(n)
    y1 = (x @ INDEX1_COEF + e > 0).astype(int)
    y0 = (x @ INDEX0_COEF + e < 0).astype(int)
    y = np.where(a == 1, y1, y0)
    data = Dataset(y=y, a=a, x=x, x_names=tuple(f"x{j + 1}" for j in range(D_X)))
    return SimulatedSample(data, y0, y1, pi1, true_mu(x, 0), true_mu(x, 1))


def generate_dgp(config: DGPConfig):
    """Observed dataset for ``config``; deterministic given the seed."""
    return simulate(config.n, config.seed).data


@dataclass
class OracleResult:
    beta_star: np.ndarray
    v_star: float
    solution: object
    metadata: dict = field(default_factory=dict)


def oracle_beta_star(basis: BasisSpec, program: Program, oracle_n=1_000_000, seed=0,
                     target_a=1, solver: SolverOptions | None = None, antithetic=True):
    """Solve the population program on a large sample using the true ``mu_a``.

    The true regression replaces the pseudo-outcomes, so no nuisance error
    enters; only sampling error in ``X`` remains. With ``antithetic`` the
    sample is made of pairs ``(x, -x)``, which keeps the sample as symmetric
    as the covariate distribution and removes most of that error.

    Raises
    ------
    RuntimeError
        The solver did not converge.
    """
    rng = np.random.default_rng(seed)
    if antithetic:
        half = rng.standard_normal(((oracle_n + 1) // 2, D_X))
        x = np.concatenate([half, -half])[:oracle_n]
        del half
    else:
        x = rng.standard_normal((oracle_n, D_X))
    mu = true_mu(x, target_a)
    B = expand_basis(basis, x)
    del x
    solver = solver or SolverOptions(starts=1, kkt_tol=1e-9)
    solution, _ = solve_risk(mu, B, program, solver)
    if not solution.converged:
        raise RuntimeError(f"oracle solve did not converge (KKT residual {solution.kkt_residual:.3g})")
    meta = {
        "definition": "minimizer of the cross-entropy risk with the true outcome regression "
                      "on an independent covariate sample",
        "oracle_n": int(oracle_n),
        "seed": int(seed),
        "antithetic": bool(antithetic),
        "target_a": int(target_a),
        "kkt_residual": solution.kkt_residual,
    }
    return OracleResult(solution.beta.copy(), float(solution.value), solution, meta)


@dataclass
class ExperimentResult:
    records: list
    failures: list
    oracle: OracleResult | None = None

    def summary(self):
        """Mean and standard error per ``(method, x_mode, n)``, sorted."""
        groups = {}
        for r in self.records:
            groups.setdefault((r["method"], r["x_mode"], r["n"]), []).append(r)
        rows = []
        for key in sorted(groups):
            recs = groups[key]
            row = dict(zip(("method", "x_mode", "n"), key))
            for metric in ("beta_err", "value_err", "class_err"):
                vals = np.array([r[metric] for r in recs])
                row[f"mean_{metric}"] = float(vals.mean())
                row[f"se_{metric}"] = float(vals.std(ddof=1) / np.sqrt(vals.size)) if vals.size > 1 else 0.0
            rows.append(row)
        return rows

    def mean(self, metric, method, x_mode, n):
        vals = [r[metric] for r in self.records
                if r["method"] == method and r["x_mode"] == x_mode and r["n"] == n]
        return float(np.mean(vals))


def _replication(n, rep, seed, methods, x_modes, oracle, basis, program, prop_spec,
                 out_spec, epsilon, n_folds, solver, target_a):
    ss = np.random.SeedSequence([int(seed), int(n), int(rep)])
    train_ss, test_ss, fold_ss = ss.spawn(3)
    train = simulate(n, np.random.default_rng(train_ss))
    test = simulate(n, np.random.default_rng(test_ss))
    y_test = test.y1 if target_a == 1 else test.y0
    B = expand_basis(basis, train.data)
    B_test = expand_basis(basis, test.data)
    folds = split_folds(n, n_folds, int(fold_ss.generate_state(1)[0]))
    records, failures = [], []
    for x_mode in x_modes:
        try:
            outcome_x = distort_covariates(train.data.x) if x_mode == "distorted" else None
            nuis = fit_nuisances(train.data, folds, prop_spec, out_spec, epsilon, target_a, outcome_x)
        except Exception as exc:  # recorded, replication excluded
            failures.extend({"n": n, "rep": rep, "method": m, "x_mode": x_mode, "error": repr(exc)}
                            for m in methods)
            continue
        for method in methods:
            try:
                sol, _ = solve_risk(risk_targets(train.data, nuis, method), B, program, solver)
                if not sol.converged:
                    raise RuntimeError(f"solver not converged, KKT residual {sol.kkt_residual:.3g}")
            except Exception as exc:
                failures.append({"n": n, "rep": rep, "method": method, "x_mode": x_mode, "error": repr(exc)})
                continue
            pred = (expit(B_test @ sol.beta) >= 0.5).astype(int)
            records.append({
                "method": method,
                "x_mode": x_mode,
                "n": int(n),
                "rep": int(rep),
                "beta_err": float(np.linalg.norm(sol.beta - oracle.beta_star)),
                "value_err": float(abs(sol.value - oracle.v_star)),
                "class_err": float(np.mean(pred != y_test)),
                "kkt_residual": float(sol.kkt_residual),
                "max_violation": float(sol.max_violation),
            })
    return records, failures


def run_dr_experiment(
    sizes,
    reps,
    methods=("dr", "plugin"),
    seed=0,
    x_modes=("correct", "distorted"),
    oracle: OracleResult | None = None,
    basis: BasisSpec | None = None,
    program: Program | None = None,
    prop_spec: LearnerSpec | None = None,
    out_spec: LearnerSpec | None = None,
    epsilon=DEFAULT_EPSILON,
    n_folds=2,
    solver: SolverOptions | None = None,
    target_a=1,
    oracle_n=1_000_000,
    n_jobs=1,
):
    """Repeat estimation over sample sizes and record errors against the oracle.

    Every replication draws a training sample and an independent test sample
    of the same size from seeds derived from ``(seed, n, rep)``, so results
    do not depend on scheduling. Errors are ``||beta_hat - beta*||``,
    ``|v_hat - v*|`` and the test misclassification rate against the true
    counterfactual labels.
    """
    sizes = [int(s) for s in sizes]
    if not sizes or reps < 1:
        raise ValueError("need at least one size and one replication")
    for m in methods:
        if m not in ("dr", "plugin"):
            raise ValueError(f"unknown method {m!r}")
    for xm in x_modes:
        if xm not in ("correct", "distorted"):
            raise ValueError(f"unknown x_mode {xm!r}")
    basis = basis or BasisSpec("quadratic")
    k = basis.k_prime(D_X)
    program = program or Program(k, lower=-1.0, upper=1.0)
    prop_spec = prop_spec or SIMULATION_LEARNER
    out_spec = out_spec or SIMULATION_LEARNER
    solver = solver or SolverOptions()
    if oracle is None:
        oracle = oracle_beta_star(basis, program, oracle_n, seed=int(seed) + 10_007, target_a=target_a)

    jobs = [(n, rep) for n in sizes for rep in range(reps)]
    args = (seed, methods, x_modes, oracle, basis, program, prop_spec, out_spec,
            epsilon, n_folds, solver, target_a)
    if n_jobs == 1:
        out = [_replication(n, rep, *args) for n, rep in jobs]
    else:
        out = Parallel(n_jobs=n_jobs)(delayed(_replication)(n, rep, *args) for n, rep in jobs)
    records = [r for recs, _ in out for r in recs]
    failures = [f for _, fails in out for f in fails]
    key = lambda r: (r["method"], r["x_mode"], r["n"], r["rep"])  # noqa: E731
    records.sort(key=key)
    failures.sort(key=key)
    if failures:
        logger.warning("%d replication fits failed and were excluded", len(failures))
    return ExperimentResult(records, failures, oracle)
