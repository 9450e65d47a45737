"""sklearn-style estimator for constrained counterfactual classification."""

from __future__ import annotations

import warnings
from dataclasses import asdict

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .data import Dataset, split_folds
from .exceptions import InferenceError
from .inference import DEFAULT_SC_TOL, infer
from .influence import pseudo_outcomes
from .learners import LearnerSpec
from .nuisance import DEFAULT_EPSILON, NuisanceFit, fit_nuisances
from .optimizer import Program, SolverOptions, solve
from .risk import BasisSpec, CrossEntropyRisk, expand_basis

__all__ = ["CounterfactualClassifier", "risk_targets", "solve_risk"]

METHODS = ("dr", "plugin")


def risk_targets(data: Dataset, nuisance: NuisanceFit, method="dr"):
    """Per-row targets of the estimated risk: pseudo-outcomes or ``mu_a``."""
    if method == "dr":
        return pseudo_outcomes(data, nuisance).phi
    if method == "plugin":
        return np.asarray(nuisance.mu(nuisance.target_a))
    raise ValueError(f"unknown method {method!r}; choose from {METHODS}")


def solve_risk(targets, B, program: Program, solver: SolverOptions | None = None):
    """Minimize the cross-entropy risk with the given targets over ``program``."""
    risk = CrossEntropyRisk(targets, B)
    return solve(program, risk, solver or SolverOptions()), risk


def _as_spec(spec, default):
    if spec is None:
        return default
    if isinstance(spec, dict):
        return LearnerSpec(**spec)
    return spec


def _as_basis(basis, include_intercept):
    if isinstance(basis, BasisSpec):
        return basis
    if isinstance(basis, dict):
        return BasisSpec(**basis)
    return BasisSpec(kind=basis, include_intercept=include_intercept)


def _as_solver(solver):
    if solver is None:
        return SolverOptions()
    if isinstance(solver, dict):
        return SolverOptions(**solver)
    return solver


class CounterfactualClassifier(ClassifierMixin, BaseEstimator):
    """Classifier of the counterfactual outcome ``Y^a`` under constraints.

    Nuisance functions are cross-fitted on ``X``; the risk is then minimized
    over coefficients of a sigmoid score on a basis of the prediction
    covariates ``V`` (the ``v_indices`` columns of ``X``).

    Parameters
    ----------
    target_a : {0, 1}, default=1
    method : {"dr", "plugin"}, default="dr"
        Doubly-robust pseudo-outcome risk, or plug-in regression risk.
    n_folds : int, default=2
    epsilon : float, default=0.01
        Propensity clamp.
    propensity_learner, outcome_learner : LearnerSpec or dict, optional
    basis : str or BasisSpec, default="quadratic"
    include_intercept : bool, default=False
    v_indices : sequence of int, optional
        Prediction covariates; defaults to all columns of ``X``.
    lower, upper : float or array-like, optional
        Box bounds on the coefficients.
    constraints : sequence of Constraint, default=()
    solver : SolverOptions or dict, optional
    level : float, default=0.95
        Confidence level of the reported intervals.
    random_state : int, default=0
        Seed of the fold assignment.
    compute_inference : bool, default=True

    Attributes
    ----------
    coef_ : ndarray of shape (k,)
    solution_ : Solution
    nuisance_ : NuisanceFit
    targets_ : ndarray of shape (n,)
    inference_ : InferenceReport or None
    """

    def __init__(
        self,
        target_a=1,
        method="dr",
        n_folds=2,
        epsilon=DEFAULT_EPSILON,
        propensity_learner=None,
        outcome_learner=None,
        basis="quadratic",
        include_intercept=False,
        v_indices=None,
        lower=None,
        upper=None,
        constraints=(),
        solver=None,
        level=0.95,
        sc_tol=DEFAULT_SC_TOL,
        random_state=0,
        compute_inference=True,
    ):
        self.target_a = target_a
        self.method = method
        self.n_folds = n_folds
        self.epsilon = epsilon
        self.propensity_learner = propensity_learner
        self.outcome_learner = outcome_learner
        self.basis = basis
        self.include_intercept = include_intercept
        self.v_indices = v_indices
        self.lower = lower
        self.upper = upper
        self.constraints = constraints
        self.solver = solver
        self.level = level
        self.sc_tol = sc_tol
        self.random_state = random_state
        self.compute_inference = compute_inference

    def fit(self, X, y, a, outcome_X=None, nuisance=None):
        """Estimate the coefficients.

        Parameters
        ----------
        X : array-like of shape (n, d_x)
            Confounders.
        y, a : array-like of shape (n,)
            Binary outcome and intervention.
        outcome_X : array-like of shape (n, d), optional
            Alternative covariates used only by the outcome regressions.
        nuisance : NuisanceFit, optional
            Precomputed nuisance estimates; skips cross-fitting.
        """
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {METHODS}")
        X = check_array(X, dtype=float)
        v = () if self.v_indices is None else tuple(self.v_indices)
        data = Dataset(y=y, a=a, x=X, v_indices=v)
        self.n_features_in_ = X.shape[1]
        self.v_indices_ = data.v_indices
        self.basis_ = _as_basis(self.basis, self.include_intercept)

        if nuisance is None:
            folds = split_folds(data.n, self.n_folds, self.random_state)
            default = LearnerSpec()
            nuisance = fit_nuisances(
                data,
                folds,
                _as_spec(self.propensity_learner, default),
                _as_spec(self.outcome_learner, default),
                epsilon=self.epsilon,
                target_a=self.target_a,
                outcome_x=outcome_X,
            )
        self.nuisance_ = nuisance
        self.targets_ = risk_targets(data, nuisance, self.method)

        B = expand_basis(self.basis_, data)
        self.program_ = Program(B.shape[1], self.constraints, self.lower, self.upper)
        self.solution_, risk = solve_risk(self.targets_, B, self.program_, _as_solver(self.solver))
        self.coef_ = self.solution_.beta
        self.classes_ = np.array([0, 1])
        if not self.solution_.converged:
            warnings.warn(
                f"solver did not converge (KKT residual {self.solution_.kkt_residual:.3g})",
                RuntimeWarning,
                stacklevel=2,
            )
        self.inference_ = None
        self.inference_error_ = None
        if self.compute_inference and self.method == "dr" and self.solution_.converged:
            try:
                self.inference_ = infer(self.solution_, self.program_, risk, self.level, self.sc_tol)
            except InferenceError as exc:
                self.inference_error_ = str(exc)
                warnings.warn(f"inference unavailable: {exc}", RuntimeWarning, stacklevel=2)
        return self

    def decision_function_v(self, V):
        """Linear index ``beta' b(V)`` from prediction covariates only."""
        check_is_fitted(self, "coef_")
        V = check_array(V, dtype=float, ensure_min_samples=0)
        if V.shape[1] != len(self.v_indices_):
            raise ValueError(f"expected {len(self.v_indices_)} prediction covariates, got {V.shape[1]}")
        if V.shape[0] == 0:
            return np.empty(0)
        return expand_basis(self.basis_, V) @ self.coef_

    def predict_proba_v(self, V):
        """Counterfactual scores from prediction covariates only."""
        return expit(self.decision_function_v(V))

    def _select_v(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=float, ensure_min_samples=0)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return X[:, list(self.v_indices_)]

    def decision_function(self, X):
        return self.decision_function_v(self._select_v(X))

    def predict_proba(self, X):
        p = expit(self.decision_function(X))
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(int)

    def summary(self):
        """Plain dict with the fitted value, diagnostics and intervals."""
        check_is_fitted(self, "coef_")
        out = {
            "method": self.method,
            "target_a": self.target_a,
            "basis": self.basis_.to_dict(),
            "solver": asdict(_as_solver(self.solver)),
            "solution": self.solution_.to_dict(),
        }
        if self.inference_ is not None:
            out["inference"] = self.inference_.to_dict()
        return out
