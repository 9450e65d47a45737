"""Probability learners for the nuisance functions.

Three kinds are available, each an sklearn-compatible classifier whose
``predict_proba`` returns probabilities of the positive class:

* ``logistic-linear``: penalized logistic regression fitted by damped Newton.
* ``logistic-quadratic``: the same on a degree-2 expansion (squares and
  pairwise products) of the inputs.
* ``gradient-boosted-stumps``: gradient boosting of shallow trees on the
  logistic loss.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import scipy.linalg
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.ensemble import GradientBoostingClassifier
from sklearn.preprocessing import PolynomialFeatures
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import SeparationError

__all__ = [
    "LearnerSpec",
    "LogisticLinear",
    "LogisticQuadratic",
    "BoostedStumps",
    "fit",
    "predict",
    "LEARNER_KINDS",
]

LEARNER_KINDS = ("logistic-linear", "logistic-quadratic", "gradient-boosted-stumps")

_GRAD_TOL = 1e-8
_MAX_NORM = 1e6


def _log1pexp(u):
    return np.logaddexp(0.0, u)


def _penalized_nll(theta, Z, y, lam):
    u = Z @ theta
    # mean of log(1 + e^u) - y u, the Bernoulli negative log-likelihood
    return np.mean(_log1pexp(u) - y * u) + 0.5 * lam * theta @ theta


def newton_logistic(Z, y, lam=0.0, max_iter=100, tol=_GRAD_TOL):
    """Minimize mean cross-entropy plus ``lam/2 * ||theta||^2`` over ``theta``.

    ``Z`` already contains the intercept column. The penalty covers every
    coefficient, intercept included, so any ``lam > 0`` has a unique finite
    minimizer. Damped Newton with step halving.
    """
    n, p = Z.shape
    theta = np.zeros(p)
    f = _penalized_nll(theta, Z, y, lam)
    for _ in range(max_iter):
        mu = expit(Z @ theta)
        grad = Z.T @ (mu - y) / n + lam * theta
        if np.linalg.norm(grad) <= tol:
            return theta, True
        w = mu * (1.0 - mu)
        H = (Z * w[:, None]).T @ Z / n + lam * np.eye(p)
        try:
            step = scipy.linalg.solve(H, grad, assume_a="pos")
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
            step = np.linalg.lstsq(H, grad, rcond=None)[0]
        t = 1.0
        slope = grad @ step
        while True:
            cand = theta - t * step
            f_new = _penalized_nll(cand, Z, y, lam)
            if f_new <= f - 1e-4 * t * slope or t < 1e-10:
                break
            t *= 0.5
        if t < 1e-10 and f_new > f:
            # no descent possible at machine precision; treat as converged
            return theta, np.linalg.norm(grad) <= 1e3 * tol
        theta, f = cand, f_new
        if np.linalg.norm(theta) > _MAX_NORM:
            return theta, False
    mu = expit(Z @ theta)
    grad = Z.T @ (mu - y) / n + lam * theta
    return theta, np.linalg.norm(grad) <= tol


def _check_targets(y, lam, name):
    y = np.asarray(y, dtype=float).ravel()
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError(f"{name}: targets must be binary 0/1")
    if lam == 0 and (y.min() == y.max()):
        raise SeparationError(
            f"{name}: targets are all {int(y[0])}; the unregularized fit diverges"
        )
    return y


class LogisticLinear(ClassifierMixin, BaseEstimator):
    """Penalized logistic regression fitted by damped Newton iterations.

    Parameters
    ----------
    regularization : float, default=0.0
        Ridge strength on the mean cross-entropy scale.
    max_iter : int, default=100
    """

    def __init__(self, regularization=0.0, max_iter=100):
        self.regularization = regularization
        self.max_iter = max_iter

    def _design(self, X):
        return np.column_stack([np.ones(X.shape[0]), X])

    def fit(self, X, y):
        if self.regularization < 0:
            raise ValueError("regularization must be >= 0")
        X = check_array(X, dtype=float)
        if X.shape[0] != np.size(y):
            raise ValueError(f"{X.shape[0]} feature rows but {np.size(y)} targets")
        if X.shape[0] < 2:
            raise ValueError("need at least 2 training rows")
        y = _check_targets(y, self.regularization, type(self).__name__)
        self.n_features_in_ = X.shape[1]
        Z = self._design(X)
        theta, ok = newton_logistic(Z, y, self.regularization, self.max_iter)
        if not ok:
            if self.regularization == 0:
                raise SeparationError(
                    f"{type(self).__name__}: Newton did not converge; data look separable"
                )
            raise RuntimeError(f"{type(self).__name__}: Newton did not converge")
        if self.regularization == 0:
            u = Z @ theta
            # a strictly separating index means the likelihood has no maximizer
            if np.all(np.where(y == 1, u > 0, u < 0)):
                raise SeparationError(f"{type(self).__name__}: training targets are linearly separable")
        self.intercept_ = float(theta[0])
        self.coef_ = theta[1:]
        self.classes_ = np.array([0, 1])
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=float, ensure_min_samples=0)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return self._design(X)[:, 1:] @ self.coef_ + self.intercept_

    def predict_proba(self, X):
        p = expit(self.decision_function(X))
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(int)


class LogisticQuadratic(LogisticLinear):
    """Logistic regression on ``[X, X**2, pairwise products of X]``."""

    def fit(self, X, y):
        X = check_array(X, dtype=float)
        self._poly = PolynomialFeatures(degree=2, include_bias=False).fit(X)
        super().fit(X, y)
        return self

    def _design(self, X):
        Q = self._poly.transform(X) if X.shape[0] else np.empty((0, self._poly.n_output_features_))
        return np.column_stack([np.ones(X.shape[0]), Q])


class BoostedStumps(ClassifierMixin, BaseEstimator):
    """Gradient-boosted shallow trees on the logistic loss.

    Deterministic: no row subsampling and a fixed internal seed.
    """

    def __init__(self, rounds=100, learning_rate=0.1, max_depth=1):
        self.rounds = rounds
        self.learning_rate = learning_rate
        self.max_depth = max_depth

    def fit(self, X, y):
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must lie in (0, 1]")
        if self.rounds < 1 or self.max_depth < 1:
            raise ValueError("rounds and max_depth must be >= 1")
        X = check_array(X, dtype=float)
        if X.shape[0] != np.size(y):
            raise ValueError(f"{X.shape[0]} feature rows but {np.size(y)} targets")
        y = _check_targets(y, 0.0, type(self).__name__).astype(int)
        self.n_features_in_ = X.shape[1]
        self.model_ = GradientBoostingClassifier(
            n_estimators=self.rounds,
            learning_rate=self.learning_rate,
            max_depth=self.max_depth,
            subsample=1.0,
            random_state=0,
        ).fit(X, y)
        self.classes_ = np.array([0, 1])
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=float, ensure_min_samples=0)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        if X.shape[0] == 0:
            return np.empty((0, 2))
        return self.model_.predict_proba(X)

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(int)


@dataclass(frozen=True)
class LearnerSpec:
    """Declarative description of a nuisance learner.

    ``regularization`` applies to the logistic kinds; ``rounds``,
    ``learning_rate`` and ``max_depth`` to boosting.
    """

    kind: str = "logistic-quadratic"
    regularization: float = 1e-4
    rounds: int = 100
    learning_rate: float = 0.1
    max_depth: int = 1

    def __post_init__(self):
        if self.kind not in LEARNER_KINDS:
            raise ValueError(f"unknown learner kind {self.kind!r}; choose from {LEARNER_KINDS}")
        if self.regularization < 0:
            raise ValueError("regularization must be >= 0")
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must lie in (0, 1]")
        if self.rounds < 1 or self.max_depth < 1:
            raise ValueError("rounds and max_depth must be >= 1")

    def build(self):
        """Unfitted estimator for this spec."""
        if self.kind == "logistic-linear":
            return LogisticLinear(regularization=self.regularization)
        if self.kind == "logistic-quadratic":
            return LogisticQuadratic(regularization=self.regularization)
        return BoostedStumps(
            rounds=self.rounds, learning_rate=self.learning_rate, max_depth=self.max_depth
        )

    def to_dict(self):
        return asdict(self)


def fit(spec, features, targets):
    """Fit the learner described by ``spec``; returns the fitted estimator."""
    if isinstance(spec, dict):
        spec = LearnerSpec(**spec)
    return spec.build().fit(features, targets)


def predict(model, features):
    """Positive-class probabilities, one per row of ``features``."""
    return model.predict_proba(features)[:, 1]
