"""Cross-fitted propensity score and outcome regression estimates."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, FoldAssignment
from .exceptions import DegenerateFoldError, SeparationError
from .learners import LearnerSpec

__all__ = ["NuisanceFit", "fit_nuisances", "predict_pi", "predict_mu"]

DEFAULT_EPSILON = 0.01


def _check_epsilon(epsilon):
    if not 0.0 < epsilon < 0.5:
        raise ValueError(f"epsilon must lie in (0, 0.5), got {epsilon}")


@dataclass(frozen=True, eq=False)
class NuisanceFit:
    """Out-of-fold nuisance predictions for every row.

    Attributes
    ----------
    pi1_raw : ndarray of shape (n,)
        Unclamped estimate of ``P(A=1 | X)`` from the model that did not
        see the row's fold.
    mu0, mu1 : ndarray of shape (n,)
        Out-of-fold estimates of ``E[Y | X, A=0]`` and ``E[Y | X, A=1]``.
    target_a : int
        Intervention level whose counterfactual outcome is targeted.
    epsilon : float
        Clamp level for the propensity of ``target_a``.
    folds : FoldAssignment or None
        ``None`` for fixed (oracle) nuisances supplied as arrays.
    models : list of tuple
        Per fold ``(propensity, mu0, mu1)`` fitted estimators.
    """

    pi1_raw: np.ndarray
    mu0: np.ndarray
    mu1: np.ndarray
    target_a: int = 1
    epsilon: float = DEFAULT_EPSILON
    folds: FoldAssignment | None = None
    models: list = field(default_factory=list)

    def __post_init__(self):
        _check_epsilon(self.epsilon)
        if self.target_a not in (0, 1):
            raise ValueError("target_a must be 0 or 1")
        arrays = [np.asarray(v, dtype=float).ravel() for v in (self.pi1_raw, self.mu0, self.mu1)]
        if len({v.size for v in arrays}) != 1:
            raise ValueError("nuisance arrays must have equal length")
        for name, v in zip(("pi1_raw", "mu0", "mu1"), arrays):
            if ((v < 0) | (v > 1)).any() or not np.isfinite(v).all():
                raise ValueError(f"{name} must lie in [0, 1]")
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    @classmethod
    def from_arrays(cls, pi1, mu0, mu1, target_a=1, epsilon=DEFAULT_EPSILON):
        """Wrap known nuisance values, e.g. the true functions in a simulation."""
        return cls(pi1_raw=pi1, mu0=mu0, mu1=mu1, target_a=target_a, epsilon=epsilon)

    @property
    def n(self):
        return self.pi1_raw.size

    def pi(self):
        """Clamped propensity of ``target_a`` for every row."""
        raw = self.pi1_raw if self.target_a == 1 else 1.0 - self.pi1_raw
        return np.clip(raw, self.epsilon, 1.0 - self.epsilon)

    def mu(self, arm):
        if arm not in (0, 1):
            raise ValueError("arm must be 0 or 1")
        return self.mu1 if arm == 1 else self.mu0


def _fit_one(spec, X, t, fold, what):
    try:
        return spec.build().fit(X, t)
    except SeparationError as exc:
        raise DegenerateFoldError(
            f"fold {fold}: cannot fit {what} on its complement ({exc})", fold=fold
        ) from exc


def fit_nuisances(
    data: Dataset,
    folds: FoldAssignment,
    prop_spec: LearnerSpec | None = None,
    out_spec: LearnerSpec | None = None,
    epsilon=DEFAULT_EPSILON,
    target_a=1,
    outcome_x=None,
):
    """Fit propensity and per-arm outcome models on each fold complement.

    Parameters
    ----------
    data : Dataset
    folds : FoldAssignment
        Must have at least two folds; each fold is predicted by models
        trained on the other folds only.
    prop_spec, out_spec : LearnerSpec
        Learners for ``P(A=1 | X)`` and ``E[Y | X, A=a']``.
    epsilon : float
        Propensity clamp level in (0, 0.5).
    target_a : {0, 1}
    outcome_x : ndarray of shape (n, d), optional
        Alternative covariates used only for the outcome regressions.

    Raises
    ------
    DegenerateFoldError
        Fewer than two folds, or a fold complement lacking one arm or
        otherwise unfit for an unregularized learner.
    """
    _check_epsilon(epsilon)
    prop_spec = prop_spec or LearnerSpec()
    out_spec = out_spec or LearnerSpec()
    if folds.n != data.n:
        raise ValueError("fold assignment and data differ in length")
    if folds.n_folds < 2:
        raise DegenerateFoldError(
            "cross-fitting needs at least 2 folds; with one fold the training complement is empty",
            fold=0,
        )
    xo = data.x if outcome_x is None else np.asarray(outcome_x, dtype=float)
    if xo.ndim == 1:
        xo = xo[:, None]
    if xo.shape[0] != data.n:
        raise ValueError("outcome_x must have one row per observation")

    pi1 = np.empty(data.n)
    mu = {0: np.empty(data.n), 1: np.empty(data.n)}
    models = []
    for b in range(folds.n_folds):
        train = folds.complement(b)
        test = folds.fold(b)
        arms = set(np.unique(data.a[train]).tolist())
        if arms != {0, 1}:
            raise DegenerateFoldError(
                f"fold {b}: training complement contains only arm(s) {sorted(arms)}", fold=b
            )
        prop = _fit_one(prop_spec, data.x[train], data.a[train], b, "the propensity model")
        pi1[test] = prop.predict_proba(data.x[test])[:, 1]
        fitted = [prop]
        for arm in (0, 1):
            rows = train[data.a[train] == arm]
            model = _fit_one(out_spec, xo[rows], data.y[rows], b, f"the arm-{arm} outcome model")
            mu[arm][test] = model.predict_proba(xo[test])[:, 1]
            fitted.append(model)
        models.append(tuple(fitted))
    return NuisanceFit(
        pi1_raw=pi1,
        mu0=mu[0],
        mu1=mu[1],
        target_a=int(target_a),
        epsilon=float(epsilon),
        folds=folds,
        models=models,
    )


def _check_index(fit, row_index):
    i = int(row_index)
    if not 0 <= i < fit.n:
        raise IndexError(f"row index {row_index} out of range for n={fit.n}")
    return i


def predict_pi(fit: NuisanceFit, row_index):
    """Clamped out-of-fold propensity of ``fit.target_a`` for one row."""
    i = _check_index(fit, row_index)
    raw = fit.pi1_raw[i] if fit.target_a == 1 else 1.0 - fit.pi1_raw[i]
    return float(min(max(raw, fit.epsilon), 1.0 - fit.epsilon))


def predict_mu(fit: NuisanceFit, row_index, arm):
    """Out-of-fold outcome regression for ``arm`` at one row."""
    i = _check_index(fit, row_index)
    return float(fit.mu(arm)[i])
