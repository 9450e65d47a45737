"""Sigmoid score, basis expansion and the estimated cross-entropy risks.

Both risk estimators share one form::

    L(beta) = -mean( t_i log s_i + (1 - t_i) log(1 - s_i) ),  s_i = sigmoid(beta' b_i)

with targets ``t`` equal to the pseudo-outcomes (doubly robust) or to the
outcome-regression predictions (plug-in). The targets enter linearly, so the
gradient ``mean((s_i - t_i) b_i)`` and the Hessian
``mean(s_i (1 - s_i) b_i b_i')`` follow directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .data import Dataset

__all__ = [
    "BasisSpec",
    "BasisExpansion",
    "RiskEval",
    "CrossEntropyRisk",
    "sigmoid",
    "expand_basis",
    "dr_risk",
    "plugin_risk",
    "risk_gradient",
    "risk_hessian",
]

_TINY = np.finfo(float).tiny
BASIS_KINDS = ("raw", "quadratic", "custom")


def sigmoid(u):
    """Logistic function, never exactly 0 for very negative input."""
    out = np.maximum(expit(u), _TINY)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class BasisSpec:
    """Which monomials of ``V`` make up the basis ``b(V)``.

    Parameters
    ----------
    kind : {"raw", "quadratic", "custom"}
        ``raw`` is ``V`` itself; ``quadratic`` is ``V``, squares and pairwise
        products; ``custom`` takes ``terms`` verbatim.
    include_intercept : bool
        Prepend a column of ones (ignored for ``custom``).
    terms : tuple of tuple of int
        For ``custom``: each term is a tuple of zero-based ``V`` columns
        whose product forms one basis column; ``()`` is the constant.
    """

    kind: str = "quadratic"
    include_intercept: bool = False
    terms: tuple = field(default=())

    def __post_init__(self):
        if self.kind not in BASIS_KINDS:
            raise ValueError(f"unknown basis kind {self.kind!r}; choose from {BASIS_KINDS}")
        object.__setattr__(self, "terms", tuple(tuple(int(j) for j in t) for t in self.terms))
        if self.kind == "custom" and not self.terms:
            raise ValueError("custom basis needs at least one term")

    def term_list(self, d_v):
        """Monomials in column order for ``d_v`` prediction covariates."""
        if self.kind == "custom":
            bad = [t for t in self.terms if any(j < 0 or j >= d_v for j in t)]
            if bad:
                raise ValueError(f"custom terms {bad} reference columns outside 0..{d_v - 1}")
            return list(self.terms)
        terms = [()] if self.include_intercept else []
        terms += [(j,) for j in range(d_v)]
        if self.kind == "quadratic":
            terms += [(j, j) for j in range(d_v)]
            terms += list(combinations(range(d_v), 2))
        return terms

    def k_prime(self, d_v):
        return len(self.term_list(d_v))

    def to_dict(self):
        return {"kind": self.kind, "include_intercept": self.include_intercept,
                "terms": [list(t) for t in self.terms]}


def _evaluate_terms(terms, V):
    B = np.ones((V.shape[0], len(terms)))
    for c, term in enumerate(terms):
        for j in term:
            B[:, c] *= V[:, j]
    return B


def expand_basis(spec: BasisSpec, data):
    """Evaluate ``b(V)`` row-wise.

    ``data`` is a :class:`Dataset` (its prediction covariates are used) or a
    2-D array already restricted to ``V``.
    """
    V = data.v if isinstance(data, Dataset) else np.asarray(data, dtype=float)
    if V.ndim == 1:
        V = V[:, None]
    B = _evaluate_terms(spec.term_list(V.shape[1]), V)
    if not np.isfinite(B).all():
        raise ValueError("basis expansion produced non-finite values")
    return B


def term_names(spec: BasisSpec, names):
    out = []
    for t in spec.term_list(len(names)):
        if not t:
            out.append("1")
        elif len(t) == 2 and t[0] == t[1]:
            out.append(f"{names[t[0]]}^2")
        else:
            out.append("*".join(names[j] for j in t))
    return out


class BasisExpansion(TransformerMixin, BaseEstimator):
    """sklearn transformer wrapper around :func:`expand_basis`."""

    def __init__(self, kind="quadratic", include_intercept=False, terms=()):
        self.kind = kind
        self.include_intercept = include_intercept
        self.terms = terms

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        self.spec_ = BasisSpec(self.kind, self.include_intercept, tuple(self.terms))
        self.n_features_in_ = X.shape[1]
        self.n_output_features_ = self.spec_.k_prime(X.shape[1])
        return self

    def transform(self, X):
        check_is_fitted(self, "spec_")
        X = check_array(X, dtype=float, ensure_min_samples=0)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return expand_basis(self.spec_, X)

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "spec_")
        if input_features is None:
            input_features = [f"x{j}" for j in range(self.n_features_in_)]
        return np.array(term_names(self.spec_, list(input_features)), dtype=object)


def _prep(beta, targets, B):
    beta = np.asarray(beta, dtype=float).ravel()
    B = np.asarray(B, dtype=float)
    if B.ndim != 2 or B.shape[1] != beta.size:
        raise ValueError(f"basis matrix shape {B.shape} does not match beta of length {beta.size}")
    if targets is not None:
        targets = np.asarray(targets, dtype=float).ravel()
        if targets.size != B.shape[0]:
            raise ValueError(f"{targets.size} targets for {B.shape[0]} basis rows")
        if not np.isfinite(targets).all():
            raise ValueError("targets must be finite")
    return beta, targets, B


def _cross_entropy(beta, targets, B):
    beta, t, B = _prep(beta, targets, B)
    u = B @ beta
    # -t log s(u) - (1 - t) log(1 - s(u)) == log(1 + e^u) - t u, exact for all finite u
    return float(np.mean(np.logaddexp(0.0, u) - t * u))


def dr_risk(beta, phi, B):
    """Doubly-robust risk estimate with pseudo-outcomes ``phi`` as targets."""
    return _cross_entropy(beta, phi, B)


def plugin_risk(beta, mu_hat, B):
    """Plug-in risk estimate with outcome-regression predictions as targets."""
    mu_hat = np.asarray(mu_hat, dtype=float)
    if ((mu_hat < 0) | (mu_hat > 1)).any():
        raise ValueError("plug-in targets must lie in [0, 1]")
    return _cross_entropy(beta, mu_hat, B)


def risk_gradient(beta, targets, B):
    """Gradient ``mean((sigmoid(b_i' beta) - t_i) b_i)``."""
    beta, t, B = _prep(beta, targets, B)
    s = expit(B @ beta)
    return B.T @ (s - t) / B.shape[0]


def risk_hessian(beta, B):
    """Hessian ``mean(s_i (1 - s_i) b_i b_i')``; independent of the targets."""
    beta, _, B = _prep(beta, None, B)
    s = expit(B @ beta)
    w = s * (1.0 - s)
    H = (B * w[:, None]).T @ B / B.shape[0]
    return 0.5 * (H + H.T)


@dataclass(frozen=True)
class RiskEval:
    value: float
    gradient: np.ndarray
    hessian: np.ndarray | None = None


class CrossEntropyRisk:
    """Risk objective bound to fixed targets and basis matrix.

    Exposes ``value``, ``gradient`` and ``hessian`` callables for the solver.
    The targets do not depend on ``beta`` so they are computed once.
    """

    def __init__(self, targets, B):
        _, t, B = _prep(np.zeros(np.shape(B)[1]), targets, B)
        self.targets = t
        self.B = B

    @property
    def dim(self):
        return self.B.shape[1]

    def value(self, beta):
        return _cross_entropy(beta, self.targets, self.B)

    def gradient(self, beta):
        return risk_gradient(beta, self.targets, self.B)

    def hessian(self, beta):
        return risk_hessian(beta, self.B)

    def evaluate(self, beta, hessian=False):
        return RiskEval(self.value(beta), self.gradient(beta), self.hessian(beta) if hessian else None)

    def per_row_gradient(self, beta):
        """Per-row gradient contributions ``(s_i - t_i) b_i``, shape (n, k)."""
        s = expit(self.B @ np.asarray(beta, dtype=float))
        return (s - self.targets)[:, None] * self.B
