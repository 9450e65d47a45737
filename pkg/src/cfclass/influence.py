"""Pseudo-outcomes from the uncentered efficient influence function.

For target level ``a`` the pseudo-outcome of a row is::

    phi = 1(A = a) / pi_a(X) * (Y - mu_A(X)) + mu_a(X)

Its mean estimates ``E[Y^a]``; weighted by any fixed ``h(X)`` its mean
estimates ``E[mu_a(X) h(X)]`` with a bias that is a product of the two
nuisance errors.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .data import Dataset
from .nuisance import NuisanceFit

__all__ = ["PseudoOutcomes", "FunctionalEstimate", "pseudo_outcome", "pseudo_outcomes", "dr_functional"]


def pseudo_outcome(y, a_row, pi_hat, mu_a_hat, mu_arow_hat, target_a=1):
    """Pseudo-outcome of a single row.

    ``mu_arow_hat`` is the outcome regression evaluated at the row's own
    arm; it only matters when ``a_row == target_a``.
    """
    if not 0.0 < pi_hat < 1.0:
        raise ValueError(f"pi_hat must lie in (0, 1), got {pi_hat}")
    if a_row != target_a:
        return float(mu_a_hat)
    return float((y - mu_arow_hat) / pi_hat + mu_a_hat)


@dataclass(frozen=True, eq=False)
class PseudoOutcomes:
    phi: np.ndarray
    target_a: int
    nuisance: NuisanceFit | None = None

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=float).ravel()
        if not np.isfinite(phi).all():
            raise ValueError("pseudo-outcomes must be finite")
        phi.setflags(write=False)
        object.__setattr__(self, "phi", phi)

    def __len__(self):
        return self.phi.size

    def __array__(self, dtype=None, copy=None):
        return self.phi if dtype is None else self.phi.astype(dtype)


def pseudo_outcomes(data: Dataset, fit: NuisanceFit):
    """Row-wise pseudo-outcomes using the out-of-fold nuisance estimates."""
    if fit.n != data.n:
        raise ValueError(f"nuisance fit has {fit.n} rows, data has {data.n}")
    a = fit.target_a
    pi = fit.pi()
    mu_a = fit.mu(a)
    on_arm = data.a == a
    # on the target arm mu_A(X) is mu_a(X)
    phi = np.where(on_arm, (data.y - mu_a) / pi, 0.0) + mu_a
    return PseudoOutcomes(phi=phi, target_a=a, nuisance=fit)


class FunctionalEstimate(NamedTuple):
    estimate: float
    se: float
    note: str = "asymptotic, rate-conditions assumed"


def dr_functional(phi, h):
    """Estimate ``E[mu_a(X) h(X)]`` by the sample mean of ``phi * h``.

    Returns the estimate together with the influence-function standard error
    ``sqrt(var(phi * h) / n)``.
    """
    phi = np.asarray(phi, dtype=float).ravel()
    h = np.asarray(h, dtype=float).ravel()
    if phi.size != h.size:
        raise ValueError(f"length mismatch: phi has {phi.size}, h has {h.size}")
    if phi.size == 0:
        raise ValueError("empty input")
    prod = phi * h
    n = prod.size
    var = prod.var(ddof=1) if n > 1 else 0.0
    return FunctionalEstimate(float(prod.mean()), float(np.sqrt(var / n)))
