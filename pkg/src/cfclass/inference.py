"""Asymptotic covariance of the constrained solution and Wald intervals.

The solution responds to gradient noise through the inverse of the bordered
KKT matrix::

    [ H + sum_j gamma_j Hess g_j   G ]
    [ G'                           0 ]

where ``G`` stacks the gradients of the active constraints. With ``M`` the
top-left ``k x k`` block of that inverse and ``S`` the covariance of the
per-row risk-gradient contributions, ``sqrt(n) (beta_hat - beta*)`` is
approximately ``N(0, M S M')``. All quantities are evaluated at the estimate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit
from scipy.stats import norm

from .exceptions import InferenceError
from .optimizer import LICQResult, Program, Solution, check_licq

__all__ = [
    "InferenceReport",
    "kkt_matrix",
    "upsilon_covariance",
    "solution_covariance",
    "confidence_intervals",
    "infer",
]

DEFAULT_SC_TOL = 1e-6


def kkt_matrix(solution: Solution, program: Program, risk_hessian):
    """Bordered KKT matrix at the solution, restricted to active constraints.

    Raises
    ------
    InferenceError
        The solution did not converge, or the active gradients are linearly
        dependent (the matrix would be singular).
    """
    if not solution.converged:
        raise InferenceError(f"refusing to build the KKT matrix for a solution with status {solution.status!r}")
    beta = solution.beta
    active = list(solution.active_set)
    licq = check_licq(beta, program, active)
    if not licq.holds:
        raise InferenceError(
            f"LICQ fails: {licq.n_active} active constraints but gradient rank {licq.rank}"
        )
    H = np.array(risk_hessian, dtype=float)
    cons = program.all_constraints
    for j in active:
        if solution.gamma[j] and not cons[j].linear:
            H = H + solution.gamma[j] * cons[j].hessian(beta)
    if not active:
        return 0.5 * (H + H.T)
    G = np.column_stack([cons[j].gradient(beta) for j in active])
    na = len(active)
    K = np.block([[H, G], [G.T, np.zeros((na, na))]])
    return 0.5 * (K + K.T)


def upsilon_covariance(beta_hat, phi, B):
    """Covariance (divisor ``n``) of ``(sigmoid(b_i' beta) - phi_i) b_i``."""
    beta_hat = np.asarray(beta_hat, dtype=float).ravel()
    B = np.asarray(B, dtype=float)
    phi = np.asarray(phi, dtype=float).ravel()
    if B.ndim != 2 or B.shape[1] != beta_hat.size or B.shape[0] != phi.size:
        raise ValueError(f"shape mismatch: B {B.shape}, beta {beta_hat.size}, phi {phi.size}")
    contrib = (expit(B @ beta_hat) - phi)[:, None] * B
    centered = contrib - contrib.mean(axis=0)
    S = centered.T @ centered / B.shape[0]
    return 0.5 * (S + S.T)


def solution_covariance(kkt, upsilon_cov):
    """``M S M'`` with ``M`` the top-left block of the inverse KKT matrix."""
    kkt = np.asarray(kkt, dtype=float)
    S = np.asarray(upsilon_cov, dtype=float)
    k = S.shape[0]
    if kkt.shape[0] < k:
        raise ValueError("KKT matrix smaller than the covariance")
    try:
        inv = np.linalg.inv(kkt)
    except np.linalg.LinAlgError as exc:
        raise InferenceError(
            "KKT matrix is singular; check LICQ and strict complementarity at the solution"
        ) from exc
    if not np.isfinite(inv).all() or np.linalg.cond(kkt) > 1e14:
        raise InferenceError(
            "KKT matrix is numerically singular; check LICQ and strict complementarity"
        )
    M = inv[:k, :k]
    C = M @ S @ M.T
    return 0.5 * (C + C.T)


def confidence_intervals(beta_hat, beta_cov, n, level=0.95):
    """Per-coordinate Wald intervals ``beta_j +- z * sqrt(cov_jj / n)``.

    Returns ``(lower, upper, se)``. Variances within ``1e-10 * trace`` of
    zero are treated as zero (pinned coordinates).
    """
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    beta_hat = np.asarray(beta_hat, dtype=float).ravel()
    var = np.diag(np.asarray(beta_cov, dtype=float)).copy()
    tol = 1e-10 * max(abs(np.trace(beta_cov)), np.finfo(float).tiny)
    if (var < -tol).any():
        raise InferenceError(f"negative variance on coordinates {np.flatnonzero(var < -tol).tolist()}")
    var = np.where(var < tol, 0.0, var)
    z = norm.ppf(1.0 - (1.0 - level) / 2.0)
    se = np.sqrt(var / n)
    return beta_hat - z * se, beta_hat + z * se, se


@dataclass
class InferenceReport:
    beta_hat: np.ndarray
    kkt_matrix: np.ndarray
    upsilon_cov: np.ndarray
    beta_cov: np.ndarray
    se: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    level: float
    n: int
    active_set: tuple
    active_names: list
    licq: LICQResult
    min_active_multiplier: float | None
    strict_complementarity: bool
    condition_number: float
    warnings: list = field(default_factory=list)
    note: str = "asymptotic, rate-conditions assumed; evaluated at the estimate"

    def to_dict(self):
        return {
            "beta_hat": self.beta_hat.tolist(),
            "se": self.se.tolist(),
            "ci_lower": self.ci_lower.tolist(),
            "ci_upper": self.ci_upper.tolist(),
            "level": self.level,
            "n": self.n,
            "active_set": list(self.active_set),
            "active_names": list(self.active_names),
            "licq": {"holds": self.licq.holds, "rank": self.licq.rank, "n_active": self.licq.n_active},
            "min_active_multiplier": self.min_active_multiplier,
            "strict_complementarity": self.strict_complementarity,
            "condition_number": self.condition_number,
            "kkt_matrix": self.kkt_matrix.tolist(),
            "upsilon_cov": self.upsilon_cov.tolist(),
            "beta_cov": self.beta_cov.tolist(),
            "warnings": list(self.warnings),
            "note": self.note,
        }


def infer(solution: Solution, program: Program, risk, level=0.95, sc_tol=DEFAULT_SC_TOL):
    """Full inference report for a solution of the risk program.

    ``risk`` is a :class:`~cfclass.risk.CrossEntropyRisk` holding the
    targets and basis matrix the solution was computed from.
    """
    beta = solution.beta
    K = kkt_matrix(solution, program, risk.hessian(beta))
    S = upsilon_covariance(beta, risk.targets, risk.B)
    C = solution_covariance(K, S)
    n = risk.B.shape[0]
    lo, hi, se = confidence_intervals(beta, C, n, level)
    active = list(solution.active_set)
    warnings = []
    min_mult = float(np.min(solution.gamma[active])) if active else None
    sc = min_mult is None or min_mult >= sc_tol
    if not sc:
        warnings.append("weak complementarity: distribution may be non-normal")
    return InferenceReport(
        beta_hat=beta.copy(),
        kkt_matrix=K,
        upsilon_cov=S,
        beta_cov=C,
        se=se,
        ci_lower=lo,
        ci_upper=hi,
        level=level,
        n=n,
        active_set=tuple(active),
        active_names=[solution.constraint_names[j] for j in active],
        licq=check_licq(beta, program, active),
        min_active_multiplier=min_mult,
        strict_complementarity=sc,
        condition_number=float(np.linalg.cond(K)),
        warnings=warnings,
    )
