"""Multi-start solver for smooth programs with inequality constraints and boxes.

Each start runs an augmented Lagrangian loop over the general constraints,
with box bounds handled natively by a limited-memory quasi-Newton inner
solver (L-BFGS-B), then polishes the point with Newton steps on the KKT
system restricted to the active constraints. Box bounds are also exposed as
linear constraints ``beta_i - u_i <= 0`` and ``l_i - beta_i <= 0`` so that
multipliers, active sets and the inference module treat them uniformly.
"""

from __future__ import annotations

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple, Sequence

import numpy as np
import scipy.linalg
from scipy.optimize import minimize, nnls

__all__ = [
    "Constraint",
    "LinearConstraint",
    "NormBall",
    "BoxBound",
    "FunctionConstraint",
    "Program",
    "SolverOptions",
    "Solution",
    "LICQResult",
    "solve",
    "kkt_residual",
    "active_set",
    "check_licq",
]

logger = logging.getLogger(__name__)


class Constraint:
    """Smooth inequality ``g(beta) <= 0``."""

    name = "g"
    linear = False

    def value(self, beta):
        raise NotImplementedError

    def gradient(self, beta):
        raise NotImplementedError

    def hessian(self, beta):
        raise NotImplementedError

    def to_dict(self):
        raise TypeError(f"{type(self).__name__} is not serializable")


class LinearConstraint(Constraint):
    """``coef' beta - rhs <= 0``."""

    linear = True

    def __init__(self, coef, rhs=0.0, name=None):
        self.coef = np.asarray(coef, dtype=float).ravel()
        self.rhs = float(rhs)
        self.name = name or "linear"

    def value(self, beta):
        return float(self.coef @ beta - self.rhs)

    def gradient(self, beta):
        return self.coef.copy()

    def hessian(self, beta):
        return np.zeros((self.coef.size, self.coef.size))

    def to_dict(self):
        return {"type": "linear", "coef": self.coef.tolist(), "rhs": self.rhs}


class NormBall(Constraint):
    """``||beta - center||^2 - radius^2 <= 0``."""

    def __init__(self, radius, center=None, name=None):
        if radius <= 0:
            raise ValueError("radius must be positive")
        self.radius = float(radius)
        self.center = None if center is None else np.asarray(center, dtype=float).ravel()
        self.name = name or "norm_ball"

    def _shift(self, beta):
        return beta if self.center is None else beta - self.center

    def value(self, beta):
        d = self._shift(beta)
        return float(d @ d - self.radius**2)

    def gradient(self, beta):
        return 2.0 * self._shift(beta)

    def hessian(self, beta):
        return 2.0 * np.eye(np.size(beta))

    def to_dict(self):
        return {"type": "norm_ball", "radius": self.radius,
                "center": None if self.center is None else self.center.tolist()}


class BoxBound(LinearConstraint):
    """One side of a coordinate bound, as a linear constraint."""

    def __init__(self, dim, index, bound, upper):
        coef = np.zeros(dim)
        coef[index] = 1.0 if upper else -1.0
        super().__init__(coef, bound if upper else -bound,
                         name=f"{'upper' if upper else 'lower'}[{index}]")
        self.index = int(index)
        self.bound = float(bound)
        self.upper = bool(upper)


class FunctionConstraint(Constraint):
    """Constraint from user callables for value, gradient and Hessian."""

    def __init__(self, fun, grad, hess, name="g", linear=False):
        self._fun, self._grad, self._hess = fun, grad, hess
        self.name = name
        self.linear = linear

    def value(self, beta):
        return float(self._fun(beta))

    def gradient(self, beta):
        return np.asarray(self._grad(beta), dtype=float)

    def hessian(self, beta):
        return np.asarray(self._hess(beta), dtype=float)


class Program:
    """Feasible set ``{beta : g_j(beta) <= 0} intersected with a box``.

    Parameters
    ----------
    dim : int
    constraints : sequence of Constraint
        General smooth constraints.
    lower, upper : float or array-like, optional
        Box bounds; infinite entries mean no bound.
    """

    def __init__(self, dim, constraints: Sequence[Constraint] = (), lower=None, upper=None):
        self.dim = int(dim)
        self.constraints = list(constraints)
        lo = -np.inf if lower is None else lower
        hi = np.inf if upper is None else upper
        self.lower = np.broadcast_to(np.asarray(lo, dtype=float), (self.dim,)).copy()
        self.upper = np.broadcast_to(np.asarray(hi, dtype=float), (self.dim,)).copy()
        if (self.lower > self.upper).any():
            bad = np.flatnonzero(self.lower > self.upper).tolist()
            raise ValueError(f"infeasible box: lower > upper at coordinates {bad}")
        self._box = []
        for i in range(self.dim):
            if np.isfinite(self.lower[i]):
                self._box.append(BoxBound(self.dim, i, self.lower[i], upper=False))
            if np.isfinite(self.upper[i]):
                self._box.append(BoxBound(self.dim, i, self.upper[i], upper=True))

    @property
    def all_constraints(self):
        """General constraints followed by the finite box sides."""
        return self.constraints + self._box

    @property
    def m(self):
        return len(self.constraints) + len(self._box)

    @property
    def has_box(self):
        return bool(self._box)

    def values(self, beta):
        return np.array([c.value(beta) for c in self.all_constraints])

    def jacobian(self, beta):
        """Constraint gradients as rows, shape (m, dim)."""
        if not self.m:
            return np.zeros((0, self.dim))
        return np.vstack([c.gradient(beta) for c in self.all_constraints])

    def project(self, beta):
        return np.clip(beta, self.lower, self.upper)

    def names(self):
        return [c.name for c in self.all_constraints]


@dataclass
class SolverOptions:
    starts: int = 8
    max_iter: int = 2000
    max_outer: int = 40
    kkt_tol: float = 1e-6
    feas_tol: float = 1e-8
    act_tol: float = 1e-7
    seed: int = 0
    start_radius: float = 10.0
    polish: bool = True
    n_jobs: int = 1


@dataclass
class Solution:
    beta: np.ndarray
    gamma: np.ndarray
    value: float
    active_set: tuple
    kkt_residual: float
    converged: bool
    status: str
    max_violation: float
    constraint_names: list = field(default_factory=list)
    trace: list = field(default_factory=list)

    @property
    def gamma_active(self):
        return self.gamma[list(self.active_set)]

    def to_dict(self):
        return {
            "beta": self.beta.tolist(),
            "gamma": self.gamma.tolist(),
            "value": self.value,
            "active_set": list(self.active_set),
            "active_names": [self.constraint_names[j] for j in self.active_set],
            "kkt_residual": self.kkt_residual,
            "max_violation": self.max_violation,
            "converged": self.converged,
            "status": self.status,
            "trace": self.trace,
        }


class LICQResult(NamedTuple):
    holds: bool
    rank: int
    n_active: int


class _Objective:
    def __init__(self, objective):
        if isinstance(objective, tuple):
            fun, grad, *rest = objective
            hess = rest[0] if rest else None
        else:
            fun, grad = objective.value, objective.gradient
            hess = getattr(objective, "hessian", None)
        self.value: Callable = fun
        self.gradient: Callable = grad
        self._hess = hess

    def hessian(self, beta):
        if self._hess is not None:
            return np.asarray(self._hess(beta), dtype=float)
        k = beta.size
        H = np.empty((k, k))
        h = 1e-6 * (1.0 + np.abs(beta))
        for i in range(k):
            e = np.zeros(k)
            e[i] = h[i]
            H[:, i] = (self.gradient(beta + e) - self.gradient(beta - e)) / (2 * h[i])
        return 0.5 * (H + H.T)


def _act_scale(beta):
    return 1.0 + (np.max(np.abs(beta)) if beta.size else 0.0)


def active_set(beta, program: Program, act_tol=1e-7):
    """Indices ``j`` with ``|g_j(beta)| <= act_tol * (1 + max|beta|)``.

    Indices refer to :attr:`Program.all_constraints`.
    """
    beta = np.asarray(beta, dtype=float)
    if not program.m:
        return ()
    g = program.values(beta)
    return tuple(int(j) for j in np.flatnonzero(np.abs(g) <= act_tol * _act_scale(beta)))


def check_licq(beta, program: Program, active=None):
    """Numerical rank test of the stacked active-constraint gradients."""
    beta = np.asarray(beta, dtype=float)
    if active is None:
        active = active_set(beta, program)
    active = list(active)
    if not active:
        return LICQResult(True, 0, 0)
    G = program.jacobian(beta)[active]
    sv = np.linalg.svd(G, compute_uv=False)
    rank = int(np.sum(sv > 1e-8 * sv[0])) if sv[0] > 0 else 0
    return LICQResult(rank == len(active), rank, len(active))


def kkt_residual(beta, gamma, program: Program, grad):
    """Stationarity norm plus feasibility and complementarity violations."""
    beta = np.asarray(beta, dtype=float)
    gamma = np.asarray(gamma, dtype=float).ravel()
    grad = np.asarray(grad, dtype=float).ravel()
    if grad.size != program.dim or beta.size != program.dim:
        raise ValueError("beta and grad must have the program dimension")
    if gamma.size != program.m:
        raise ValueError(f"expected {program.m} multipliers, got {gamma.size}")
    if not program.m:
        return float(np.linalg.norm(grad))
    g = program.values(beta)
    stat = grad + program.jacobian(beta).T @ gamma
    return float(np.linalg.norm(stat) + np.maximum(g, 0.0).sum() + np.abs(gamma * g).sum())


def _recover_multipliers(beta, program, grad, active):
    gamma = np.zeros(program.m)
    if active:
        G = program.jacobian(beta)[list(active)].T
        gamma[list(active)] = nnls(G, -grad, maxiter=50 * max(1, len(active)))[0]
    return gamma


def _lbfgsb(fun_grad, x0, program, options):
    bounds = list(zip(program.lower, program.upper)) if program.has_box else None
    res = minimize(
        fun_grad, x0, jac=True, method="L-BFGS-B", bounds=bounds,
        options={"maxiter": options.max_iter, "ftol": 1e-15, "gtol": 1e-11, "maxcor": 20},
    )
    return program.project(res.x), int(res.nit)


def _augmented_lagrangian(obj, program, x0, options):
    general = program.constraints
    if not general:
        def fg(x):
            return obj.value(x), obj.gradient(x)

        beta, nit = _lbfgsb(fg, x0, program, options)
        return beta, np.zeros(0), nit, 1

    lam = np.zeros(len(general))
    rho = 10.0
    beta = x0
    total = 0
    prev_viol = np.inf
    outer = 0
    for outer in range(1, options.max_outer + 1):
        def fg(x, lam=lam, rho=rho):
            g = np.array([c.value(x) for c in general])
            shifted = np.maximum(lam + rho * g, 0.0)
            val = obj.value(x) + (shifted @ shifted - lam @ lam) / (2.0 * rho)
            grad = obj.gradient(x)
            for s, c in zip(shifted, general):
                if s > 0:
                    grad = grad + s * c.gradient(x)
            return val, grad

        beta, nit = _lbfgsb(fg, beta, program, options)
        total += nit
        g = np.array([c.value(beta) for c in general])
        new_lam = np.maximum(lam + rho * g, 0.0)
        viol = max(float(np.max(np.maximum(g, 0.0))), float(np.max(np.abs(np.minimum(-g, new_lam)))))
        lam = new_lam
        if viol <= 0.1 * options.feas_tol:
            break
        if viol > 0.25 * prev_viol:
            rho = min(rho * 10.0, 1e10)
        prev_viol = viol
    return beta, lam, total, outer


def _newton_polish(obj, program, beta, options, max_steps=30):
    """Newton iterations on the KKT equations of the active constraints."""
    cons = program.all_constraints
    k = program.dim
    loose = max(1e-6, 100 * options.act_tol) * _act_scale(beta)
    active = [j for j, c in enumerate(cons) if c.value(beta) >= -loose]
    gamma = _recover_multipliers(beta, program, obj.gradient(beta), tuple(active))
    steps = 0
    for _ in range(max_steps):
        grad = obj.gradient(beta)
        H = obj.hessian(beta)
        for j in active:
            if gamma[j] and not cons[j].linear:
                H = H + gamma[j] * cons[j].hessian(beta)
        na = len(active)
        if na:
            G = np.vstack([cons[j].gradient(beta) for j in active]).T
            gA = np.array([cons[j].value(beta) for j in active])
            K = np.block([[H, G], [G.T, np.zeros((na, na))]])
            rhs = np.concatenate([-grad, -gA])
        else:
            K, rhs = H, -grad
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
                sol = scipy.linalg.solve(K, rhs, assume_a="sym")
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, scipy.linalg.LinAlgWarning):
            sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
        d, mult = sol[:k], sol[k:]
        steps += 1
        neg = [i for i, v in enumerate(mult) if v < -1e-12]
        if neg:
            # an active constraint wants to be released: drop the most negative
            drop = active[min(neg, key=lambda i: mult[i])]
            active = [j for j in active if j != drop]
            continue
        beta = beta + d
        gamma = np.zeros(program.m)
        gamma[active] = mult
        for j in active:
            c = cons[j]
            if isinstance(c, BoxBound):
                beta[c.index] = c.bound
        beta = program.project(beta)
        violated = [j for j, c in enumerate(cons) if j not in active and c.value(beta) > options.feas_tol]
        if violated:
            active = sorted(set(active) | set(violated))
            continue
        if np.linalg.norm(d) <= 1e-15 * (1.0 + np.linalg.norm(beta)):
            break
    return beta, steps


def _evaluate(obj, program, beta, options):
    grad = obj.gradient(beta)
    act = active_set(beta, program, options.act_tol)
    gamma = _recover_multipliers(beta, program, grad, act)
    res = kkt_residual(beta, gamma, program, grad)
    g = program.values(beta) if program.m else np.zeros(0)
    viol = float(np.max(np.maximum(g, 0.0))) if g.size else 0.0
    return gamma, act, res, viol


def _start_points(program, options):
    k = program.dim
    rng = np.random.default_rng(options.seed)
    r = options.start_radius
    lo = np.maximum(program.lower, -r)
    hi = np.minimum(program.upper, r)
    # a bound beyond the radius on one side only: keep the interval nonempty
    lo = np.minimum(lo, hi)
    points = [program.project(np.zeros(k))]
    for _ in range(1, options.starts):
        u = lo + (hi - lo) * rng.random(k)
        nrm = np.linalg.norm(u)
        if nrm > r:
            u = u * (r / nrm)
        points.append(program.project(u))
    return points


def _run_start(obj, program, x0, options, index):
    beta, lam, nit, outer = _augmented_lagrangian(obj, program, x0, options)
    gamma, act, res, viol = _evaluate(obj, program, beta, options)
    polish_steps = 0
    if options.polish:
        cand, polish_steps = _newton_polish(obj, program, beta.copy(), options)
        c_gamma, c_act, c_res, c_viol = _evaluate(obj, program, cand, options)
        if np.all(np.isfinite(cand)) and c_viol <= max(viol, options.feas_tol) and c_res < res:
            beta, gamma, act, res, viol = cand, c_gamma, c_act, c_res, c_viol
    value = float(obj.value(beta))
    converged = res <= options.kkt_tol and viol <= options.feas_tol
    record = {
        "start": index,
        "value": value,
        "kkt_residual": res,
        "max_violation": viol,
        "iterations": nit,
        "outer_iterations": outer,
        "polish_steps": polish_steps,
        "converged": bool(converged),
    }
    return beta, gamma, act, res, viol, value, converged, record


def solve(program: Program, objective, options: SolverOptions | None = None, **overrides):
    """Minimize ``objective`` over the feasible set of ``program``.

    Parameters
    ----------
    program : Program
    objective : object or tuple
        Either an object with ``value``, ``gradient`` and optionally
        ``hessian`` methods, or a tuple ``(fun, grad[, hess])``. Without a
        Hessian the polish uses finite differences of the gradient.
    options : SolverOptions, optional
        Keyword overrides are applied on top.

    Returns
    -------
    Solution
        The best converged start (lowest objective value; ties within
        1e-12 go to the lowest start index). When no start converges the
        least infeasible, then lowest-valued, iterate is returned with
        ``converged=False``.
    """
    options = replace(options or SolverOptions(), **overrides)
    if options.starts < 1:
        raise ValueError("need at least one start")
    obj = _Objective(objective)
    points = _start_points(program, options)

    def run(item):
        i, x0 = item
        return _run_start(obj, program, x0, options, i)

    if options.n_jobs > 1 and len(points) > 1:
        with ThreadPoolExecutor(max_workers=options.n_jobs) as pool:
            results = list(pool.map(run, enumerate(points)))
    else:
        results = [run(item) for item in enumerate(points)]

    best = None
    for r in results:
        if not r[6]:
            continue
        if best is None or r[5] < best[5] - 1e-12:
            best = r
    if best is None:
        best = min(results, key=lambda r: (r[4] > options.feas_tol, r[4], r[5], r[7]["start"]))
        status = "not converged"
        logger.warning("no start reached the KKT tolerance; best residual %.3g", best[3])
    else:
        status = "converged"
    beta, gamma, act, res, viol, value, converged, _ = best
    return Solution(
        beta=beta,
        gamma=gamma,
        value=value,
        active_set=tuple(act),
        kkt_residual=float(res),
        converged=bool(converged),
        status=status,
        max_violation=viol,
        constraint_names=program.names(),
        trace=[r[7] for r in results],
    )
