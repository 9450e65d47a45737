import numpy as np
import pytest

from cfclass.learners import newton_logistic
from cfclass.optimizer import (
    FunctionConstraint,
    LinearConstraint,
    NormBall,
    Program,
    SolverOptions,
    active_set,
    check_licq,
    kkt_residual,
    solve,
)
from cfclass.risk import CrossEntropyRisk

SQ2 = np.sqrt(2.0)


def _box_problem():
    c = np.array([2.0, 0.0])
    obj = (lambda b: float(np.sum((b - c) ** 2)), lambda b: 2 * (b - c), lambda b: 2 * np.eye(2))
    return Program(2, lower=-1.0, upper=1.0), obj


def _circle_problem():
    circle = NormBall(1.0, name="circle")  # ||b||^2 - 1 <= 0
    obj = (lambda b: float(b.sum()), lambda b: np.ones(2), lambda b: np.zeros((2, 2)))
    return Program(2, [circle]), obj


def test_box_projection():
    prog, obj = _box_problem()
    sol = solve(prog, obj)
    assert sol.converged
    np.testing.assert_allclose(sol.beta, [1.0, 0.0], atol=1e-8)
    names = [prog.names()[j] for j in sol.active_set]
    assert names == ["upper[0]"]
    assert sol.gamma[sol.active_set[0]] == pytest.approx(2.0, abs=1e-8)
    inactive = np.setdiff1d(np.arange(prog.m), sol.active_set)
    np.testing.assert_array_equal(sol.gamma[inactive], 0.0)


def test_circle():
    prog, obj = _circle_problem()
    sol = solve(prog, obj)
    assert sol.converged
    np.testing.assert_allclose(sol.beta, [-1 / SQ2, -1 / SQ2], atol=1e-8)
    assert sol.gamma[0] == pytest.approx(1 / SQ2, abs=1e-8)
    assert sol.value == pytest.approx(-SQ2, abs=1e-10)


def test_kkt_residual_exact_point():
    prog, _ = _circle_problem()
    beta = np.array([-1 / SQ2, -1 / SQ2])
    assert kkt_residual(beta, np.array([1 / SQ2]), prog, np.ones(2)) <= 1e-12


def test_kkt_residual_interior_is_gradient_norm():
    prog = Program(2, [NormBall(5.0)])
    g = np.array([0.3, -0.4])
    assert kkt_residual(np.zeros(2), np.zeros(1), prog, g) == pytest.approx(0.5)


def test_kkt_residual_continuity():
    prog, _ = _circle_problem()
    beta = np.array([-1 / SQ2, -1 / SQ2])
    rng = np.random.default_rng(0)
    d = rng.standard_normal(2)
    d /= np.linalg.norm(d)
    ratios = []
    for delta in (1e-2, 1e-3, 1e-4):
        r = kkt_residual(beta + delta * d, np.array([1 / SQ2]), prog, np.ones(2))
        ratios.append(r / delta)
    # residual is Theta(delta): ratio bounded above and away from 0
    assert 0.1 < min(ratios) and max(ratios) < 10


def test_kkt_residual_dimension_mismatch():
    prog, _ = _circle_problem()
    with pytest.raises(ValueError):
        kkt_residual(np.zeros(2), np.zeros(3), prog, np.ones(2))


def test_infeasible_box():
    with pytest.raises(ValueError):
        Program(2, lower=[0.0, 1.0], upper=[1.0, 0.0])


def test_active_set_and_licq():
    prog = Program(2, [NormBall(1.0)], lower=-1.0, upper=1.0)
    assert active_set(np.zeros(2), prog) == ()
    assert check_licq(np.zeros(2), prog, ()).holds
    corner = Program(2, lower=-1.0, upper=1.0)
    act = active_set(np.array([1.0, -1.0]), corner)
    assert len(act) == 2
    lic = check_licq(np.array([1.0, -1.0]), corner, act)
    assert lic.holds and lic.rank == 2


def test_duplicate_constraint_fails_licq():
    g = LinearConstraint([1.0, 1.0], 1.0)
    prog = Program(2, [g, LinearConstraint([1.0, 1.0], 1.0)])
    beta = np.array([0.5, 0.5])
    act = active_set(beta, prog)
    lic = check_licq(beta, prog, act)
    assert act == (0, 1) and not lic.holds and lic.rank == 1


def test_unconstrained_matches_newton_oracle(rng):
    n, k = 300, 4
    B = rng.standard_normal((n, k))
    phi = rng.normal(0.4, 0.8, n)
    sol = solve(Program(k), CrossEntropyRisk(phi, B), SolverOptions(starts=3))
    # independent oracle: damped Newton on the same objective, B used as the design
    theta, ok = newton_logistic(B, phi, 0.0, tol=1e-13)
    assert ok and sol.converged
    assert np.linalg.norm(sol.beta - theta) <= 1e-6


def test_nonlinear_constraint_via_callables():
    # minimize (b0-2)^2 + (b1-2)^2 s.t. b0 * b1 <= 1
    g = FunctionConstraint(lambda b: b[0] * b[1] - 1.0, lambda b: np.array([b[1], b[0]]),
                           lambda b: np.array([[0.0, 1.0], [1.0, 0.0]]))
    obj = (lambda b: float(np.sum((b - 2) ** 2)), lambda b: 2 * (b - 2), lambda b: 2 * np.eye(2))
    sol = solve(Program(2, [g], lower=0.0, upper=5.0), obj)
    assert sol.converged
    np.testing.assert_allclose(sol.beta, [1.0, 1.0], atol=1e-7)
    assert sol.gamma[0] == pytest.approx(2.0, abs=1e-6)


def test_feasibility_and_residual_on_random_programs():
    rng = np.random.default_rng(3)
    for _ in range(10):
        B = rng.standard_normal((80, 3))
        phi = rng.normal(0.5, 1.0, 80)
        prog = Program(3, [NormBall(rng.uniform(0.3, 1.0)), LinearConstraint(rng.standard_normal(3), 0.2)],
                       lower=-0.8, upper=0.8)
        sol = solve(prog, CrossEntropyRisk(phi, B))
        assert sol.converged
        assert sol.kkt_residual <= 1e-6
        assert prog.values(sol.beta).max() <= 1e-8
        assert (sol.gamma >= 0).all()


def test_convex_starts_agree():
    rng = np.random.default_rng(8)
    B = rng.standard_normal((200, 5))
    phi = rng.normal(0.5, 1.0, 200)
    prog = Program(5, [NormBall(1.5)], lower=-1.0, upper=1.0)
    risk = CrossEntropyRisk(phi, B)
    values = [solve(prog, risk, SolverOptions(starts=1, seed=s)).value for s in range(3)]
    sols = solve(prog, risk, SolverOptions(starts=6))
    assert max(values) - min(values) <= 1e-8
    assert sols.trace and len(sols.trace) == 6


def test_more_starts_never_worse():
    # non-convex objective: double well in each coordinate
    obj = (lambda b: float(np.sum((b**2 - 1) ** 2 + 0.3 * b)),
           lambda b: 4 * b * (b**2 - 1) + 0.3,
           lambda b: np.diag(12 * b**2 - 4))
    prog = Program(3, lower=-2.0, upper=2.0)
    vals = [solve(prog, obj, SolverOptions(starts=s, seed=5)).value for s in (1, 2, 4, 8)]
    assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))


def test_deterministic_and_thread_invariant(rng):
    B = rng.standard_normal((100, 4))
    phi = rng.normal(0.5, 1.0, 100)
    prog = Program(4, [NormBall(1.0)], lower=-1.0, upper=1.0)
    risk = CrossEntropyRisk(phi, B)
    a = solve(prog, risk, SolverOptions(starts=4))
    b = solve(prog, risk, SolverOptions(starts=4, n_jobs=2))
    assert a.beta.tobytes() == b.beta.tobytes()
    assert a.gamma.tobytes() == b.gamma.tobytes()


def test_nonconvergence_is_status_not_exception():
    obj = (lambda b: float((b[0] - 3) ** 4), lambda b: np.array([4 * (b[0] - 3) ** 3]))
    sol = solve(Program(1), obj, SolverOptions(starts=2, max_iter=1, max_outer=1, kkt_tol=1e-12, polish=False))
    assert not sol.converged
    assert sol.status == "not converged"
    assert np.isfinite(sol.beta).all()
