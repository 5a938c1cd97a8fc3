import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dset_infer import qp
from dset_infer.exceptions import DimensionError, InfeasibleError, NonConvergenceError
from dset_infer.sets import StochasticDominance, dominance_halfspaces
from oracles import brute_force_projection


def random_problem(rng, with_eq=False):
    n = int(rng.integers(1, 5))
    m = int(rng.integers(1, 7))
    A = rng.standard_normal((m, n))
    x0 = rng.standard_normal(n)  # interior point keeps the region nonempty
    b = A @ x0 - rng.exponential(0.5, m)
    E = d = None
    if with_eq and n > 1:
        E = rng.standard_normal((1, n))
        d = E @ x0
    y = 2.0 * rng.standard_normal(n)
    return qp.QpProblem(y, A, b, E, d)


def assert_kkt(problem, sol, tol=1e-8):
    res = qp.kkt_residuals(problem, sol)
    assert res["stationarity"] <= tol
    assert res["primal"] <= 1e-9
    assert res["dual"] <= 1e-10
    assert res["complementarity"] <= tol


def test_halfspace_45_degrees():
    sol = qp.solve(qp.QpProblem([1.0, 0.0], [[-1.0, 1.0]], [0.0]))
    np.testing.assert_allclose(sol.x, [0.5, 0.5], atol=1e-15)
    assert sol.active_set == [0]
    assert sol.lam[0] == pytest.approx(0.5)


def test_box_face():
    sol = qp.solve(qp.QpProblem([2.0, 0.0], [[-1.0, 0.0], [0.0, 1.0]], [-1.0, 0.0]))
    np.testing.assert_allclose(sol.x, [1.0, 0.0])


def test_dominance_2x2_symmetric_adjustment():
    # rows are full distributions; theta_21 >= theta_11 is violated
    theta = np.array([0.7, 0.3, 0.4, 0.6])
    A, b = dominance_halfspaces(2, 2)
    E = np.array([[1.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 1.0]])
    d = np.ones(2)
    problem = qp.QpProblem(theta, A, b, E, d)
    sol = qp.solve(problem)
    np.testing.assert_allclose(sol.x, brute_force_projection(theta, A, b, E, d), atol=1e-12)
    np.testing.assert_allclose(sol.x, [0.55, 0.45, 0.55, 0.45], atol=1e-12)
    assert 0 in sol.active_set
    assert_kkt(problem, sol)


def test_feasibility_checks():
    assert not qp.check_feasible(qp.QpProblem([0.0], [[1.0], [-1.0]], [0.0, 1.0]))
    assert qp.check_feasible(qp.QpProblem(np.zeros(3)))
    A, b = dominance_halfspaces(4, 5)
    E = np.kron(np.eye(4), np.ones((1, 5)))
    assert qp.check_feasible(qp.QpProblem(np.zeros(20), A, b, E, np.ones(4)))
    uniform = np.full(20, 0.2)
    assert np.all(A @ uniform - b >= -1e-15)


def test_infeasible_raises_with_certificate():
    with pytest.raises(InfeasibleError) as info:
        qp.solve(qp.QpProblem([0.0, 0.0], [[1.0, 0.0], [-1.0, 0.0]], [1.0, 0.0]))
    assert info.value.violated is not None


def test_inconsistent_equalities():
    with pytest.raises(InfeasibleError):
        qp.solve(qp.QpProblem([0.0, 0.0], E=[[1.0, 1.0], [1.0, 1.0]], d=[0.0, 1.0]))


def test_dimension_errors():
    with pytest.raises(DimensionError):
        qp.QpProblem([0.0, 0.0], [[1.0, 2.0, 3.0]], [0.0])
    with pytest.raises(DimensionError):
        qp.QpProblem([0.0, 0.0], [[1.0, 2.0]], [0.0, 1.0])


def test_iteration_cap():
    with pytest.raises(NonConvergenceError):
        qp.solve(qp.QpProblem([5.0, 5.0], -np.eye(2), -np.ones(2)), max_iter=1)


def test_redundant_duplicate_constraints_tie_break_low_index():
    A = np.array([[1.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    sol = qp.solve(qp.QpProblem([-1.0, 3.0], A, [0.0, 0.0, 0.0]))
    np.testing.assert_allclose(sol.x, [0.0, 3.0])
    assert sol.active_set == [0]


def test_oracle_equivalence_random(rng):
    for k in range(300):
        problem = random_problem(rng, with_eq=k % 3 == 0)
        sol = qp.solve(problem)
        ref = brute_force_projection(problem.target, problem.A, problem.b, problem.E, problem.d)
        np.testing.assert_allclose(sol.x, ref, atol=1e-7)
        assert_kkt(problem, sol)


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_contraction(seed):
    rng = np.random.default_rng(seed)
    p = random_problem(rng)
    y2 = p.target + rng.standard_normal(p.dim)
    x1 = qp.solve(p).x
    x2 = qp.solve(p.with_target(y2)).x
    assert np.linalg.norm(x1 - x2) <= np.linalg.norm(p.target - y2) * (1 + 1e-9) + 1e-12


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_warm_start_consistency(seed):
    rng = np.random.default_rng(seed)
    p = random_problem(rng, with_eq=seed % 2 == 0)
    cold = qp.solve(p)
    nearby = p.with_target(p.target + 1e-3 * rng.standard_normal(p.dim))
    warm = qp.solve(nearby, warm_start=cold.active_set)
    np.testing.assert_allclose(warm.x, qp.solve(nearby).x, atol=1e-9)
    # junk warm starts are tolerated
    junk = qp.solve(nearby, warm_start=list(range(p.n_ineq)) + [99, -1])
    np.testing.assert_allclose(junk.x, warm.x, atol=1e-9)


def test_dominance_projection_kkt(rng):
    S = StochasticDominance(4, 5)
    for _ in range(40):
        y = rng.dirichlet(np.ones(5), size=4).ravel() + 0.1 * rng.standard_normal(20)
        problem = qp.QpProblem(y, S.A, S.b)
        sol = qp.solve(problem)
        assert_kkt(problem, sol)
        assert np.all(S.A @ sol.x - S.b >= -1e-9)
