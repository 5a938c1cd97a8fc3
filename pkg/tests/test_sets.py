import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dset_infer import qp
from dset_infer.exceptions import DimensionError, InfeasibleError, NearBoundaryWarning
from dset_infer.sets import (
    Ball,
    Box,
    Polyhedron,
    Simplex,
    Sphere,
    StochasticDominance,
    dist,
    dist_sq_grad,
    from_dict,
    project,
    project_simplex,
    unsquared_dist_subgrad,
)
from oracles import brute_force_projection

finite = st.floats(-50, 50, allow_nan=False)


def vec(n):
    return arrays(np.float64, n, elements=finite)


def convex_sets():
    return [
        Ball([0.0, 0.0, 0.0], 1.0),
        Ball([1.0, -2.0, 0.5], 2.5),
        Box([-1.0, 0.0, -np.inf], [1.0, 2.0, 3.0]),
        Simplex(3),
        Polyhedron(A=[[1.0, 1.0, 0.0], [0.0, -1.0, 1.0]], b=[0.5, -1.0], E=[[1.0, 0.0, -1.0]], d=[0.2]),
    ]


# examples


def test_ball_projection_radial():
    r = project(Ball([0, 0], 1), [2.0, 0.0])
    np.testing.assert_allclose(r.point, [1.0, 0.0])
    assert r.distance == pytest.approx(1.0)
    assert r.unique


def test_sphere_projection_radial():
    r = project(Sphere([0, 0], 1), [3.0, 4.0])
    np.testing.assert_allclose(r.point, [0.6, 0.8], rtol=0, atol=1e-15)
    assert r.distance == pytest.approx(4.0)


def test_sphere_center_is_flagged():
    r = project(Sphere([1.0, 2.0], 3.0), [1.0, 2.0])
    assert not r.unique
    np.testing.assert_allclose(r.point, [4.0, 2.0])
    assert Sphere([0, 0], 1).convex is False


def test_simplex_matches_qp_oracle():
    s = Simplex(3)
    theta = np.array([0.2, 0.3, 0.1])
    A, b, E, d = s.halfspaces()
    ref = qp.solve(qp.QpProblem(theta, A, b, E, d)).x
    np.testing.assert_allclose(s.project(theta).point, ref, atol=1e-12)
    np.testing.assert_allclose(s.project(theta).point, brute_force_projection(theta, A, b, E, d), atol=1e-12)


@pytest.mark.parametrize("theta,expected", [([0.5, 0.0], [0.0, 0.0]), ([2.0, 0.0], [1.0, 0.0])])
def test_dist_sq_grad_ball(theta, expected):
    np.testing.assert_allclose(dist_sq_grad(Ball([0, 0], 1), theta), expected)


@pytest.mark.parametrize("h", [1e-3, 1e-2])
def test_dist_sq_grad_box_finite_difference(h):
    box = Box([-1.0], [1.0])
    x = np.array([1.0 + h])
    g = dist_sq_grad(box, x)
    np.testing.assert_allclose(g, [h], rtol=1e-12)
    step = 1e-7
    f = lambda t: 0.5 * dist(box, np.array([t])) ** 2
    fd = (f(x[0] + step) - f(x[0] - step)) / (2 * step)
    assert abs(fd - g[0]) <= 1e-6 * abs(g[0])


def test_unsquared_subgrad_examples():
    ball = Ball([0, 0], 1)
    np.testing.assert_allclose(unsquared_dist_subgrad(ball, [2.0, 0.0]), [1.0, 0.0])
    np.testing.assert_array_equal(unsquared_dist_subgrad(ball, [0.5, 0.5]), [0.0, 0.0])


def test_unsquared_subgrad_near_boundary_warns():
    with pytest.warns(NearBoundaryWarning):
        g = unsquared_dist_subgrad(Ball([0, 0], 1), [1 + 1e-13, 0.0])
    np.testing.assert_array_equal(g, [0.0, 0.0])


def test_unsquared_subgrad_exact_boundary_is_silent():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        np.testing.assert_array_equal(unsquared_dist_subgrad(Ball([0, 0], 1), [1.0, 0.0]), [0.0, 0.0])


# errors


def test_dimension_mismatch():
    with pytest.raises(DimensionError):
        project(Ball([0, 0], 1), [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        project(Box([0.0], [1.0]), [[1.0]])


def test_infeasible_polyhedron_fails_at_construction():
    with pytest.raises(InfeasibleError):
        Polyhedron(A=[[1.0], [-1.0]], b=[0.0, 1.0])


def test_invalid_parameters():
    with pytest.raises(ValueError):
        Box([1.0], [0.0])
    with pytest.raises(ValueError):
        Ball([0.0], 0.0)
    with pytest.raises(ValueError):
        Simplex(0)


def test_from_dict_round_trip():
    for s in convex_sets() + [Sphere([0, 0, 0], 2.0), StochasticDominance(2, 3)]:
        t = from_dict(s.to_dict())
        x = np.linspace(-1.3, 2.1, t.dim)
        np.testing.assert_allclose(t.project(x).point, s.project(x).point, atol=1e-12)
    with pytest.raises(ValueError):
        from_dict({"kind": "torus"})


# properties


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 4), vec(3))
def test_idempotence(k, theta):
    s = convex_sets()[k]
    p = s.project(theta).point
    np.testing.assert_allclose(s.project(p).point, p, atol=1e-10 * (1 + np.abs(theta).max()))
    assert s.contains(p)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 4), vec(3), vec(3))
def test_nonexpansive(k, t1, t2):
    s = convex_sets()[k]
    lhs = np.linalg.norm(s.project(t1).point - s.project(t2).point)
    assert lhs <= np.linalg.norm(t1 - t2) * (1 + 1e-9) + 1e-9


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 4), vec(3))
def test_members_are_fixed(k, theta):
    s = convex_sets()[k]
    p = s.project(theta).point
    r = s.project(p)
    assert r.distance <= 1e-9 * (1 + np.abs(theta).max())


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 4), vec(3))
def test_distance_matches_point(k, theta):
    r = convex_sets()[k].project(theta)
    assert r.distance == pytest.approx(np.linalg.norm(theta - r.point), rel=1e-12, abs=0)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 4), vec(3))
def test_gradient_identity_finite_differences(k, theta):
    s = convex_sets()[k]
    d0 = s.project(theta).distance
    if d0 < 1e-2:
        return
    f = lambda x: 0.5 * s.project(x).distance ** 2
    g = dist_sq_grad(s, theta)
    fd = np.empty(3)
    for i in range(3):
        e = np.zeros(3)
        e[i] = 1e-6 * max(1.0, abs(theta[i]))
        fd[i] = (f(theta + e) - f(theta - e)) / (2 * e[i])
    assert np.linalg.norm(fd - g) <= 1e-5 * max(np.linalg.norm(g), 1.0)


@settings(max_examples=150, deadline=None)
@given(arrays(np.float64, 3, elements=st.floats(-5, 5)).filter(lambda v: np.linalg.norm(v) > 1e-6))
def test_sphere_radial_formula_exact(theta):
    expected = theta / np.sqrt(theta @ theta)
    np.testing.assert_array_equal(Sphere(np.zeros(3), 1.0).project(theta).point, expected)


@settings(max_examples=150, deadline=None)
@given(arrays(np.float64, st.integers(1, 8), elements=finite))
def test_simplex_sort_threshold_against_qp(v):
    s = Simplex(v.size)
    A, b, E, d = s.halfspaces()
    np.testing.assert_allclose(project_simplex(v), qp.solve(qp.QpProblem(v, A, b, E, d)).x, atol=1e-9)


def test_stochastic_dominance_projection_feasible(rng):
    S = StochasticDominance(4, 5)
    for _ in range(50):
        theta = rng.dirichlet(np.ones(5), size=4).ravel() + 0.05 * rng.standard_normal(20)
        p = S.project(theta).point
        assert np.all(S.A @ p - S.b >= -1e-9)
        cum = np.cumsum(p.reshape(4, 5), axis=1)
        assert np.all(np.diff(cum, axis=0) >= -1e-9)


def test_stochastic_dominance_warm_cache_does_not_change_answer(rng):
    S = StochasticDominance(3, 3)
    pts = [rng.standard_normal(9) * 0.3 for _ in range(30)]
    warm = [S.project(p).point for p in pts]
    cold = [StochasticDominance(3, 3).project(p).point for p in pts]
    np.testing.assert_allclose(warm, cold, atol=1e-9)
