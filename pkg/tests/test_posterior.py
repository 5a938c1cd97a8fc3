import math
import pickle

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from dset_infer.exceptions import DimensionError
from dset_infer.posterior import (
    FunctionTarget,
    GaussianLinear,
    LevelSetSphere,
    MultinomialDirichletTable,
    RelaxedPosterior,
    Sharp,
    SquaredDistance,
    StudentTLocation,
    UnsquaredDistance,
    Unpenalized,
    build_model,
    flavor_from_name,
    grad_relaxed,
    logp_relaxed,
)
from dset_infer.sets import Ball, Box, Simplex, Sphere, StochasticDominance

F = np.full(3, 1 / np.sqrt(3))


def std_normal(dim=1):
    return GaussianLinear(np.eye(dim), np.zeros(dim))


def flat(dim):
    return FunctionTarget(dim, lambda t: 0.0, lambda t: np.zeros(dim))


def central_diff(f, x, h=1e-6):
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


# examples


def test_hand_arithmetic_logp():
    post = RelaxedPosterior(std_normal(), Ball([0.0], 1.0), SquaredDistance(2.0))
    assert logp_relaxed(post, [2.0]) == pytest.approx(-3.0)


def test_penalty_vanishes_inside(rng):
    for cset in (Ball([0, 0], 1), Box([-1, -1], [1, 1])):
        post = RelaxedPosterior(std_normal(2), cset, SquaredDistance(1e6))
        theta = rng.uniform(-0.7, 0.7, 2)
        assert post.penalty(theta) == 0.0
        np.testing.assert_array_equal(grad_relaxed(post, theta), post.base.grad(theta))


def test_flat_base_gradient_is_scaled_residual():
    post = RelaxedPosterior(flat(2), Ball([0, 0], 1), SquaredDistance(4.0))
    np.testing.assert_allclose(grad_relaxed(post, [2.0, 0.0]), [-4.0, 0.0])


def test_identity_regression():
    m = build_model({"kind": "gaussian_linear", "X": np.eye(3).tolist(), "y": [0, 0, 0]})
    theta = np.array([0.3, -1.2, 2.0])
    np.testing.assert_allclose(m.grad(theta), -theta)
    assert m.logp(theta) - m.logp(np.zeros(3)) == pytest.approx(-0.5 * theta @ theta)


def test_student_t_mode():
    m = build_model({"kind": "student_t_location", "F": F.tolist(), "m": 3, "sigma2": 0.1})
    np.testing.assert_allclose(m.grad(F), 0.0, atol=1e-15)


def test_table_symmetric_gradient():
    m = MultinomialDirichletTable([[1, 1], [1, 1]], alpha=1.0)
    np.testing.assert_allclose(m.grad(np.array([0.5, 0.5])), [0.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(m.full_table([0.5, 0.5]), [[0.5, 0.5], [0.5, 0.5]])


def test_off_support_is_negative_infinity():
    m = MultinomialDirichletTable([[3, 2, 1]])
    post = RelaxedPosterior(m, StochasticDominance(1, 2), SquaredDistance(10.0))
    assert post.logp([0.7, 0.5]) == -math.inf
    assert post.logp([-0.1, 0.5]) == -math.inf
    lp, _ = post.logp_grad(np.array([0.7, 0.5]))
    assert lp == -math.inf


def test_sharp_flavor():
    post = RelaxedPosterior(std_normal(), Box([-np.inf], [0.0]), Sharp())
    assert post.logp([0.5]) == -math.inf
    assert post.logp([-0.5]) == pytest.approx(-0.125)
    with pytest.raises(ValueError):
        grad_relaxed(post, [-0.5])


def test_unpenalized_matches_base(rng):
    base = std_normal(2)
    post = RelaxedPosterior(base, Ball([0, 0], 1), Unpenalized())
    theta = rng.standard_normal(2) * 3
    assert post.logp(theta) == base.logp(theta)
    assert post.rho == 0.0
    assert post.dist_sq(theta) >= 0.0


def test_unsquared_coefficient():
    post = RelaxedPosterior(flat(1), Ball([0.0], 1.0), UnsquaredDistance(8.0))
    assert post.logp([3.0]) == pytest.approx(-8.0)
    np.testing.assert_allclose(post.grad(np.array([3.0])), [-4.0])


def test_level_set_only_on_unit_sphere():
    with pytest.raises(ValueError):
        RelaxedPosterior(std_normal(3), Sphere([0, 0, 0], 2.0), LevelSetSphere(10.0))
    with pytest.raises(ValueError):
        RelaxedPosterior(std_normal(3), Ball([0, 0, 0], 1.0), LevelSetSphere(10.0))
    post = RelaxedPosterior(std_normal(3), Sphere([0, 0, 0], 1.0), LevelSetSphere(10.0))
    theta = np.array([2.0, 0.0, 0.0])
    assert post.penalty(theta) == pytest.approx(30.0)


def test_construction_errors():
    with pytest.raises(DimensionError):
        RelaxedPosterior(std_normal(2), Ball([0, 0, 0], 1), SquaredDistance(1.0))
    with pytest.raises(ValueError):
        SquaredDistance(0.0)
    with pytest.raises(ValueError):
        flavor_from_name("cubic", 1.0)
    with pytest.raises(ValueError):
        GaussianLinear(np.eye(2), [1.0])
    with pytest.raises(ValueError):
        StudentTLocation(F, m=-1)
    with pytest.raises(ValueError):
        MultinomialDirichletTable([[1, -1]])
    with pytest.raises(ValueError):
        build_model({"kind": "poisson"})


def test_flavor_names():
    assert flavor_from_name("sharp") == Sharp()
    assert flavor_from_name("none") == Unpenalized()
    assert flavor_from_name("squared", 5) == SquaredDistance(5.0)


def test_pickle_round_trip():
    post = RelaxedPosterior(StudentTLocation(F), Sphere([0, 0, 0], 1.0), SquaredDistance(1e3))
    clone = pickle.loads(pickle.dumps(post))
    theta = np.array([0.2, 0.9, -0.4])
    assert clone.logp_grad(theta)[0] == post.logp_grad(theta)[0]


def test_gaussian_prox_closed_form(rng):
    X = rng.standard_normal((20, 3))
    m = GaussianLinear(X, rng.standard_normal(20), sigma2=0.5)
    v, rho = rng.standard_normal(3), 7.0
    x = m.prox(v, rho)
    np.testing.assert_allclose(m.grad(x) - rho * (x - v), 0.0, atol=1e-10)


# gradients against finite differences


def cases():
    counts = np.array([[5, 3, 2], [2, 4, 6]])
    yield RelaxedPosterior(GaussianLinear(np.eye(2) * 1.5, [0.4, -2.0]), Ball([0, 0], 1), SquaredDistance(10.0)), 2
    yield RelaxedPosterior(StudentTLocation(F), Sphere([0, 0, 0], 1), SquaredDistance(10.0)), 3
    yield RelaxedPosterior(StudentTLocation(F), Sphere([0, 0, 0], 1), LevelSetSphere(10.0)), 3
    yield RelaxedPosterior(MultinomialDirichletTable(counts), StochasticDominance(2, 2), SquaredDistance(10.0)), None


@pytest.mark.parametrize("k", range(4))
def test_gradient_finite_difference(k, rng):
    post, dim = list(cases())[k]
    checked = 0
    while checked < 25:
        if dim is None:
            theta = np.vstack([rng.dirichlet(np.ones(3)) for _ in range(2)])[:, :-1].ravel()
        else:
            theta = rng.standard_normal(dim) * 1.5
        if post.dist_sq(theta) < 1e-6:
            continue
        if isinstance(post.flavor, LevelSetSphere) and abs(theta @ theta - 1) < 1e-3:
            continue
        g = post.grad(theta)
        fd = central_diff(post.logp, theta, h=1e-7)
        assert np.linalg.norm(fd - g) <= 1e-5 * max(np.linalg.norm(g), 1.0)
        checked += 1


# properties


@pytest.mark.parametrize(
    "flavor", [SquaredDistance(1.0), SquaredDistance(50.0), UnsquaredDistance(1.0), UnsquaredDistance(50.0)]
)
def test_properness_surrogate(flavor):
    post = RelaxedPosterior(std_normal(), Box([-1.0], [1.0]), flavor)
    dens = lambda t: math.exp(post.logp(np.array([t])))
    inner = integrate.quad(dens, -20, 20, points=[-1, 1], limit=200)[0]
    outer = integrate.quad(dens, -40, 40, points=[-1, 1], limit=200)[0]
    assert np.isfinite(inner) and abs(outer - inner) <= 1e-6


@settings(max_examples=100, deadline=None)
@given(st.floats(1.01, 30), st.floats(0.01, 1e4), st.floats(1.01, 10))
def test_logp_strictly_decreasing_in_rho(t, rho, factor):
    base = std_normal()
    lo = RelaxedPosterior(base, Ball([0.0], 1.0), SquaredDistance(rho))
    hi = lo.with_flavor(SquaredDistance(rho * factor))
    assert hi.logp([t]) < lo.logp([t])


@settings(max_examples=100, deadline=None)
@given(st.floats(-0.999, 0.999), st.floats(1e-3, 1e8))
def test_pointwise_limit_inside_is_one(t, rho):
    post = RelaxedPosterior(flat(1), Ball([0.0], 1.0), SquaredDistance(rho))
    assert math.exp(post.logp([t])) == 1.0


def test_pointwise_limit_outside_decays():
    vals = [math.exp(RelaxedPosterior(flat(1), Ball([0.0], 1.0), SquaredDistance(r)).logp([1.5])) for r in 10.0 ** np.arange(5)]
    assert all(a > b for a, b in zip(vals, vals[1:])) and vals[-1] < 1e-100


def test_simplex_penalty_on_reduced_table():
    post = RelaxedPosterior(flat(3), Simplex(3), SquaredDistance(2.0))
    assert post.penalty([0.2, 0.3, 0.5]) == pytest.approx(0.0, abs=1e-30)
    assert post.penalty([0.5, 0.5, 0.5]) == pytest.approx(2.0 / 2 * 3 * (1 / 6) ** 2)
