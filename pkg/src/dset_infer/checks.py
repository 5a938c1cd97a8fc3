"""Oracle suites run by ``dset-infer check``.

Each check returns a :class:`CheckResult`; nothing here samples, so the
whole suite takes a few seconds.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diagnostics import theorem1_check, theorem2_tv
from .experiments import VMF_F, load_counts, simulate_ridge
from .posterior import (
    GaussianLinear,
    LevelSetSphere,
    MultinomialDirichletTable,
    RelaxedPosterior,
    SquaredDistance,
    StudentTLocation,
    UnsquaredDistance,
)
from .sets import Ball, Box, Sphere, StochasticDominance

__all__ = ["CheckResult", "check_theorem1", "check_theorem1_ridge", "check_theorem2", "check_gradients",
           "check_smoothness", "run_all", "fd_gradient", "gradient_cases"]


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self):
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


def fd_gradient(f, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        step = h * max(1.0, abs(x[i]))
        e = np.zeros_like(x)
        e[i] = step
        g[i] = (f(x + e) - f(x - e)) / (2 * step)
    return g


def check_theorem1(tol=1e-8):
    """1-D Gaussian (mean 1, variance 1) on the half-line ``theta <= 0``."""
    base = GaussianLinear(np.eye(1), [1.0], 1.0)
    rhos = [1.0, 10.0, 100.0, 1e3, 1e4]
    rep = theorem1_check(base, Box([-np.inf], [0.0]), rhos, [(-2, 2)], map_constrained=[0.0], mm_tol=1e-14)
    dev = max(abs(s[0] - 1 / (1 + r)) for s, r in zip(rep.map_rho, rep.rhos))
    ok = dev <= tol and rep.monotone
    return CheckResult("theorem 1 (half-line)", ok,
                       f"max |MAP_rho - 1/(1+rho)| = {dev:.2e}, errors {[f'{e:.2e}' for e in rep.errors]}")


def check_theorem1_ridge():
    X, y = simulate_ridge()
    rep = theorem1_check(GaussianLinear(X, y), Ball([0.0, 0.0], 1.0), [10.0 ** k for k in range(7)],
                         [(-2, 2), (-2, 2)], tol=1e-4, mm_tol=1e-10)
    return CheckResult("theorem 1 (ridge over ball)", rep.monotone and rep.converged,
                       f"errors {[f'{e:.1e}' for e in rep.errors]}")


def check_theorem2():
    """TV between relaxed and sharp densities shrinks as rho grows."""
    rhos = [1.0, 10.0, 100.0, 1000.0]
    tv = theorem2_tv(lambda x: -0.5 * (x[:, 0] - 1.0) ** 2, Box([-1.0], [1.0]), rhos, [(-8.0, 8.0)], 100_000)
    ok = all(b < a for a, b in zip(tv, tv[1:]))
    return CheckResult("theorem 2 (TV, interval)", ok, "TV " + ", ".join(f"rho={r:g}: {t:.4f}" for r, t in zip(rhos, tv)))


def gradient_cases(rho=10.0):
    """(name, posterior, sampler of candidate points) for every model and flavor."""
    X, y = simulate_ridge()
    ridge = GaussianLinear(X, y)
    vmf = StudentTLocation(VMF_F, 3.0, 0.1)
    counts, _, _ = load_counts()
    table = MultinomialDirichletTable(counts, 1.0)

    def normal(scale, center):
        return lambda rng: center + scale * rng.standard_normal(center.size)

    def simplex_rows(rng):
        rows = np.vstack([rng.dirichlet(np.full(table.J, 2.0)) for _ in range(table.I)])
        if rng.random() < 0.5:
            # sorting cumulative sums down each column lands inside the ordering cone
            rows = np.diff(np.sort(np.cumsum(rows, axis=1), axis=0), axis=1, prepend=0.0)
        return rows[:, :-1].ravel()

    return [
        ("gaussian_linear/squared", RelaxedPosterior(ridge, Ball([0.0, 0.0], 1.0), SquaredDistance(rho)),
         normal(1.0, np.zeros(2))),
        ("gaussian_linear/level_set", RelaxedPosterior(ridge, Sphere([0.0, 0.0], 1.0), LevelSetSphere(rho)),
         normal(1.0, np.zeros(2))),
        ("student_t/squared", RelaxedPosterior(vmf, Sphere(np.zeros(3), 1.0), SquaredDistance(rho)),
         normal(0.7, np.zeros(3))),
        ("student_t/level_set", RelaxedPosterior(vmf, Sphere(np.zeros(3), 1.0), LevelSetSphere(rho)),
         normal(0.7, np.zeros(3))),
        ("multinomial_dirichlet/squared",
         RelaxedPosterior(table, StochasticDominance(table.I, table.J - 1), SquaredDistance(rho)), simplex_rows),
        ("multinomial_dirichlet/level_set",
         RelaxedPosterior(table, Sphere(np.zeros(table.dim), 1.0), LevelSetSphere(rho)), simplex_rows),
    ]


def _far_enough(post, x, margin):
    if not post.base.domain_check(x):
        return False
    if isinstance(post.flavor, LevelSetSphere):
        # also stay off the kink of |theta^T theta - 1|
        return abs(x @ x - 1.0) > margin and post.set.project(x).distance > margin
    return post.set.project(x).distance > margin


def gradient_errors(post, draw, n_points=100, seed=0, margin=1e-3):
    """Relative errors ``|g - g_fd| / max(|g|, 1)`` at points off the boundary."""
    rng = np.random.default_rng(seed)
    errs = []
    for _ in range(10_000 * n_points):
        x = draw(rng)
        if not _far_enough(post, x, margin) and not post.set.contains(x):
            continue
        if not post.base.domain_check(x):
            continue
        g = post.grad(x)
        fd = fd_gradient(post.logp, x)
        errs.append(float(np.linalg.norm(g - fd) / max(np.linalg.norm(g), 1.0)))
        if len(errs) == n_points:
            return np.array(errs)
    raise RuntimeError("could not generate gradient test points")


def check_gradients(n_points=100, tol=1e-5, seed=0):
    out = []
    for name, post, draw in gradient_cases():
        errs = gradient_errors(post, draw, n_points, seed)
        out.append(CheckResult(f"gradient {name}", bool(errs.max() < tol), f"max rel err {errs.max():.2e}"))
    return out


def radial_gradient_profile(flavor, radii, direction=(0.6, 0.8)):
    """Radial component of the penalty gradient along a ray through the unit circle."""
    from .posterior import FunctionTarget

    flat = FunctionTarget(2, lambda t: 0.0, lambda t: np.zeros(2))
    post = RelaxedPosterior(flat, Ball([0.0, 0.0], 1.0), flavor)
    u = np.asarray(direction, dtype=float)
    u /= np.linalg.norm(u)
    return np.array([post.grad(r * u) @ u for r in radii])


def check_smoothness(rho=100.0, delta=1e-6):
    r = np.array([1 - delta, 1 + delta])
    sq = radial_gradient_profile(SquaredDistance(rho), r)
    un = radial_gradient_profile(UnsquaredDistance(rho), r)
    sq_jump, un_jump = abs(sq[1] - sq[0]), abs(un[1] - un[0])
    # squared: the jump is bounded by the Lipschitz constant times the gap
    ok = sq_jump <= 2 * rho * delta * (1 + 1e-9) and abs(un_jump - rho / 2) <= 0.05 * rho / 2
    return CheckResult("gradient smoothness across boundary", ok,
                       f"squared jump {sq_jump:.2e}, unsquared jump {un_jump:.4f} (rho/2 = {rho / 2:g})")


def run_all():
    results = [check_theorem1(), check_theorem1_ridge(), check_theorem2()]
    results += check_gradients()
    results.append(check_smoothness())
    return results
