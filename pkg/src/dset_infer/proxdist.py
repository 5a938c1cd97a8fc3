"""Proximal distance (MM) algorithm for MAP estimation of relaxed posteriors.

With ``f = -log pi`` the surrogate at iterate ``x_k`` is

    g(x | x_k) = f(x) + rho/2 ||x - P_C(x_k)||^2

which majorizes ``f + rho/2 dist(., C)^2`` and touches it at ``x_k``.  Its
minimiser is ``prox_{f/rho}(P_C(x_k))``, so each iteration is a projection
followed by a proximal step.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import MMViolationError, NonConvergenceError
from .posterior import LogTarget, RelaxedPosterior, SquaredDistance

__all__ = ["MmState", "MmResult", "prox_neg_logp", "map_fixed_rho", "map_rho_schedule", "default_schedule"]


@dataclass
class MmState:
    theta: np.ndarray
    objective: float
    iteration: int
    step_norm: float


@dataclass
class MmResult:
    theta: np.ndarray
    rho: float
    iterations: int
    trace: list = field(default_factory=list)

    @property
    def objective(self):
        return self.trace[-1].objective if self.trace else np.nan


@dataclass
class ScheduleResult:
    theta: np.ndarray
    rhos: list
    solutions: list
    results: list


def default_schedule():
    return [10.0 ** k for k in range(7)]


def _damped_newton(base: LogTarget, v, rho, x0, tol, max_iter=200):
    """Minimise ``-logp(x) + rho/2 ||x - v||^2`` starting from ``x0``."""
    x = np.array(x0, dtype=float)
    if not base.domain_check(x):
        x = np.array(v, dtype=float)

    def phi(z):
        if not base.domain_check(z):
            return np.inf
        r = z - v
        return -base.logp(z) + 0.5 * rho * (r @ r)

    fx = phi(x)
    eye = np.eye(x.size)
    for _ in range(max_iter):
        g = -base.grad(x) + rho * (x - v)
        if np.linalg.norm(g) <= tol:
            return x
        H = -base.hess(x) + rho * eye
        shift = 0.0
        while True:
            try:
                L = np.linalg.cholesky(H + shift * eye)
                break
            except np.linalg.LinAlgError:
                shift = max(2 * shift, 1e-8 * (1 + np.abs(H).max()))
        step = -np.linalg.solve(L.T, np.linalg.solve(L, g))
        t = 1.0
        slope = g @ step
        while t > 1e-12:
            cand = x + t * step
            fc = phi(cand)
            if fc <= fx + 1e-4 * t * slope:
                break
            t *= 0.5
        else:
            return x
        x, fx = cand, fc
    return x


def prox_neg_logp(base: LogTarget, v, rho, x0=None, tol=1e-12):
    """``argmin_x -log pi(x) + rho/2 ||x - v||^2``.

    Uses ``base.prox`` when the target offers a closed form, otherwise a
    damped Newton iteration.
    """
    if hasattr(base, "prox"):
        return base.prox(v, rho)
    return _damped_newton(base, v, rho, v if x0 is None else x0, tol)


def map_fixed_rho(post: RelaxedPosterior, init, tol=1e-10, max_iter=100_000) -> MmResult:
    """MAP of the squared-distance relaxed posterior by proximal-distance MM.

    For non-convex sets (e.g. spheres) the result is a local optimum.

    Raises
    ------
    MMViolationError
        If the objective increases by more than ``1e-12`` (relative).
    NonConvergenceError
        After ``max_iter`` iterations.
    """
    if not isinstance(post.flavor, SquaredDistance):
        raise ValueError("proximal distance MAP requires the SquaredDistance flavor")
    rho = post.flavor.rho
    base, cset = post.base, post.set
    x = np.array(init, dtype=float)

    def objective(z):
        return -post.logp(z)

    obj = objective(x)
    trace = [MmState(x.copy(), obj, 0, np.nan)]
    for k in range(1, max_iter + 1):
        anchor, _ = cset._project(x)
        x_new = prox_neg_logp(base, anchor, rho, x0=x, tol=tol / 10)
        obj_new = objective(x_new)
        if obj_new > obj + 1e-12 * max(1.0, abs(obj)):
            raise MMViolationError(f"objective rose from {obj!r} to {obj_new!r} at iteration {k}")
        step = float(np.linalg.norm(x_new - x))
        x, obj = x_new, obj_new
        trace.append(MmState(x.copy(), obj, k, step))
        if step <= tol:
            return MmResult(x, rho, k, trace)
    raise NonConvergenceError(f"proximal distance did not converge in {max_iter} iterations (rho={rho:g})")


def map_rho_schedule(base: LogTarget, cset, rho_schedule=None, tol=1e-10, init=None, max_iter=100_000):
    """Warm-started sequence of fixed-rho solves along an increasing schedule."""
    rhos = list(default_schedule() if rho_schedule is None else rho_schedule)
    if any(b <= a for a, b in zip(rhos, rhos[1:])) or rhos[0] <= 0:
        raise ValueError("rho schedule must be positive and strictly increasing")
    if init is None:
        init = base.mode() if hasattr(base, "mode") else np.zeros(base.dim)
    x = np.array(init, dtype=float)
    sols, results = [], []
    for rho in rhos:
        res = map_fixed_rho(RelaxedPosterior(base, cset, SquaredDistance(rho)), x, tol, max_iter)
        x = res.theta
        sols.append(x.copy())
        results.append(res)
    return ScheduleResult(x, rhos, sols, results)
