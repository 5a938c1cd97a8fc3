"""Log-targets, model families and distance-to-set relaxed posteriors.

All log-densities here are unnormalized.  A :class:`RelaxedPosterior`
combines a base target with a constraint set through one of four penalty
flavors:

``SquaredDistance(rho)``
    ``-(rho / 2) dist(theta, C)^2``; continuously differentiable for convex C.
``UnsquaredDistance(rho)``
    ``-(rho / 2) dist(theta, C)``; gradient jumps at the boundary.
``LevelSetSphere(rho)``
    ``-rho |theta^T theta - 1|``, the algebraic relaxation of the unit sphere.
``Sharp()``
    ``-inf`` off the set.
``Unpenalized()``
    no penalty; the unconstrained posterior, carried with its set so that
    distances can still be recorded.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .exceptions import DimensionError
from .sets import NEAR_BOUNDARY, ConstraintSet, Sphere

__all__ = [
    "LogTarget",
    "FunctionTarget",
    "GaussianLinear",
    "StudentTLocation",
    "MultinomialDirichletTable",
    "build_model",
    "SquaredDistance",
    "UnsquaredDistance",
    "LevelSetSphere",
    "Sharp",
    "Unpenalized",
    "flavor_from_name",
    "RelaxedPosterior",
    "logp_relaxed",
    "grad_relaxed",
]


class LogTarget:
    """Differentiable unnormalized log-density on R^dim.

    Subclasses override ``logp`` and ``grad`` (or ``logp_grad``).  ``hess`` is
    optional; the default differentiates ``grad`` numerically.
    """

    dim: int

    def logp(self, theta) -> float:
        return self.logp_grad(theta)[0]

    def grad(self, theta) -> np.ndarray:
        return self.logp_grad(theta)[1]

    def logp_grad(self, theta):
        return self.logp(theta), self.grad(theta)

    def hess(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        H = np.empty((self.dim, self.dim))
        for i in range(self.dim):
            h = 1e-6 * max(1.0, abs(theta[i]))
            e = np.zeros(self.dim)
            e[i] = h
            H[:, i] = (self.grad(theta + e) - self.grad(theta - e)) / (2 * h)
        return 0.5 * (H + H.T)

    def domain_check(self, theta) -> bool:
        return True

    def initial_point(self, rng) -> np.ndarray:
        return rng.standard_normal(self.dim)


class FunctionTarget(LogTarget):
    """Wrap plain callables as a :class:`LogTarget`."""

    def __init__(self, dim, logp: Callable, grad: Callable, domain_check: Callable | None = None):
        self.dim = int(dim)
        self._logp, self._grad, self._domain = logp, grad, domain_check

    def logp(self, theta):
        return float(self._logp(np.asarray(theta, dtype=float)))

    def grad(self, theta):
        return np.asarray(self._grad(np.asarray(theta, dtype=float)), dtype=float)

    def logp_grad(self, theta):
        return self.logp(theta), self.grad(theta)

    def domain_check(self, theta):
        return True if self._domain is None else bool(self._domain(theta))


class GaussianLinear(LogTarget):
    """``y | beta ~ N(X beta, sigma2 I)`` with a flat prior on ``beta``."""

    def __init__(self, X, y, sigma2=1.0):
        self.X = np.atleast_2d(np.asarray(X, dtype=float))
        self.y = np.atleast_1d(np.asarray(y, dtype=float))
        if self.X.shape[0] != self.y.size or self.y.size < 1:
            raise ValueError("GaussianLinear needs n >= 1 rows in X matching len(y)")
        if not sigma2 > 0:
            raise ValueError("sigma2 must be positive")
        self.sigma2 = float(sigma2)
        self.dim = self.X.shape[1]
        self._XtX = self.X.T @ self.X / self.sigma2
        self._Xty = self.X.T @ self.y / self.sigma2
        self._prox_cache = {}

    def logp_grad(self, theta):
        r = self.y - self.X @ theta
        return -0.5 * (r @ r) / self.sigma2, self.X.T @ r / self.sigma2

    def logp(self, theta):
        r = self.y - self.X @ theta
        return -0.5 * (r @ r) / self.sigma2

    def grad(self, theta):
        return self._Xty - self._XtX @ theta

    def hess(self, theta):
        return -self._XtX

    def mode(self):
        return np.linalg.lstsq(self.X, self.y, rcond=None)[0]

    def prox(self, v, rho):
        """Closed-form ``argmin_x -logp(x) + rho/2 ||x - v||^2``."""
        key = float(rho)
        if key not in self._prox_cache:
            self._prox_cache = {key: np.linalg.cholesky(self._XtX + rho * np.eye(self.dim))}
        L = self._prox_cache[key]
        rhs = self._Xty + rho * v
        return np.linalg.solve(L.T, np.linalg.solve(L, rhs))

    def initial_point(self, rng):
        return self.mode() + rng.standard_normal(self.dim) * np.sqrt(1.0 / np.diag(self._XtX))


class StudentTLocation(LogTarget):
    """Multivariate Student-t kernel centred at ``F`` in R^(p+1).

    ``log pi(theta) = -((m + p) / 2) log(1 + ||F - theta||^2 / (m sigma2))``
    """

    def __init__(self, F, m=3.0, sigma2=0.1):
        self.F = np.atleast_1d(np.asarray(F, dtype=float))
        if not m > 0:
            raise ValueError("degrees of freedom m must be positive")
        if not sigma2 > 0:
            raise ValueError("sigma2 must be positive")
        self.m, self.sigma2 = float(m), float(sigma2)
        self.dim = self.F.size
        self.p = self.dim - 1
        self._c = 0.5 * (self.m + self.p)
        self._scale = self.m * self.sigma2

    def logp_grad(self, theta):
        diff = self.F - theta
        q = (diff @ diff) / self._scale
        return -self._c * math.log1p(q), (2.0 * self._c / (self._scale * (1.0 + q))) * diff

    def logp(self, theta):
        diff = self.F - theta
        return -self._c * math.log1p((diff @ diff) / self._scale)

    def grad(self, theta):
        return self.logp_grad(theta)[1]

    def hess(self, theta):
        diff = self.F - theta
        s = self._scale
        q = (diff @ diff) / s
        k = 2.0 * self._c / (s * (1.0 + q))
        return -k * np.eye(self.dim) + (2.0 * k / (s * (1.0 + q))) * np.outer(diff, diff)

    def initial_point(self, rng):
        return self.F + math.sqrt(self.sigma2) * rng.standard_normal(self.dim)


class MultinomialDirichletTable(LogTarget):
    """Row-wise multinomial likelihood with Dirichlet priors, reduced coordinates.

    The parameter is the ``I x (J-1)`` table of the first ``J-1`` cell
    probabilities of each row, flattened row-major; the last column is
    implied by ``theta_iJ = 1 - sum_j theta_ij``.  The support is the product
    of open simplices.
    """

    def __init__(self, counts, alpha=1.0):
        self.counts = np.atleast_2d(np.asarray(counts, dtype=float))
        if np.any(self.counts < 0) or np.any(self.counts != np.round(self.counts)):
            raise ValueError("counts must be nonnegative integers")
        self.alpha = np.broadcast_to(np.asarray(alpha, dtype=float), self.counts.shape).copy()
        if np.any(self.alpha <= 0):
            raise ValueError("Dirichlet concentrations must be positive")
        self.I, self.J = self.counts.shape
        if self.J < 2:
            raise ValueError("need at least two columns")
        self.dim = self.I * (self.J - 1)
        self._w = self.counts + self.alpha - 1.0
        self._w_head = self._w[:, :-1]
        self._w_last = self._w[:, -1]

    def _split(self, theta):
        t = np.asarray(theta, dtype=float)
        if t.size != self.dim:
            raise DimensionError(f"expected {self.dim} reduced parameters, got {t.size}")
        t = t.reshape(self.I, self.J - 1)
        return t, 1.0 - t.sum(axis=1)

    def domain_check(self, theta):
        t, last = self._split(theta)
        return bool(np.all(t > 0) and np.all(last > 0))

    def logp_grad(self, theta):
        t, last = self._split(theta)
        if not (np.all(t > 0) and np.all(last > 0)):
            return -np.inf, np.full(self.dim, np.nan)
        lp = float(np.sum(self._w_head * np.log(t)) + np.sum(self._w_last * np.log(last)))
        g = self._w_head / t - (self._w_last / last)[:, None]
        return lp, g.ravel()

    def logp(self, theta):
        return self.logp_grad(theta)[0]

    def grad(self, theta):
        return self.logp_grad(theta)[1]

    def hess(self, theta):
        t, last = self._split(theta)
        H = np.zeros((self.dim, self.dim))
        k = self.J - 1
        for i in range(self.I):
            blk = -np.full((k, k), self._w_last[i] / last[i] ** 2)
            blk[np.diag_indices(k)] -= self._w_head[i] / t[i] ** 2
            H[i * k:(i + 1) * k, i * k:(i + 1) * k] = blk
        return H

    def full_table(self, theta):
        """Expand reduced parameters to the full ``I x J`` probability table."""
        t, last = self._split(theta)
        return np.column_stack([t, last])

    def initial_point(self, rng):
        draws = np.vstack([rng.dirichlet(a) for a in self.alpha])
        return draws[:, :-1].ravel()


def build_model(spec) -> LogTarget:
    """Construct a target from a tagged mapping such as a config section.

    A :class:`LogTarget` instance is passed through unchanged.
    """
    if isinstance(spec, LogTarget):
        return spec
    spec = dict(spec)
    kind = spec.pop("kind", None)
    if kind == "gaussian_linear":
        return GaussianLinear(spec["X"], spec["y"], spec.get("sigma2", 1.0))
    if kind == "student_t_location":
        return StudentTLocation(spec["F"], spec.get("m", 3.0), spec.get("sigma2", 0.1))
    if kind == "multinomial_dirichlet_table":
        return MultinomialDirichletTable(spec["counts"], spec.get("alpha", 1.0))
    raise ValueError(f"unknown model kind {kind!r}")


# --------------------------------------------------------------------------
# penalty flavors


@dataclass(frozen=True)
class SquaredDistance:
    rho: float

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError("rho must be positive")


@dataclass(frozen=True)
class UnsquaredDistance:
    rho: float

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError("rho must be positive")


@dataclass(frozen=True)
class LevelSetSphere:
    rho: float

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError("rho must be positive")


@dataclass(frozen=True)
class Sharp:
    pass


@dataclass(frozen=True)
class Unpenalized:
    pass


_FLAVORS = {
    "squared": SquaredDistance,
    "unsquared": UnsquaredDistance,
    "level_set": LevelSetSphere,
    "sharp": Sharp,
    "none": Unpenalized,
}


def flavor_from_name(name, rho=None):
    try:
        cls = _FLAVORS[name]
    except KeyError:
        raise ValueError(f"unknown penalty flavor {name!r}; expected one of {sorted(_FLAVORS)}") from None
    return cls() if cls in (Sharp, Unpenalized) else cls(float(rho))


def flavor_name(flavor):
    for name, cls in _FLAVORS.items():
        if isinstance(flavor, cls):
            return name
    raise TypeError(flavor)


class RelaxedPosterior:
    """Base log-target with a distance-to-set (or comparator) penalty."""

    def __init__(self, base: LogTarget, cset: ConstraintSet, flavor):
        if cset.dim != base.dim:
            raise DimensionError(f"set dimension {cset.dim} != target dimension {base.dim}")
        if isinstance(flavor, LevelSetSphere) and not (isinstance(cset, Sphere) and cset.is_unit_origin):
            raise ValueError("LevelSetSphere applies only to the unit sphere centred at the origin")
        self.base, self.set, self.flavor = base, cset, flavor
        self.dim = base.dim
        self._rho = getattr(flavor, "rho", 0.0 if isinstance(flavor, Unpenalized) else math.inf)
        self._check_domain = type(base).domain_check is not LogTarget.domain_check
        self._logp_grad = {
            SquaredDistance: self._lg_squared,
            UnsquaredDistance: self._lg_unsquared,
            LevelSetSphere: self._lg_level_set,
            Sharp: self._lg_sharp,
            Unpenalized: self.base.logp_grad,
        }[type(flavor)]

    def __getstate__(self):
        state = self.__dict__.copy()
        del state["_logp_grad"]
        return state

    def __setstate__(self, state):
        self.__init__(state["base"], state["set"], state["flavor"])

    @property
    def rho(self):
        return self._rho

    def with_flavor(self, flavor):
        return RelaxedPosterior(self.base, self.set, flavor)

    def domain_check(self, theta) -> bool:
        if not self.base.domain_check(theta):
            return False
        if isinstance(self.flavor, Sharp):
            return self.set.contains(theta)
        return True

    def dist_sq(self, theta) -> float:
        point, _ = self.set._project(np.asarray(theta, dtype=float))
        v = theta - point
        return float(v @ v)

    def penalty(self, theta) -> float:
        """Amount subtracted from the base log-density (``inf`` if Sharp and outside)."""
        theta = self.set._check(theta)
        f = self.flavor
        if isinstance(f, LevelSetSphere):
            return f.rho * abs(theta @ theta - 1.0)
        d2 = self.dist_sq(theta)
        if isinstance(f, SquaredDistance):
            return 0.5 * f.rho * d2
        if isinstance(f, UnsquaredDistance):
            return 0.5 * f.rho * math.sqrt(d2)
        if isinstance(f, Unpenalized):
            return 0.0
        return 0.0 if self.set.contains(theta) else math.inf

    def logp(self, theta) -> float:
        theta = np.asarray(theta, dtype=float)
        if not self.base.domain_check(theta):
            return -math.inf
        pen = self.penalty(theta)
        if pen == math.inf:
            return -math.inf
        return self.base.logp(theta) - pen

    def grad(self, theta) -> np.ndarray:
        return self.logp_grad(theta)[1]

    def logp_grad(self, theta):
        """Log-density and gradient with a single projection.

        Expects a float vector of length ``dim`` (no validation; this is the
        sampler's hot path).  For ``Sharp`` the gradient is the base gradient,
        which is valid inside the set.  Off the base support the log-density
        is ``-inf``.
        """
        if self._check_domain and not self.base.domain_check(theta):
            return -math.inf, np.full(self.dim, np.nan)
        return self._logp_grad(theta)

    def _lg_squared(self, theta):
        lp, g = self.base.logp_grad(theta)
        v = theta - self.set._project(theta)[0]
        return lp - 0.5 * self._rho * (v @ v), g - self._rho * v

    def _lg_unsquared(self, theta):
        lp, g = self.base.logp_grad(theta)
        v = theta - self.set._project(theta)[0]
        r = math.sqrt(v @ v)
        normal = v / r if r >= NEAR_BOUNDARY else np.zeros_like(v)
        return lp - 0.5 * self._rho * r, g - 0.5 * self._rho * normal

    def _lg_level_set(self, theta):
        lp, g = self.base.logp_grad(theta)
        s = theta @ theta - 1.0
        return lp - self._rho * abs(s), g - (self._rho * 2.0 * np.sign(s)) * theta

    def _lg_sharp(self, theta):
        lp, g = self.base.logp_grad(theta)
        return (lp if self.set.contains(theta) else -math.inf), g


def logp_relaxed(post: RelaxedPosterior, theta) -> float:
    return post.logp(theta)


def grad_relaxed(post: RelaxedPosterior, theta) -> np.ndarray:
    if isinstance(post.flavor, Sharp):
        raise ValueError("the sharply constrained posterior has no usable gradient off the set")
    return post.grad(theta)
