"""Constraint sets described by their Euclidean projection operators.

Every set exposes ``project`` and ``contains``; the squared distance, its
gradient ``theta - P(theta)`` and the unsquared-distance subgradient are
derived from the projection alone.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import qp
from .exceptions import DimensionError, InfeasibleError, NearBoundaryWarning

__all__ = [
    "ProjectionResult",
    "ConstraintSet",
    "Ball",
    "Sphere",
    "Box",
    "Simplex",
    "Polyhedron",
    "StochasticDominance",
    "project",
    "dist",
    "dist_sq_grad",
    "unsquared_dist_subgrad",
    "FEASIBILITY_TOL",
]

FEASIBILITY_TOL = 1e-9
NEAR_BOUNDARY = 1e-12


@dataclass(frozen=True)
class ProjectionResult:
    point: np.ndarray
    distance: float
    unique: bool = True


class ConstraintSet:
    """Base class.  Subclasses implement ``_project`` and ``contains``."""

    convex = True
    dim: int

    def _check(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.ndim != 1 or theta.size != self.dim:
            raise DimensionError(
                f"{type(self).__name__} expects a vector of length {self.dim}, got shape {theta.shape}"
            )
        return theta

    def _project(self, theta):
        """Return ``(point, unique)`` for a validated vector."""
        raise NotImplementedError

    def project(self, theta) -> ProjectionResult:
        theta = self._check(theta)
        point, unique = self._project(theta)
        return ProjectionResult(point, float(np.linalg.norm(theta - point)), unique)

    def contains(self, theta, tol=FEASIBILITY_TOL) -> bool:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


class Ball(ConstraintSet):
    """Closed Euclidean ball."""

    def __init__(self, center, radius=1.0):
        self.center = np.atleast_1d(np.asarray(center, dtype=float))
        if not radius > 0:
            raise ValueError("radius must be positive")
        self.radius = float(radius)
        self.dim = self.center.size

    def _project(self, theta):
        v = theta - self.center
        r = np.sqrt(v @ v)
        if r <= self.radius:
            return theta.copy(), True
        return self.center + (self.radius / r) * v, True

    def contains(self, theta, tol=FEASIBILITY_TOL):
        return bool(np.linalg.norm(self._check(theta) - self.center) <= self.radius + tol)

    def to_dict(self):
        return {"kind": "ball", "center": self.center.tolist(), "radius": self.radius}


class Sphere(ConstraintSet):
    """Sphere of given radius; closed but not convex.

    The projection is multivalued only at the centre, where the point
    ``center + radius * e1`` is returned with ``unique=False``.
    """

    convex = False

    def __init__(self, center, radius=1.0):
        self.center = np.atleast_1d(np.asarray(center, dtype=float))
        if not radius > 0:
            raise ValueError("radius must be positive")
        self.radius = float(radius)
        self.dim = self.center.size
        self._origin = not np.any(self.center)

    def _project(self, theta):
        if self._origin:
            r = math.sqrt(theta @ theta)
            if r != 0.0:
                return (theta / r) * self.radius, True
        v = theta - self.center
        r = math.sqrt(v @ v)
        if r == 0.0:
            e1 = np.zeros(self.dim)
            e1[0] = 1.0
            return self.center + self.radius * e1, False
        return self.center + (self.radius / r) * v, True

    def contains(self, theta, tol=FEASIBILITY_TOL):
        r = np.linalg.norm(self._check(theta) - self.center)
        return bool(abs(r - self.radius) <= tol)

    @property
    def is_unit_origin(self):
        return self.radius == 1.0 and not np.any(self.center)

    def to_dict(self):
        return {"kind": "sphere", "center": self.center.tolist(), "radius": self.radius}


class Box(ConstraintSet):
    """Axis-aligned box; infinite bounds give half-lines, orthants or all of R^n."""

    def __init__(self, lower, upper):
        self.lower = np.atleast_1d(np.asarray(lower, dtype=float))
        self.upper = np.atleast_1d(np.asarray(upper, dtype=float))
        if self.lower.shape != self.upper.shape:
            raise DimensionError("lower and upper must have the same length")
        if np.any(self.lower > self.upper):
            raise ValueError("Box requires lower <= upper componentwise")
        self.dim = self.lower.size

    def _project(self, theta):
        return np.clip(theta, self.lower, self.upper), True

    def contains(self, theta, tol=FEASIBILITY_TOL):
        theta = self._check(theta)
        return bool(np.all(theta >= self.lower - tol) and np.all(theta <= self.upper + tol))

    def to_dict(self):
        return {"kind": "box", "lower": self.lower.tolist(), "upper": self.upper.tolist()}


def project_simplex(v):
    """Euclidean projection onto the probability simplex by sort-and-threshold.

    Sort descending, find the largest ``k`` with
    ``u_k - (sum_{i<=k} u_i - 1) / k > 0`` and shift by that threshold.
    """
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ks = np.arange(1, v.size + 1)
    k = ks[u - css / ks > 0][-1]
    tau = css[k - 1] / k
    return np.maximum(v - tau, 0.0)


class Simplex(ConstraintSet):
    """Probability simplex ``{x >= 0, sum x = 1}`` in R^dimension."""

    def __init__(self, dimension):
        if int(dimension) < 1:
            raise ValueError("dimension must be a positive integer")
        self.dim = int(dimension)

    def _project(self, theta):
        if np.all(theta >= 0) and theta.sum() == 1.0:
            return theta.copy(), True
        return project_simplex(theta), True

    def contains(self, theta, tol=FEASIBILITY_TOL):
        theta = self._check(theta)
        return bool(np.all(theta >= -tol) and abs(theta.sum() - 1.0) <= tol)

    def halfspaces(self):
        """Return ``(A, b, E, d)`` describing the simplex for the QP solver."""
        n = self.dim
        return np.eye(n), np.zeros(n), np.ones((1, n)), np.ones(1)

    def to_dict(self):
        return {"kind": "simplex", "dimension": self.dim}


class Polyhedron(ConstraintSet):
    """``{x : A x >= b, E x = d}``; nonemptiness is checked on construction.

    Projections reuse the previous active set as a warm start, which pays off
    when successive points are close (leapfrog trajectories).
    """

    def __init__(self, A=None, b=None, E=None, d=None, dim=None):
        if dim is None:
            for M in (A, E):
                if M is not None and np.size(M):
                    dim = np.atleast_2d(M).shape[1]
                    break
        if dim is None:
            raise ValueError("cannot infer dimension from empty constraint blocks")
        self.dim = int(dim)
        self._template = qp.QpProblem(np.zeros(self.dim), A, b, E, d)
        if not qp.check_feasible(self._template):
            raise InfeasibleError("Polyhedron has an empty feasible region")
        self._warm = None

    @property
    def A(self):
        return self._template.A

    @property
    def b(self):
        return self._template.b

    @property
    def E(self):
        return self._template.E

    @property
    def d(self):
        return self._template.d

    def solve(self, theta, warm_start=None):
        return qp.solve(self._template.with_target(theta), warm_start=warm_start)

    def _project(self, theta):
        sol = self.solve(theta, warm_start=self._warm)
        self._warm = sol.active_set or None
        return sol.x, True

    def contains(self, theta, tol=FEASIBILITY_TOL):
        theta = self._check(theta)
        ok = True
        if self.A.shape[0]:
            ok = bool(np.all(self.A @ theta - self.b >= -tol))
        if ok and self.E.shape[0]:
            ok = bool(np.all(np.abs(self.E @ theta - self.d) <= tol))
        return ok

    def to_dict(self):
        return {
            "kind": "polyhedron",
            "A": self.A.tolist(),
            "b": self.b.tolist(),
            "E": self.E.tolist(),
            "d": self.d.tolist(),
            "dim": self.dim,
        }


def dominance_halfspaces(rows, cols):
    """Halfspace form of the stochastic-ordering cone for a ``rows x cols`` table.

    Variables are the table entries in row-major order.  For each adjacent
    row pair and each column ``j`` the cumulative sum of the lower row up to
    ``j`` must be at least that of the upper row; all entries are nonnegative.
    """
    n = rows * cols
    A = []
    for i in range(rows - 1):
        for j in range(cols):
            a = np.zeros((rows, cols))
            a[i + 1, : j + 1] = 1.0
            a[i, : j + 1] = -1.0
            A.append(a.ravel())
    A.extend(np.eye(n))
    A = np.array(A).reshape(-1, n)
    return A, np.zeros(A.shape[0])


class StochasticDominance(Polyhedron):
    """Tables whose row-wise cumulative sums increase down the rows.

    Elements are flattened ``rows x cols`` tables (row-major).  The first
    ``(rows - 1) * cols`` inequalities are the ordering constraints, the
    remaining ones are entry nonnegativity.
    """

    def __init__(self, rows, cols):
        self.rows, self.cols = int(rows), int(cols)
        if self.rows < 1 or self.cols < 1:
            raise ValueError("rows and cols must be positive")
        A, b = dominance_halfspaces(self.rows, self.cols)
        super().__init__(A, b, dim=self.rows * self.cols)

    @property
    def n_order(self):
        return (self.rows - 1) * self.cols

    def to_dict(self):
        return {"kind": "stochastic_dominance", "rows": self.rows, "cols": self.cols}


def from_dict(spec: dict) -> ConstraintSet:
    """Build a set from a tagged mapping (as found in config files)."""
    spec = dict(spec)
    kind = spec.pop("kind", None)
    builders = {
        "ball": lambda s: Ball(s["center"], s.get("radius", 1.0)),
        "sphere": lambda s: Sphere(s["center"], s.get("radius", 1.0)),
        "box": lambda s: Box(
            [float(v) for v in s["lower"]], [float(v) for v in s["upper"]]
        ),
        "simplex": lambda s: Simplex(s["dimension"]),
        "polyhedron": lambda s: Polyhedron(s.get("A"), s.get("b"), s.get("E"), s.get("d"), s.get("dim")),
        "stochastic_dominance": lambda s: StochasticDominance(s["rows"], s["cols"]),
    }
    if kind not in builders:
        raise ValueError(f"unknown constraint kind {kind!r}; expected one of {sorted(builders)}")
    return builders[kind](spec)


def project(cset: ConstraintSet, theta) -> ProjectionResult:
    return cset.project(theta)


def dist(cset: ConstraintSet, theta) -> float:
    return cset.project(theta).distance


def dist_sq_grad(cset: ConstraintSet, theta) -> np.ndarray:
    """Gradient of ``dist(theta, C)^2 / 2``, i.e. ``theta - P_C(theta)``."""
    theta = cset._check(theta)
    point, _ = cset._project(theta)
    return theta - point


def unsquared_dist_subgrad(cset: ConstraintSet, theta, warn=True) -> np.ndarray:
    """Unit outward normal ``(theta - P(theta)) / dist`` off the set, zero on it.

    At distances in ``(0, 1e-12)`` the normal is numerically meaningless; the
    zero vector is returned and a :class:`NearBoundaryWarning` is emitted.
    """
    theta = cset._check(theta)
    point, _ = cset._project(theta)
    v = theta - point
    r = np.sqrt(v @ v)
    if r == 0.0:
        return np.zeros_like(theta)
    if r < NEAR_BOUNDARY:
        if warn:
            warnings.warn(
                f"unsquared distance subgradient at distance {r:.3g}", NearBoundaryWarning, stacklevel=2
            )
        return np.zeros_like(theta)
    return v / r
