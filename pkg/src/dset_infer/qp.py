"""Dual active-set solver for projection-form quadratic programs.

Solves

    minimize    1/2 ||x - y||^2
    subject to  A x >= b,   E x = d

with the Goldfarb-Idnani dual method specialised to an identity Hessian.
The unconstrained minimiser is ``x = y``; violated constraints are added one
at a time while dual feasibility (nonnegative inequality multipliers) is
maintained, dropping blocking constraints with partial steps.  Because the
Hessian is the identity, the primal step direction is the projection of the
entering normal onto the null space of the active normals, obtained from a
thin QR factorisation of the active set.

Multiplier convention: at the solution ``x - y = A^T lam + E^T mu`` with
``lam >= 0`` and ``lam_i (A_i x - b_i) = 0``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DimensionError, InfeasibleError, NonConvergenceError

__all__ = ["QpProblem", "QpSolution", "solve", "check_feasible", "kkt_residuals"]


def _as_block(M, v, n, name):
    if M is None:
        M = np.zeros((0, n))
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        M = M.reshape(0, n)
    v = np.zeros(M.shape[0]) if v is None else np.atleast_1d(np.asarray(v, dtype=float))
    if M.shape[1] != n:
        raise DimensionError(f"{name} has {M.shape[1]} columns, expected {n}")
    if v.shape != (M.shape[0],):
        raise DimensionError(f"{name} right-hand side has shape {v.shape}, expected ({M.shape[0]},)")
    return M, v


@dataclass(frozen=True)
class QpProblem:
    """Projection of ``target`` onto ``{x : A x >= b, E x = d}``."""

    target: np.ndarray
    A: np.ndarray = None
    b: np.ndarray = None
    E: np.ndarray = None
    d: np.ndarray = None

    def __post_init__(self):
        y = np.atleast_1d(np.asarray(self.target, dtype=float))
        if y.ndim != 1:
            raise DimensionError("target must be a vector")
        n = y.size
        A, b = _as_block(self.A, self.b, n, "A")
        E, d = _as_block(self.E, self.d, n, "E")
        object.__setattr__(self, "target", y)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "E", E)
        object.__setattr__(self, "d", d)

    @property
    def dim(self):
        return self.target.size

    @property
    def n_ineq(self):
        return self.A.shape[0]

    @property
    def n_eq(self):
        return self.E.shape[0]

    def with_target(self, y):
        return QpProblem(y, self.A, self.b, self.E, self.d)


@dataclass
class QpSolution:
    x: np.ndarray
    active_set: list
    lam: np.ndarray
    mu: np.ndarray
    iterations: int = 0
    info: dict = field(default_factory=dict)


class _ActiveSet:
    """Active normals with a thin QR factorisation, refreshed on change."""

    def __init__(self, n):
        self.n = n
        self.cols = []  # normal vectors (already sign-adjusted)
        self.ids = []  # ('e', k, sign) or ('i', k)
        self.u = []  # multipliers in the sign-adjusted convention
        self._Q = None
        self._R = None

    def _refresh(self):
        if self.cols:
            N = np.column_stack(self.cols)
            self._Q, self._R = np.linalg.qr(N)
        else:
            self._Q = self._R = None

    def directions(self, npv):
        """Return (z, r): null-space step and active-set coefficients of ``npv``."""
        if not self.cols:
            return npv.copy(), np.zeros(0)
        w = self._Q.T @ npv
        z = npv - self._Q @ w
        r = np.linalg.solve(self._R, w) if len(w) else w
        return z, r

    def add(self, col, ident, u):
        self.cols.append(col)
        self.ids.append(ident)
        self.u.append(u)
        self._refresh()

    def drop(self, pos):
        del self.cols[pos]
        del self.ids[pos]
        del self.u[pos]
        self._refresh()


def _multipliers_on_subspace(y, normals, rhs):
    """Least-squares multipliers placing ``y + N u`` on ``N^T x = rhs``."""
    N = np.column_stack(normals)
    u, *_ = np.linalg.lstsq(N.T @ N, rhs - N.T @ y, rcond=None)
    return u


def solve(problem: QpProblem, warm_start=None, max_iter=None, tol=1e-12) -> QpSolution:
    """Project ``problem.target`` onto the polyhedron.

    Parameters
    ----------
    problem : QpProblem
    warm_start : sequence of int, optional
        Inequality indices expected to be active (e.g. from the previous
        projection of a nearby point).  Only affects the path, never the
        answer.
    max_iter : int, optional
        Defaults to ``50 * (m + k + n)``.
    tol : float
        Relative tolerance for violation and linear-dependence tests.

    Raises
    ------
    InfeasibleError
        Carries the inconsistent active set as a certificate.
    NonConvergenceError
        If the iteration cap is exceeded.
    """
    y = problem.target
    n = y.size
    A, b, E, d = problem.A, problem.b, problem.E, problem.d
    m, k = A.shape[0], E.shape[0]
    if max_iter is None:
        max_iter = 50 * (m + k + n)
    row_norms = np.linalg.norm(A, axis=1) if m else np.zeros(0)
    row_norms = np.where(row_norms > 0, row_norms, 1.0)

    # fast path: target already feasible
    if k == 0 and (m == 0 or np.all(A @ y - b >= 0.0)):
        return QpSolution(y.copy(), [], np.zeros(m), np.zeros(0), 0)

    act = _ActiveSet(n)
    x = y.copy()
    iterations = 0
    scale = 1.0 + np.max(np.abs(y))

    # equalities first, always full steps
    for j in range(k):
        e = E[j]
        s = e @ x - d[j]
        sgn = 1.0 if s <= 0 else -1.0
        col, rhs = sgn * e, sgn * d[j]
        z, r = act.directions(col)
        zz = z @ col
        if zz <= tol * max(col @ col, 1.0):
            if abs(s) <= 1e-9 * scale * max(np.linalg.norm(e), 1.0):
                continue  # redundant
            raise InfeasibleError("inconsistent equality constraints", [], violated=None)
        t = -(col @ x - rhs) / zz
        x = x + t * z
        for pos in range(len(act.u)):
            act.u[pos] -= t * r[pos]
        act.add(col, ("e", j, sgn), t)
        iterations += 1

    if warm_start:
        x = _apply_warm_start(y, x, act, A, b, warm_start, tol)

    active_ineq = {ident[1] for ident in act.ids if ident[0] == "i"}
    while True:
        if m == 0:
            break
        slack = (A @ x - b) / row_norms
        if active_ineq:
            slack[list(active_ineq)] = np.inf
        p = int(np.argmin(slack))
        if slack[p] >= -tol * scale:
            break
        npv = A[p]
        up = 0.0
        while True:
            iterations += 1
            if iterations > max_iter:
                raise NonConvergenceError(f"QP iteration cap {max_iter} exceeded")
            z, r = act.directions(npv)
            sp = npv @ x - b[p]
            # partial step limit from dual feasibility (inequalities only)
            t1, kdrop = np.inf, None
            for pos, ident in enumerate(act.ids):
                if ident[0] == "i" and r[pos] > tol:
                    ratio = act.u[pos] / r[pos]
                    if ratio < t1:
                        t1, kdrop = ratio, pos
            zz = z @ npv
            dependent = zz <= tol * max(npv @ npv, 1e-300) * 1e2
            t2 = np.inf if dependent else -sp / zz
            if dependent and kdrop is None:
                raise InfeasibleError(
                    f"constraint {p} is inconsistent with the active set",
                    sorted(active_ineq),
                    violated=p,
                )
            t = min(t1, t2)
            if not dependent:
                x = x + t * z
            for pos in range(len(act.u)):
                act.u[pos] -= t * r[pos]
            up += t
            if not dependent and t2 <= t1:
                act.add(npv, ("i", p), up)
                active_ineq.add(p)
                break
            dropped = act.ids[kdrop][1]
            act.drop(kdrop)
            active_ineq.discard(dropped)

    lam = np.zeros(m)
    mu = np.zeros(k)
    for ident, u in zip(act.ids, act.u):
        if ident[0] == "i":
            lam[ident[1]] = max(u, 0.0)
        else:
            mu[ident[1]] = ident[2] * u
    return QpSolution(x, sorted(active_ineq), lam, mu, iterations)


def _apply_warm_start(y, x, act, A, b, warm_start, tol):
    """Seed the active set with ``warm_start`` while keeping dual feasibility."""
    base_cols = list(act.cols)
    base_ids = list(act.ids)
    base_rhs = []
    for ident, col in zip(act.ids, act.cols):
        base_rhs.append(col @ x)  # equalities are satisfied at x
    cand = []
    for j in dict.fromkeys(int(i) for i in warm_start):
        if not 0 <= j < A.shape[0]:
            continue
        # keep only linearly independent normals
        M = np.column_stack(base_cols + [A[c] for c in cand] + [A[j]])
        if np.linalg.matrix_rank(M, tol=1e-10 * max(1.0, np.abs(M).max())) == M.shape[1]:
            cand.append(j)
    while cand:
        normals = base_cols + [A[j] for j in cand]
        rhs = np.array(base_rhs + [b[j] for j in cand])
        u = _multipliers_on_subspace(y, normals, rhs)
        ui = u[len(base_cols):]
        worst = int(np.argmin(ui))
        if ui[worst] >= 0:
            act.cols, act.ids = list(normals), base_ids + [("i", j) for j in cand]
            act.u = list(u)
            act._refresh()
            return y + np.column_stack(normals) @ u
        del cand[worst]
    return x


def check_feasible(problem: QpProblem) -> bool:
    """Phase-one test: is ``{A x >= b, E x = d}`` nonempty?"""
    try:
        solve(problem.with_target(np.zeros(problem.dim)))
    except InfeasibleError:
        return False
    return True


def kkt_residuals(problem: QpProblem, sol: QpSolution) -> dict:
    """Stationarity, primal, dual and complementarity residuals."""
    A, b, E, d = problem.A, problem.b, problem.E, problem.d
    x = sol.x
    stat = (x - problem.target) - A.T @ sol.lam - E.T @ sol.mu
    ineq = A @ x - b if A.shape[0] else np.zeros(0)
    eq = E @ x - d if E.shape[0] else np.zeros(0)
    return {
        "stationarity": float(np.max(np.abs(stat))) if stat.size else 0.0,
        "primal": float(max(np.max(-ineq, initial=0.0), np.max(np.abs(eq), initial=0.0))),
        "dual": float(np.max(-sol.lam, initial=0.0)),
        "complementarity": float(np.max(np.abs(sol.lam * ineq), initial=0.0)),
    }
