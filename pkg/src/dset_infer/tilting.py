"""Choosing rho from an expected-distance budget by exponential tilting.

Among densities ``p`` with ``E_p[dist^2 / 2] = D`` the one closest to the
unconstrained posterior in KL divergence is

    p*(theta) ∝ pi(theta | y) exp(-lambda dist(theta, C)^2 / 2)

which is the squared-distance relaxed posterior with ``rho = lambda``.  The
moment is decreasing in ``lambda``, so ``lambda`` is found by bisection with
the moment estimated by self-normalized importance weights over draws from
``pi(theta | y)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .diagnostics import ess
from .exceptions import BudgetUnreachableError, CalibrationRefused, UnreliableEstimateError
from .hmc import sample_chains
from .posterior import RelaxedPosterior, SquaredDistance, Unpenalized

__all__ = ["TiltingProblem", "TiltedMoment", "TiltingSolution", "tilted_moment", "calibrate", "calibrate_staged"]

MIN_WEIGHT_ESS = 50.0
MAX_LAMBDA = 1e12


@dataclass(frozen=True)
class TiltedMoment:
    moment: float
    std_error: float
    weight_ess: float


@dataclass
class TiltingSolution:
    """``lam`` is the penalty to use as ``rho`` in the relaxed posterior."""

    lam: float
    achieved_moment: float
    mc_std_error: float
    ess_of_weights: float
    budget: float
    unconstrained_moment: float
    stages: int = 1
    evaluations: int = 0
    history: list = field(default_factory=list)

    @property
    def rho(self):
        return self.lam

    def within_tolerance(self):
        return abs(self.achieved_moment - self.budget) <= max(3 * self.mc_std_error, 1e-3 * self.budget)


class TiltingProblem:
    """Budget ``D`` with reference draws for the importance weights.

    ``reference_draws`` may be a chain, a list of chains or an ``(n, d)``
    array.  When the draws come from a relaxed posterior with penalty
    ``base_lambda`` (staged tilting), weights use ``lambda - base_lambda``.
    """

    def __init__(self, base, cset, budget, reference_draws, bracket=None, base_lambda=0.0):
        if not budget > 0:
            raise ValueError("budget D must be positive")
        self.base, self.set, self.budget = base, cset, float(budget)
        self.base_lambda = float(base_lambda)
        chains = reference_draws if isinstance(reference_draws, (list, tuple)) else [reference_draws]
        if hasattr(chains[0], "draws"):
            blocks = [np.asarray(c.draws, dtype=float) for c in chains]
        else:
            blocks = [np.atleast_2d(np.asarray(c, dtype=float)) for c in chains]
        if sum(len(b) for b in blocks) == 0:
            raise ValueError("reference draws are empty")
        per_chain = [np.array([self._d2(x) for x in b]) for b in blocks]
        self.half_d2 = 0.5 * np.concatenate(per_chain)
        # autocorrelation inflation for the standard error
        n = min(len(c) for c in per_chain)
        self._inflation = 1.0
        if len(per_chain[0]) >= 8 and all(len(c) == n for c in per_chain):
            e, degenerate = ess(np.stack(per_chain))
            if not degenerate:
                self._inflation = math.sqrt(max(1.0, self.half_d2.size / e))
        lo, hi = bracket if bracket is not None else (self.base_lambda, max(1.0, 2 * self.base_lambda))
        if not 0 <= lo < hi:
            raise ValueError("bracket must satisfy 0 <= lo < hi")
        self.bracket = (float(lo), float(hi))

    def _d2(self, x):
        p, _ = self.set._project(x)
        v = x - p
        return float(v @ v)

    @property
    def n_draws(self):
        return self.half_d2.size


def tilted_moment(problem: TiltingProblem, lam: float, check=True) -> TiltedMoment:
    """Self-normalized estimate of ``E[dist^2 / 2]`` under the ``lam``-tilt.

    Raises :class:`UnreliableEstimateError` when the weight ESS is below 50.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    h = problem.half_d2
    logw = -(lam - problem.base_lambda) * h
    logw -= logw.max()
    w = np.exp(logw)
    w /= w.sum()
    m = float(w @ h)
    wess = float(1.0 / (w @ w))
    se = float(math.sqrt(np.sum(w * w * (h - m) ** 2))) * problem._inflation
    if check and wess < MIN_WEIGHT_ESS:
        raise UnreliableEstimateError(
            f"weight ESS {wess:.1f} < {MIN_WEIGHT_ESS:g} at lambda={lam:.4g}; "
            "use more reference draws or staged tilting"
        )
    return TiltedMoment(m, se, wess)


def calibrate(problem: TiltingProblem, rel_tol=1e-3, max_lambda=MAX_LAMBDA) -> TiltingSolution:
    """Bisection for ``lambda`` with ``E_lambda[dist^2 / 2] = D``.

    The upper end of the bracket doubles until the moment drops below ``D``.
    Stops when the bracket is ``rel_tol`` relative or the moment is within
    ``rel_tol * D``.
    """
    D = problem.budget
    start = tilted_moment(problem, problem.base_lambda)
    if start.moment <= D:
        raise CalibrationRefused(
            f"budget D={D:g} is not below the reference moment {start.moment:.6g}; no relaxation needed",
            unconstrained_moment=start.moment,
        )
    history = []
    lo, hi = problem.bracket
    m_lo = tilted_moment(problem, lo)
    if m_lo.moment <= D:
        lo, m_lo = problem.base_lambda, start
    m_hi = tilted_moment(problem, hi)
    history += [(lo, m_lo.moment), (hi, m_hi.moment)]
    while m_hi.moment > D:
        lo, m_lo = hi, m_hi
        hi *= 2.0
        if hi > max_lambda:
            raise BudgetUnreachableError(f"moment still above D={D:g} at lambda={max_lambda:g}")
        m_hi = tilted_moment(problem, hi)
        history.append((hi, m_hi.moment))

    best_lam, best = (lo, m_lo) if abs(m_lo.moment - D) < abs(m_hi.moment - D) else (hi, m_hi)
    while hi - lo > rel_tol * hi and abs(best.moment - D) > rel_tol * D:
        mid = 0.5 * (lo + hi)
        mm = tilted_moment(problem, mid)
        history.append((mid, mm.moment))
        if mm.moment > D:
            lo = mid
        else:
            hi = mid
        best_lam, best = mid, mm
    return TiltingSolution(
        best_lam, best.moment, best.std_error, best.weight_ess, D, start.moment,
        evaluations=len(history), history=history,
    )


def _safe_stage_lambda(problem, frac):
    """Largest doubling of lambda whose weights keep ``frac`` of the draws."""
    lam = max(1.0, 2.0 * problem.base_lambda)
    good = problem.base_lambda
    while lam < MAX_LAMBDA:
        tm = tilted_moment(problem, lam, check=False)
        if tm.weight_ess < frac * problem.n_draws or tm.moment <= problem.budget:
            break
        good, lam = lam, 2.0 * lam
    return good


def calibrate_staged(base, cset, budget, config, max_stages=5, ess_fraction=0.2, n_jobs=1):
    """Calibrate with resampling when the weights degenerate.

    Stage 1 samples the unconstrained posterior.  If the root cannot be
    resolved, the next stage samples the relaxed posterior at the largest
    ``lambda`` whose weights keep ``ess_fraction`` of the draws and tilts from
    there.  At most ``max_stages`` stages.
    """
    lam0 = 0.0
    unconstrained = None
    for stage in range(1, max_stages + 1):
        flavor = Unpenalized() if lam0 == 0 else SquaredDistance(lam0)
        chains = sample_chains(RelaxedPosterior(base, cset, flavor), config, n_jobs=n_jobs)
        problem = TiltingProblem(base, cset, budget, chains, base_lambda=lam0)
        if unconstrained is None:
            unconstrained = tilted_moment(problem, 0.0, check=False).moment
        try:
            sol = calibrate(problem)
        except UnreliableEstimateError:
            nxt = _safe_stage_lambda(problem, ess_fraction)
            if nxt <= lam0:
                raise
            lam0 = nxt
            continue
        sol.stages = stage
        sol.unconstrained_moment = unconstrained
        return sol
    raise UnreliableEstimateError(f"calibration unresolved after {max_stages} stages")
