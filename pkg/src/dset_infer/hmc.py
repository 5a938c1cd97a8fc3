"""Hamiltonian Monte Carlo with a leapfrog integrator.

Sign convention (standard dynamics): with potential ``U = -log pi`` and
kinetic energy ``K = p^T M^{-1} p / 2``,

    d theta / dt =  M^{-1} p
    d p / dt     = -grad U = grad log pi

so each leapfrog step is a half momentum kick along ``grad log pi``, a full
position drift ``eps M^{-1} p`` and another half kick.

Trajectories that leave the support of the target (``log pi = -inf``, e.g.
a simplex-valued parameter stepping outside its simplex) are aborted and the
proposal is rejected.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from .exceptions import InitializationError

__all__ = [
    "HmcConfig",
    "SampleChain",
    "Trajectory",
    "leapfrog",
    "sample",
    "sample_chains",
    "find_initial_point",
    "write_chains_csv",
]


@dataclass
class HmcConfig:
    """Sampler settings.

    ``integration_time``, when set, overrides ``num_steps`` after each step
    size update so that ``num_steps * step_size`` stays close to it (capped at
    ``max_steps``).
    """

    step_size: float = 0.1
    num_steps: int = 32
    mass: list | None = None
    num_warmup: int = 1000
    num_samples: int = 1000
    num_chains: int = 1
    seed: int = 0
    adapt_step_size: bool = True
    target_accept: float = 0.8
    integration_time: float | None = None
    max_steps: int = 1024
    step_jitter: float = 0.0
    divergence_threshold: float = 1000.0

    def __post_init__(self):
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if int(self.num_steps) < 1:
            raise ValueError("num_steps must be at least 1")
        if not 0 < self.target_accept < 1:
            raise ValueError("target_accept must lie in (0, 1)")
        if self.mass is not None and np.any(np.asarray(self.mass, dtype=float) <= 0):
            raise ValueError("mass entries must be positive")
        if not 0 <= self.step_jitter < 1:
            raise ValueError("step_jitter must lie in [0, 1)")
        if self.integration_time is not None and not self.integration_time > 0:
            raise ValueError("integration_time must be positive")
        self.num_steps = int(self.num_steps)

    def to_dict(self):
        return {k: v for k, v in asdict(self).items() if v is not None}


@dataclass
class SampleChain:
    draws: np.ndarray
    accept_flags: np.ndarray
    energies: np.ndarray
    penalty_values: np.ndarray
    accept_probs: np.ndarray
    step_size: float = math.nan
    num_steps: int = 0
    divergences: int = 0
    off_support: int = 0
    chain_index: int = 0
    info: dict = field(default_factory=dict)

    @property
    def acceptance_rate(self) -> float:
        return float(np.mean(self.accept_flags))

    @property
    def mean_accept_prob(self) -> float:
        return float(np.mean(self.accept_probs))

    def __len__(self):
        return len(self.draws)


class Trajectory(NamedTuple):
    theta: np.ndarray
    p: np.ndarray
    logp: float
    grad: np.ndarray
    steps: int
    off_support: bool
    divergent: bool


def leapfrog(post, theta, p, eps, steps, inv_mass=None, logp_grad=None) -> Trajectory:
    """Integrate ``steps`` leapfrog steps from ``(theta, p)``.

    ``post`` is anything with ``logp_grad``.  ``logp_grad`` may pass the
    cached value at the starting point.
    """
    theta = np.array(theta, dtype=float)
    p = np.array(p, dtype=float)
    lp_grad = post.logp_grad
    lp, g = lp_grad(theta) if logp_grad is None else logp_grad
    drift = eps if inv_mass is None or np.all(inv_mass == 1.0) else eps * np.asarray(inv_mass)
    half = 0.5 * eps
    p = p + half * g
    for step in range(1, steps + 1):
        theta = theta + drift * p
        lp, g = lp_grad(theta)
        if lp == -math.inf:
            return Trajectory(theta, p, lp, g, step, True, False)
        if not math.isfinite(lp + g @ g):
            return Trajectory(theta, p, lp, g, step, False, True)
        p = p + (eps if step < steps else half) * g
    return Trajectory(theta, p, lp, g, steps, False, False)


class _DualAveraging:
    """Nesterov dual averaging of log step size toward a target acceptance."""

    def __init__(self, eps0, target, gamma=0.05, t0=10.0, kappa=0.75):
        self.mu = math.log(10.0 * eps0)
        self.target, self.gamma, self.t0, self.kappa = target, gamma, t0, kappa
        self.hbar = 0.0
        self.log_eps_bar = math.log(eps0)
        self.m = 0

    def update(self, accept_prob):
        self.m += 1
        m = self.m
        w = 1.0 / (m + self.t0)
        self.hbar = (1.0 - w) * self.hbar + w * (self.target - accept_prob)
        log_eps = self.mu - math.sqrt(m) / self.gamma * self.hbar
        eta = m ** (-self.kappa)
        self.log_eps_bar = eta * log_eps + (1.0 - eta) * self.log_eps_bar
        return math.exp(log_eps)

    @property
    def final(self):
        return math.exp(self.log_eps_bar)


def _kinetic(p, inv_mass):
    return 0.5 * float(np.sum(inv_mass * p * p))


def _initial_step_size(post, theta, lp_g, eps, inv_mass, sqrt_mass, rng):
    """Double or halve ``eps`` until one-step acceptance crosses 1/2."""
    p = sqrt_mass * rng.standard_normal(theta.size)
    h0 = -lp_g[0] + _kinetic(p, inv_mass)

    def log_ratio(e):
        tr = leapfrog(post, theta, p, e, 1, inv_mass, lp_g)
        if tr.off_support or tr.divergent:
            return -math.inf
        return h0 - (-tr.logp + _kinetic(tr.p, inv_mass))

    a = log_ratio(eps)
    direction = 1.0 if a > math.log(0.5) else -1.0
    for _ in range(60):
        if direction * a <= direction * math.log(0.5):
            break
        eps = eps * (2.0 ** direction)
        a = log_ratio(eps)
    return eps


def find_initial_point(post, rng, attempts=100):
    """Draw from the base target's initializer, project, and check support."""
    name = type(post.base).__name__
    for _ in range(attempts):
        raw = np.asarray(post.base.initial_point(rng), dtype=float)
        for cand in (post.set.project(raw).point, raw):
            if post.domain_check(cand) and math.isfinite(post.logp(cand)):
                return cand
    raise InitializationError(f"could not find a valid starting point for {name} after {attempts} attempts")


def sample(post, config: HmcConfig, chain_index: int = 0, init=None) -> SampleChain:
    """Run one chain of ``num_warmup + num_samples`` HMC transitions.

    Momentum is refreshed from ``N(0, M)`` at every iteration, and the
    Metropolis correction uses the full penalised log-density.  The RNG stream
    is derived from ``(config.seed, chain_index)``.
    """
    # far-out leapfrog states may overflow; they are flagged divergent below
    with np.errstate(over="ignore", invalid="ignore"):
        return _sample(post, config, chain_index, init)


def _sample(post, config, chain_index, init):
    rng = np.random.default_rng([int(config.seed), int(chain_index)])
    d = post.dim
    mass = np.ones(d) if config.mass is None else np.asarray(config.mass, dtype=float)
    inv_mass, sqrt_mass = 1.0 / mass, np.sqrt(mass)

    theta = find_initial_point(post, rng) if init is None else np.array(init, dtype=float)
    lp_g = post.logp_grad(theta)
    if not math.isfinite(lp_g[0]):
        raise InitializationError(f"initial point has non-finite log-density for {type(post.base).__name__}")

    eps = config.step_size
    if config.adapt_step_size and config.num_warmup > 0:
        eps = _initial_step_size(post, theta, lp_g, eps, inv_mass, sqrt_mass, rng)
        adapter = _DualAveraging(eps, config.target_accept)

    def n_steps(e):
        if config.integration_time is None:
            return config.num_steps
        return int(min(config.max_steps, max(1, math.ceil(config.integration_time / e))))

    total = config.num_warmup + config.num_samples
    n = config.num_samples
    draws = np.empty((n, d))
    flags = np.zeros(n, dtype=bool)
    energies = np.empty(n)
    penalties = np.empty(n)
    probs = np.empty(n)
    divergences = off_support = 0
    steps = n_steps(eps)

    for it in range(total):
        e = eps
        if config.step_jitter:
            e *= 1.0 + config.step_jitter * (2.0 * rng.random() - 1.0)
        p0 = sqrt_mass * rng.standard_normal(d)
        h0 = -lp_g[0] + _kinetic(p0, inv_mass)
        tr = leapfrog(post, theta, p0, e, steps, inv_mass, lp_g)
        if tr.off_support:
            h1, prob = math.inf, 0.0
            off_support += it >= config.num_warmup
        elif tr.divergent:
            h1, prob = math.nan, 0.0
            divergences += it >= config.num_warmup
        else:
            # momentum flip leaves K unchanged
            h1 = -tr.logp + _kinetic(tr.p, inv_mass)
            dh = h1 - h0
            if dh > config.divergence_threshold:
                prob = 0.0
                divergences += it >= config.num_warmup
            else:
                prob = 1.0 if dh <= 0 else math.exp(-dh)
        accepted = prob > 0 and rng.random() < prob
        if accepted:
            theta, lp_g = tr.theta, (tr.logp, tr.grad)

        if it < config.num_warmup:
            if config.adapt_step_size:
                eps = adapter.update(prob)
                if it == config.num_warmup - 1:
                    eps = adapter.final
                steps = n_steps(eps)
        else:
            k = it - config.num_warmup
            draws[k] = theta
            flags[k] = accepted
            energies[k] = h1
            probs[k] = prob
            penalties[k] = post.dist_sq(theta)

    return SampleChain(
        draws=draws,
        accept_flags=flags,
        energies=energies,
        penalty_values=penalties,
        accept_probs=probs,
        step_size=eps,
        num_steps=steps,
        divergences=divergences,
        off_support=off_support,
        chain_index=chain_index,
    )


def _run_chain(args):
    post, config, index, init = args
    return sample(post, config, index, init)


def sample_chains(post, config: HmcConfig, init=None, n_jobs: int = 1) -> list:
    """Run ``config.num_chains`` independent chains, optionally in processes."""
    jobs = [(post, config, c, init) for c in range(config.num_chains)]
    if n_jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as ex:
            return list(ex.map(_run_chain, jobs))
    return [_run_chain(j) for j in jobs]


def write_chains_csv(chains, path):
    """One row per draw: chain, iteration, theta components, accept, energy, dist2."""
    d = chains[0].draws.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["chain", "iteration"] + [f"theta_{i + 1}" for i in range(d)] + ["accept", "energy", "dist2"])
        for ch in chains:
            for k in range(len(ch)):
                w.writerow(
                    [ch.chain_index, k]
                    + [repr(float(v)) for v in ch.draws[k]]
                    + [int(ch.accept_flags[k]), repr(float(ch.energies[k])), repr(float(ch.penalty_values[k]))]
                )


def read_chains_csv(path):
    """Inverse of :func:`write_chains_csv` (draws, flags, energies, dist2 only)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    d = sum(h.startswith("theta_") for h in header)
    by_chain = {}
    for r in body:
        by_chain.setdefault(int(r[0]), []).append(r)
    chains = []
    for c, rs in sorted(by_chain.items()):
        arr = np.array([[float(v) for v in r[2:2 + d]] for r in rs])
        flags = np.array([r[2 + d] == "1" for r in rs])
        en = np.array([float(r[3 + d]) for r in rs])
        d2 = np.array([float(r[4 + d]) for r in rs])
        chains.append(SampleChain(arr, flags, en, d2, flags.astype(float), chain_index=c))
    return chains
