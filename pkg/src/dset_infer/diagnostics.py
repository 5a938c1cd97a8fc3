"""Chain summaries, effective sample size and low-dimensional grid oracles.

ESS uses Geyer's initial positive sequence on the pooled autocorrelation
estimate

    rho_t = 1 - (W - mean_c acov_c(t)) / var_plus

where ``W`` is the mean within-chain variance and ``var_plus`` adds the
between-chain variance of the chain means.  With one chain this reduces to
the ordinary autocorrelation.  Pairs ``rho_{2k} + rho_{2k+1}`` are summed
while positive and ``ESS = M N / (-1 + 2 sum_k P_k)``, clipped to ``M N``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DimensionError

__all__ = [
    "autocovariance",
    "autocorrelation",
    "ess",
    "ChainSummary",
    "summarize",
    "format_comparison_table",
    "GridDensity",
    "tv_distance_grid",
    "relaxed_grid",
    "theorem1_check",
    "theorem2_tv",
]


def autocovariance(x):
    """Biased autocovariance of a 1-D series at all lags, via FFT."""
    x = np.asarray(x, dtype=float)
    n = x.size
    xc = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, size)
    return np.fft.irfft(f * np.conj(f), size)[:n] / n


def autocorrelation(x, max_lag=50):
    acov = autocovariance(x)
    if acov[0] == 0:
        out = np.zeros(min(max_lag, x.size - 1) + 1)
        out[0] = 1.0
        return out
    return acov[: max_lag + 1] / acov[0]


def _as_chains(x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise DimensionError("expected draws shaped (n,) or (chains, n)")
    return x


def ess(x):
    """Pooled effective sample size of one scalar quantity.

    ``x`` is ``(n,)`` or ``(chains, n)``.  Returns ``(ess, degenerate)``;
    a constant series gives ``ess = chains * n`` and ``degenerate=True``.
    """
    x = _as_chains(x)
    m, n = x.shape
    if n < 4:
        raise ValueError("need at least 4 draws per chain")
    acov = np.array([autocovariance(c) for c in x])
    chain_var = acov[:, 0] * n / (n - 1)
    W = chain_var.mean()
    var_plus = W * (n - 1) / n
    if m > 1:
        var_plus += x.mean(axis=1).var(ddof=1)
    if not var_plus > 0:
        return float(m * n), True
    rho = 1.0 - (W - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    tau = -1.0
    for k in range(0, n - 1, 2):
        pair = rho[k] + rho[k + 1]
        if pair <= 0:
            break
        tau += 2.0 * pair
    return float(min(m * n / tau, m * n)), False


@dataclass
class ChainSummary:
    """Per-coordinate posterior summaries over pooled chains."""

    names: list
    mean: np.ndarray
    q025: np.ndarray
    q50: np.ndarray
    q975: np.ndarray
    ess: np.ndarray
    acf: np.ndarray
    acceptance_rate: float
    n_draws: int
    degenerate: np.ndarray = field(default=None)

    def rows(self):
        for i, name in enumerate(self.names):
            yield name, self.mean[i], self.q025[i], self.q50[i], self.q975[i], self.ess[i]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["parameter", "mean", "q2.5", "q50", "q97.5", "ess", "acceptance_rate"])
            for name, *vals in self.rows():
                w.writerow([name] + [repr(float(v)) for v in vals] + [repr(self.acceptance_rate)])

    def to_text(self):
        lines = [f"{'':10s}{'Mean':>10s}{'2.5%':>10s}{'50%':>10s}{'97.5%':>10s}{'ESS':>10s}"]
        for name, m, lo, med, hi, e in self.rows():
            lines.append(f"{name:10s}{m:10.3f}{lo:10.3f}{med:10.3f}{hi:10.3f}{e:10.2f}")
        lines.append(f"acceptance rate {self.acceptance_rate:.3f} over {self.n_draws} draws")
        return "\n".join(lines)


def summarize(chains, names=None, max_lag=50) -> ChainSummary:
    """Summarise one chain or a list of chains of equal length."""
    if not isinstance(chains, (list, tuple)):
        chains = [chains]
    draws = np.stack([c.draws for c in chains])  # (M, N, d)
    M, N, d = draws.shape
    if M * N < 100:
        raise ValueError("summaries need at least 100 draws")
    pooled = draws.reshape(M * N, d)
    names = list(names) if names is not None else [f"theta_{i + 1}" for i in range(d)]
    q = np.quantile(pooled, [0.025, 0.5, 0.975], axis=0)
    e = np.empty(d)
    deg = np.zeros(d, dtype=bool)
    acf = np.empty((d, min(max_lag, N - 1) + 1))
    for i in range(d):
        e[i], deg[i] = ess(draws[:, :, i])
        acf[i] = np.mean([autocorrelation(draws[c, :, i], max_lag) for c in range(M)], axis=0)
    acc = float(np.mean(np.concatenate([c.accept_flags for c in chains])))
    return ChainSummary(names, pooled.mean(axis=0), q[0], q[1], q[2], e, acf, acc, M * N, deg)


def format_comparison_table(left: dict, right: dict, left_label="Level set", right_label="Distance-to-set"):
    """Side-by-side table keyed by rho, one row per coordinate.

    ``left`` and ``right`` map ``rho`` to a :class:`ChainSummary`.
    """
    cols = ("Mean", "2.5%", "97.5%", "ESS")
    head = f"{'rho':>8s} {'':4s}" + "".join(f"{c:>10s}" for c in cols * 2)
    title = f"{'':13s}{left_label:^40s}{right_label:^40s}"
    lines = [title, head]
    for rho in sorted(set(left) & set(right)):
        a, b = left[rho], right[rho]
        for i, name in enumerate(a.names):
            tag = f"{rho:8.0e}" if i == 0 else " " * 8
            cells = []
            for s in (a, b):
                cells += [f"{s.mean[i]:10.2f}", f"{s.q025[i]:10.2f}", f"{s.q975[i]:10.2f}", f"{s.ess[i]:10.2f}"]
            lines.append(f"{tag} {name[-4:]:4s}" + "".join(cells))
    return "\n".join(lines)


# --------------------------------------------------------------------------
# grid oracles


@dataclass
class GridDensity:
    """Density tabulated at cell centres of a uniform 1-D or 2-D lattice."""

    axes: tuple
    log_values: np.ndarray

    def __post_init__(self):
        self.axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        self.log_values = np.asarray(self.log_values, dtype=float)
        if len(self.axes) not in (1, 2):
            raise DimensionError("grid oracles support dimension 1 or 2 only")
        if self.log_values.shape != tuple(a.size for a in self.axes):
            raise DimensionError("log_values shape does not match the grid axes")

    @property
    def probabilities(self):
        lv = self.log_values
        top = np.max(lv)
        p = np.exp(lv - top)
        return p / p.sum()

    @property
    def boundary_mass(self):
        p = self.probabilities
        if p.ndim == 1:
            return float(p[0] + p[-1])
        inner = p[1:-1, 1:-1].sum()
        return float(p.sum() - inner)

    def points(self):
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    @classmethod
    def from_logpdf(cls, logpdf, bounds, resolution, vectorized=True, check_tails=True):
        """Tabulate ``logpdf`` on a grid of ``resolution`` cells per axis.

        ``bounds`` is ``[(lo, hi)]`` per axis.  With ``vectorized`` the
        callable receives an ``(n, d)`` array.  Raises if the boundary cells
        hold more than ``1e-8`` of the mass.
        """
        axes = []
        for lo, hi in bounds:
            h = (hi - lo) / resolution
            axes.append(lo + h * (np.arange(resolution) + 0.5))
        shape = tuple(a.size for a in axes)
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        if vectorized:
            lv = np.asarray(logpdf(pts), dtype=float)
        else:
            lv = np.array([logpdf(x) for x in pts])
        grid = cls(tuple(axes), lv.reshape(shape))
        if check_tails and grid.boundary_mass >= 1e-8:
            raise ValueError(f"grid bounds too tight: boundary cells carry mass {grid.boundary_mass:.3g}")
        return grid


def tv_distance_grid(p: GridDensity, q: GridDensity) -> float:
    """Total variation ``1/2 sum |p - q|`` between densities on the same grid."""
    if len(p.axes) != len(q.axes) or any(
        a.shape != b.shape or not np.array_equal(a, b) for a, b in zip(p.axes, q.axes)
    ):
        raise DimensionError("densities live on different grids")
    return float(0.5 * np.abs(p.probabilities - q.probabilities).sum())


def relaxed_grid(base_logpdf, cset, rho, bounds, resolution, check_tails=True):
    """Grid of the squared-distance relaxed density; ``rho=inf`` gives the sharp one.

    ``base_logpdf`` is vectorized over ``(n, d)`` arrays.  Projections are
    taken point by point except for boxes and balls, which vectorize.
    """
    from .sets import Ball, Box

    def logpdf(pts):
        if isinstance(cset, Box):
            proj = np.clip(pts, cset.lower, cset.upper)
        elif isinstance(cset, Ball):
            v = pts - cset.center
            r = np.linalg.norm(v, axis=1, keepdims=True)
            proj = cset.center + v * np.minimum(1.0, cset.radius / np.maximum(r, 1e-300))
        else:
            proj = np.array([cset._project(x)[0] for x in pts])
        d2 = np.sum((pts - proj) ** 2, axis=1)
        lb = base_logpdf(pts)
        if math.isinf(rho):
            return np.where(d2 > 0, -np.inf, lb)
        return lb - 0.5 * rho * d2

    return GridDensity.from_logpdf(logpdf, bounds, resolution, check_tails=check_tails)


def theorem2_tv(base_logpdf, cset, rhos, bounds, resolution=100_000):
    """TV between relaxed and sharply constrained densities for each ``rho``."""
    sharp = relaxed_grid(base_logpdf, cset, math.inf, bounds, resolution)
    return [tv_distance_grid(relaxed_grid(base_logpdf, cset, r, bounds, resolution), sharp) for r in rhos]


@dataclass
class Theorem1Report:
    rhos: list
    map_rho: list
    map_constrained: np.ndarray
    errors: list
    monotone: bool
    converged: bool
    tol: float

    def lines(self):
        out = [f"constrained MAP {np.array2string(self.map_constrained, precision=8)}"]
        for r, e in zip(self.rhos, self.errors):
            out.append(f"rho={r:<10.3g} |MAP_rho - MAP| = {e:.3e}")
        out.append(f"monotone={self.monotone} converged={self.converged} (tol {self.tol:g})")
        return out


def constrained_grid_map(base, cset, bounds, resolution=101, zoom=24):
    """Maximise ``base.logp`` over the set by zooming grid search.

    Grid points are projected onto the set before evaluation, so every
    candidate is feasible; each zoom shrinks the window around the incumbent.
    """
    lo = np.array([b[0] for b in bounds], dtype=float)
    hi = np.array([b[1] for b in bounds], dtype=float)
    best, best_val = None, -np.inf
    for _ in range(zoom):
        axes = [np.linspace(a, b, resolution) for a, b in zip(lo, hi)]
        mesh = np.meshgrid(*axes, indexing="ij")
        for x in np.stack([m.ravel() for m in mesh], axis=1):
            px, _ = cset._project(x)
            v = base.logp(px)
            if v > best_val:
                best, best_val = px, v
        width = (hi - lo) / 8.0
        lo, hi = best - width, best + width
    return best


def theorem1_check(base, cset, rho_schedule, bounds, tol=1e-6, map_constrained=None, mm_tol=1e-12):
    """Compare proximal-distance MAPs along ``rho_schedule`` to the constrained MAP.

    ``map_constrained`` may be supplied (e.g. in closed form); otherwise it is
    found by :func:`constrained_grid_map`.
    """
    from .proxdist import map_rho_schedule

    res = map_rho_schedule(base, cset, rho_schedule, tol=mm_tol)
    target = constrained_grid_map(base, cset, bounds) if map_constrained is None else np.asarray(map_constrained)
    errs = [float(np.linalg.norm(s - target)) for s in res.solutions]
    monotone = all(b <= a + 1e-12 for a, b in zip(errs, errs[1:]))
    return Theorem1Report(list(res.rhos), res.solutions, target, errs, monotone, errs[-1] <= tol, tol)
