"""End-to-end experiment drivers behind the command line.

Each driver builds a relaxed posterior from an :class:`ExperimentConfig`,
samples it, and writes chain CSVs, summary tables, SVG figures and a
``metadata.json`` into the output directory.  CSVs and tables depend only on
the config (including its seeds); wall time lives in the metadata alone.
"""
from __future__ import annotations

import csv
import json
import math
import platform
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__, svg
from .config import ExperimentConfig
from .diagnostics import format_comparison_table, summarize
from .exceptions import DsetError
from .hmc import sample_chains, write_chains_csv
from .posterior import (
    GaussianLinear,
    MultinomialDirichletTable,
    RelaxedPosterior,
    StudentTLocation,
    Unpenalized,
    build_model,
    flavor_from_name,
)
from .proxdist import map_fixed_rho, map_rho_schedule
from .sets import Ball, Sphere, StochasticDominance, from_dict
from .tilting import TiltingProblem, calibrate

__all__ = [
    "StageError",
    "ExperimentReport",
    "simulate_ridge",
    "load_counts",
    "build_problem",
    "run",
    "calibrate_then_run",
    "run_map",
    "run_calibration",
    "dispatch_run",
]

BETA_TRUE = (-1.295, -0.532)
VMF_F = tuple([1 / math.sqrt(3)] * 3)

# sampler defaults per experiment; [hmc] entries override them
HMC_DEFAULTS = {
    "ridge_ball": dict(num_warmup=1000, num_samples=1000, num_chains=2, integration_time=0.3, seed=1),
    "robust_vmf": dict(
        num_warmup=500, num_samples=1000, num_chains=2, integration_time=1.0,
        target_accept=0.9, step_jitter=0.1, max_steps=1024, seed=1,
    ),
    "contingency_table": dict(
        num_warmup=1000, num_samples=1000, num_chains=2, integration_time=0.05,
        step_jitter=0.1, max_steps=256, seed=1,
    ),
    "custom": dict(num_chains=2),
}


class StageError(DsetError):
    """Wraps a failure with the pipeline stage it happened in."""

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage, self.cause = stage, cause


@dataclass
class ExperimentReport:
    output_dir: Path
    files: list = field(default_factory=list)
    summaries: dict = field(default_factory=dict)
    chains: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def write_text(self, name, text):
        path = self.output_dir / name
        path.write_text(text if text.endswith("\n") else text + "\n")
        self.files.append(path)
        return path

    def add_file(self, path):
        self.files.append(Path(path))


class _stage:
    """Context manager tagging exceptions with a stage name."""

    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, StageError) and isinstance(exc, (DsetError, ValueError, OSError)):
            raise StageError(self.name, exc) from exc
        return False


# --------------------------------------------------------------------------
# problem construction


def simulate_ridge(n=100, beta_true=BETA_TRUE, sigma2=1.0, seed=2024):
    rng = np.random.default_rng(seed)
    beta = np.asarray(beta_true, dtype=float)
    X = rng.standard_normal((n, beta.size))
    y = X @ beta + math.sqrt(sigma2) * rng.standard_normal(n)
    return X, y


def load_counts(path=None):
    """Read an ``I x J`` count table (header row, label column) from CSV.

    Without a path the bundled dose-response table is used.
    """
    if path is None:
        text = resources.files("dset_infer").joinpath("data/sah_dose_response.csv").read_text()
    else:
        text = Path(path).read_text()
    rows = list(csv.reader(text.splitlines()))
    header, body = rows[0], [r for r in rows[1:] if r]
    labels = [r[0] for r in body]
    counts = np.array([[int(v) for v in r[1:]] for r in body])
    return counts, labels, header[1:]


@dataclass
class Problem:
    base: object
    cset: object
    names: list
    rhos: list
    flavors: list
    info: dict = field(default_factory=dict)


def _rho_list(cfg):
    rho = cfg.penalty.get("rho")
    if rho is None:
        return []
    return [float(r) for r in rho] if isinstance(rho, list) else [float(rho)]


def build_problem(cfg: ExperimentConfig) -> Problem:
    opts = cfg.options
    flavors = cfg.penalty.get("flavors", [cfg.flavor])
    if cfg.experiment == "ridge_ball":
        X, y = simulate_ridge(
            int(opts.get("n", 100)), opts.get("beta_true", BETA_TRUE),
            float(opts.get("sigma2", 1.0)), int(opts.get("data_seed", 2024)),
        )
        base = GaussianLinear(X, y, float(opts.get("sigma2", 1.0)))
        cset = Ball(np.zeros(X.shape[1]), float(opts.get("radius", 1.0)))
        names = [f"beta_{i + 1}" for i in range(X.shape[1])]
        return Problem(base, cset, names, _rho_list(cfg), flavors, {"X": X, "y": y})
    if cfg.experiment == "robust_vmf":
        base = StudentTLocation(opts.get("F", VMF_F), float(opts.get("m", 3.0)), float(opts.get("sigma2", 0.1)))
        cset = Sphere(np.zeros(base.dim), 1.0)
        names = ["x", "y", "z"] if base.dim == 3 else [f"theta_{i + 1}" for i in range(base.dim)]
        return Problem(base, cset, names, _rho_list(cfg), cfg.penalty.get("flavors", ["squared", "level_set"]))
    if cfg.experiment == "contingency_table":
        path = opts.get("counts_file") or cfg.model.get("counts_file")
        counts, rows, cols = load_counts(cfg.resolve(path) if path else None)
        base = MultinomialDirichletTable(counts, opts.get("alpha", 1.0))
        cset = StochasticDominance(base.I, base.J - 1)
        names = [f"theta_{i + 1}{j + 1}" for i in range(base.I) for j in range(base.J - 1)]
        return Problem(base, cset, names, _rho_list(cfg), flavors, {"rows": rows, "cols": cols})
    model = dict(cfg.model)
    if "counts_file" in model:
        model["counts"] = load_counts(cfg.resolve(model.pop("counts_file")))[0].tolist()
    base = build_model(model)
    cset = from_dict(cfg.set)
    names = [f"theta_{i + 1}" for i in range(base.dim)]
    return Problem(base, cset, names, _rho_list(cfg), flavors)


def hmc_config_for(cfg: ExperimentConfig, **overrides):
    return cfg.hmc_config(**{**HMC_DEFAULTS[cfg.experiment], **cfg.hmc, **overrides})


def _tag(flavor, rho):
    return f"{flavor}_rho{rho:g}".replace("+", "")


def _metadata(cfg, started, extra=None):
    meta = {
        "experiment": cfg.experiment,
        "config": cfg.to_dict(),
        "seed": hmc_config_for(cfg).seed,
        "versions": {
            "dset_infer": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
        "wall_time_seconds": round(time.perf_counter() - started, 3),
    }
    meta.update(extra or {})
    return meta


def _figures(report, tag, chains, summary, names, scatter=None):
    out = report.output_dir
    trace = svg.trace_plot([c.draws[:, 0] for c in chains], title=f"trace {names[0]} ({tag})", ylabel=names[0])
    acf = svg.acf_plot(summary.acf[0], title=f"ACF {names[0]} ({tag})")
    ladder = svg.interval_ladder(names, summary.q025, summary.q50, summary.q975, title=f"95% intervals ({tag})")
    for name, fig in (("trace", trace), ("acf", acf), ("intervals", ladder)):
        path = out / f"{name}_{tag}.svg"
        fig.save(path)
        report.add_file(path)
    if scatter is not None:
        path = out / f"scatter_{tag}.svg"
        scatter.save(path)
        report.add_file(path)


# --------------------------------------------------------------------------
# drivers


def _sample_one(report, cfg, prob, flavor_name, rho, hmc_cfg, n_jobs):
    tag = _tag(flavor_name, rho)
    with _stage(f"sample {tag}"):
        post = RelaxedPosterior(prob.base, prob.cset, flavor_from_name(flavor_name, rho))
        chains = sample_chains(post, hmc_cfg, n_jobs=n_jobs)
    with _stage(f"summarize {tag}"):
        summary = summarize(chains, prob.names)
        path = report.output_dir / f"chains_{tag}.csv"
        write_chains_csv(chains, path)
        report.add_file(path)
        spath = report.output_dir / f"summary_{tag}.csv"
        summary.to_csv(spath)
        report.add_file(spath)
    report.chains[(flavor_name, rho)] = chains
    report.summaries[(flavor_name, rho)] = summary
    return post, chains, summary, tag


def run(cfg: ExperimentConfig, n_jobs=1) -> ExperimentReport:
    """Sample every (flavor, rho) pair of the experiment and write the report."""
    started = time.perf_counter()
    out = cfg.output_path()
    out.mkdir(parents=True, exist_ok=True)
    report = ExperimentReport(out)
    with _stage("build"):
        prob = build_problem(cfg)
        if not prob.rhos:
            raise ValueError("run needs a rho; use calibrate_then_run for a budget")
        hmc_cfg = hmc_config_for(cfg)

    for flavor_name in prob.flavors:
        for rho in prob.rhos:
            post, chains, summary, tag = _sample_one(report, cfg, prob, flavor_name, rho, hmc_cfg, n_jobs)
            scatter = None
            if cfg.experiment == "ridge_ball":
                scatter = _ridge_extras(report, post, chains, rho, tag)
            with _stage(f"figures {tag}"):
                _figures(report, tag, chains, summary, prob.names, scatter)
            report.write_text(f"summary_{tag}.txt", summary.to_text())

    if cfg.experiment == "robust_vmf":
        _vmf_table(report, prob)
    if cfg.experiment == "contingency_table":
        for (flavor_name, rho), chains in report.chains.items():
            _contingency_tables(report, prob, chains, _tag(flavor_name, rho))

    report.metadata = _metadata(cfg, started, {"files": sorted(p.name for p in report.files)})
    meta_path = out / "metadata.json"
    meta_path.write_text(json.dumps(report.metadata, indent=2, default=str) + "\n")
    return report


def _ridge_extras(report, post, chains, rho, tag):
    with _stage(f"map {tag}"):
        mm = map_fixed_rho(post.with_flavor(flavor_from_name("squared", rho)), post.base.mode(), tol=1e-10)
    draws = np.concatenate([c.draws for c in chains])
    lps = np.array([post.logp(x) for x in draws])
    best = draws[int(np.argmax(lps))]
    d = np.array([post.set.project(x).distance for x in draws])
    stats = {
        "map_proximal_distance": mm.theta.tolist(),
        "hmc_mode": best.tolist(),
        "mode_gap": float(np.linalg.norm(best - mm.theta)),
        "mean_dist_sq": float(np.mean(d ** 2)),
        "frac_within_0.1": float(np.mean(d <= 0.1)),
    }
    report.extras[tag] = stats
    lines = [f"{k:24s} {v}" for k, v in stats.items()]
    report.write_text(f"ridge_{tag}.txt", "\n".join(lines))
    return svg.scatter_plot(
        draws, title=f"relaxed posterior draws ({tag})", circle=(post.set.center, post.set.radius),
        marks=[(mm.theta, svg.PALETTE[1]), (post.base.mode(), svg.PALETTE[2])], labels=("beta_1", "beta_2"),
    )


def _vmf_table(report, prob):
    level = {rho: s for (f, rho), s in report.summaries.items() if f == "level_set"}
    dist = {rho: s for (f, rho), s in report.summaries.items() if f == "squared"}
    table = format_comparison_table(level, dist)
    acc = ["", "acceptance rates"]
    for (f, rho), chains in sorted(report.chains.items()):
        rate = np.mean(np.concatenate([c.accept_flags for c in chains]))
        acc.append(f"{f:10s} rho={rho:<8.0e} {rate:.3f}")
    report.tables["comparison"] = table
    report.write_text("comparison_table.txt", table + "\n" + "\n".join(acc))


def cumulative_quantiles(base: MultinomialDirichletTable, chains, probs=(0.025, 0.5, 0.975)):
    """Quantile matrices of row-wise cumulative sums of the full table."""
    draws = np.concatenate([c.draws for c in chains])
    full = np.stack([base.full_table(x) for x in draws])
    cum = np.cumsum(full, axis=2)
    return {p: np.quantile(cum, p, axis=0) for p in probs}, full


def _contingency_tables(report, prob, chains, tag):
    qs, full = cumulative_quantiles(prob.base, chains)
    J = prob.base.J
    lines = []
    for p, Q in qs.items():
        lines.append(f"{100 * p:g}% quantiles of cumulative sums")
        lines.append(f"{'':10s}" + "".join(f"{'j=' + str(j + 1):>9s}" for j in range(J)))
        for i, row in enumerate(Q):
            lines.append(f"{'i=' + str(i + 1):10s}" + "".join(f"{v:9.4f}" for v in row))
        lines.append("")
    report.tables[f"quantiles_{tag}"] = qs
    report.write_text(f"quantiles_{tag}.txt", "\n".join(lines))
    with open(report.output_dir / f"quantiles_{tag}.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["quantile", "row", *[f"cum_{j + 1}" for j in range(J)]])
        for p, Q in qs.items():
            for i, row in enumerate(Q):
                w.writerow([p, i + 1, *[repr(float(v)) for v in row]])
    report.add_file(report.output_dir / f"quantiles_{tag}.csv")
    lo = np.quantile(full, 0.025, axis=0).ravel()
    mid = np.quantile(full, 0.5, axis=0).ravel()
    hi = np.quantile(full, 0.975, axis=0).ravel()
    labels = [f"theta_{i + 1}{j + 1}" for i in range(prob.base.I) for j in range(J)]
    fig = svg.interval_ladder(labels, lo, mid, hi, title=f"cell probabilities ({tag})", xlabel="probability")
    path = report.output_dir / f"cells_{tag}.svg"
    fig.save(path)
    report.add_file(path)


def run_map(cfg: ExperimentConfig) -> ExperimentReport:
    """Proximal-distance MAP along a rho schedule; writes the iterate trace."""
    started = time.perf_counter()
    out = cfg.output_path()
    out.mkdir(parents=True, exist_ok=True)
    report = ExperimentReport(out)
    with _stage("build"):
        prob = build_problem(cfg)
    schedule = [float(r) for r in cfg.map.get("schedule", prob.rhos or [10.0 ** k for k in range(7)])]
    tol = float(cfg.map.get("tol", 1e-10))
    init = cfg.map.get("init")
    if init is None and cfg.experiment == "contingency_table":
        # interior start: empirical proportions
        init = (prob.base.counts / prob.base.counts.sum(axis=1, keepdims=True))[:, :-1].ravel()
    with _stage("map"):
        res = map_rho_schedule(prob.base, prob.cset, schedule, tol=tol, init=init)
    path = out / "map_trace.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rho", "iteration", "objective", "step_norm", *prob.names])
        for r in res.results:
            for st in r.trace:
                w.writerow([repr(r.rho), st.iteration, repr(float(st.objective)), repr(float(st.step_norm)),
                            *[repr(float(v)) for v in st.theta]])
    report.add_file(path)
    lines = [f"{'rho':>10s} {'iterations':>10s} {'dist':>12s}  solution"]
    for r in res.results:
        d = prob.cset.project(r.theta).distance
        lines.append(f"{r.rho:10.3g} {r.iterations:10d} {d:12.4e}  {np.array2string(r.theta, precision=6)}")
    report.write_text("map_summary.txt", "\n".join(lines))
    report.extras["map"] = res
    report.metadata = _metadata(cfg, started)
    (out / "metadata.json").write_text(json.dumps(report.metadata, indent=2, default=str) + "\n")
    return report


def run_calibration(cfg: ExperimentConfig, n_jobs=1):
    """Unconstrained reference chain, then tilting calibration of ``rho``."""
    budget = float(cfg.penalty["budget"])
    with _stage("build"):
        prob = build_problem(cfg)
        hmc_cfg = hmc_config_for(cfg, **cfg.options.get("reference_hmc", {}))
    with _stage("reference sample"):
        post = RelaxedPosterior(prob.base, prob.cset, Unpenalized())
        chains = sample_chains(post, hmc_cfg, n_jobs=n_jobs)
    with _stage("calibrate"):
        sol = calibrate(TiltingProblem(prob.base, prob.cset, budget, chains))
    return sol, chains


def _calibration_text(sol):
    return "\n".join([
        f"budget D            {sol.budget!r}",
        f"lambda (= rho)      {sol.lam!r}",
        f"achieved moment     {sol.achieved_moment!r}",
        f"MC standard error   {sol.mc_std_error!r}",
        f"weight ESS          {sol.ess_of_weights!r}",
        f"reference moment    {sol.unconstrained_moment!r}",
        f"within tolerance    {sol.within_tolerance()}",
    ])


def calibrate_only(cfg: ExperimentConfig, n_jobs=1) -> ExperimentReport:
    started = time.perf_counter()
    out = cfg.output_path()
    out.mkdir(parents=True, exist_ok=True)
    report = ExperimentReport(out)
    sol, _ = run_calibration(cfg, n_jobs)
    report.extras["calibration"] = sol
    report.write_text("calibration.txt", _calibration_text(sol))
    report.metadata = _metadata(cfg, started)
    (out / "metadata.json").write_text(json.dumps(report.metadata, indent=2, default=str) + "\n")
    return report


def calibrate_then_run(cfg: ExperimentConfig, n_jobs=1) -> ExperimentReport:
    """Calibrate rho from the budget, then run with it."""
    sol, _ = run_calibration(cfg, n_jobs)
    penalty = {k: v for k, v in cfg.penalty.items() if k != "budget"}
    penalty["rho"] = sol.lam
    tuned = ExperimentConfig(
        cfg.experiment, cfg.output_dir, penalty, cfg.hmc, cfg.model, cfg.set, cfg.options, cfg.map, cfg.base_dir
    )
    report = run(tuned, n_jobs)
    report.extras["calibration"] = sol
    report.write_text("calibration.txt", _calibration_text(sol))
    return report


def dispatch_run(cfg: ExperimentConfig, n_jobs=1) -> ExperimentReport:
    return calibrate_then_run(cfg, n_jobs) if cfg.calibration_mode else run(cfg, n_jobs)
