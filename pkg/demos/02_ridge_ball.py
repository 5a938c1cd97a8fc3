"""
Ridge regression with the coefficients relaxed onto a ball
==========================================================

Simulated regression data, a flat prior, and a squared distance penalty
that pulls the coefficient vector toward the unit ball.
"""

import numpy as np

from dset_infer.diagnostics import summarize
from dset_infer.experiments import simulate_ridge
from dset_infer.hmc import HmcConfig, sample_chains
from dset_infer.posterior import GaussianLinear, RelaxedPosterior, SquaredDistance
from dset_infer.proxdist import map_fixed_rho, map_rho_schedule
from dset_infer.sets import Ball

X, y = simulate_ridge(n=100, seed=2024)
base = GaussianLinear(X, y)
ball = Ball([0.0, 0.0], 1.0)
print("least squares:", base.mode().round(3), "norm", np.linalg.norm(base.mode()).round(3))

# sample the relaxed posterior at rho = 1000
post = RelaxedPosterior(base, ball, SquaredDistance(1e3))
chains = sample_chains(post, HmcConfig(num_warmup=1000, num_samples=1000, num_chains=2, integration_time=0.3, seed=1))
print(summarize(chains, names=["beta_1", "beta_2"]).to_text())

d2 = np.concatenate([c.penalty_values for c in chains])
print("mean dist^2", d2.mean(), " fraction within 0.1:", np.mean(np.sqrt(d2) <= 0.1))

# proximal distance MAP at the same rho, and along an increasing schedule
print("MAP at rho=1e3:", map_fixed_rho(post, base.mode()).theta.round(4))
sched = map_rho_schedule(base, ball, [10.0 ** k for k in range(7)])
for rho, sol in zip(sched.rhos, sched.solutions):
    print(f"rho={rho:8.0e}  {sol.round(5)}  dist {ball.project(sol).distance:.1e}")
