"""
Dose-response table under stochastic ordering
=============================================

Each dose row is a distribution over five outcomes.  Cumulative outcome
probabilities are asked to be ordered across doses, enforced softly with a
large squared distance penalty on the reduced parameterisation.
"""

import numpy as np

from dset_infer.diagnostics import ess
from dset_infer.experiments import cumulative_quantiles, load_counts
from dset_infer.hmc import HmcConfig, sample_chains
from dset_infer.posterior import MultinomialDirichletTable, RelaxedPosterior, SquaredDistance
from dset_infer.sets import StochasticDominance

counts, rows, cols = load_counts()
print(rows, cols)
print(counts)

base = MultinomialDirichletTable(counts, alpha=1.0)
cone = StochasticDominance(base.I, base.J - 1)
post = RelaxedPosterior(base, cone, SquaredDistance(7.5e5))

cfg = HmcConfig(num_warmup=1000, num_samples=1000, num_chains=2, integration_time=0.05,
                step_jitter=0.1, max_steps=256, seed=3)
chains = sample_chains(post, cfg)
print("acceptance", np.mean([c.acceptance_rate for c in chains]).round(3))
print("ESS theta_11", round(ess(np.stack([c.draws[:, 0] for c in chains]))[0]))

qs, _ = cumulative_quantiles(base, chains)
for p, Q in qs.items():
    print(f"\n{100 * p:g}% quantiles of cumulative sums")
    print(Q.round(3))
