"""
Student-t location on the sphere: squared distance vs level set
===============================================================

The same heavy-tailed kernel is pushed onto the unit sphere two ways.  The
squared distance penalty keeps the sampler mixing as rho grows; the
algebraic level-set penalty ``rho |theta^T theta - 1|`` does not.

A single rho is used here to keep the run short; the full grid lives in
``configs/robust_vmf.toml``.
"""

import numpy as np

from dset_infer.diagnostics import format_comparison_table, summarize
from dset_infer.experiments import VMF_F
from dset_infer.hmc import HmcConfig, sample_chains
from dset_infer.posterior import LevelSetSphere, RelaxedPosterior, SquaredDistance, StudentTLocation
from dset_infer.sets import Sphere

base = StudentTLocation(VMF_F, m=3.0, sigma2=0.1)
sphere = Sphere(np.zeros(3), 1.0)
cfg = HmcConfig(num_warmup=500, num_samples=1000, num_chains=2, integration_time=1.0,
                target_accept=0.9, step_jitter=0.1, seed=5)

rho = 1e4
runs = {}
for label, flavor in (("level", LevelSetSphere(rho)), ("dist", SquaredDistance(rho))):
    chains = sample_chains(RelaxedPosterior(base, sphere, flavor), cfg)
    runs[label] = summarize(chains, names=["x", "y", "z"])
    print(label, "acceptance", round(runs[label].acceptance_rate, 3))

print(format_comparison_table({rho: runs["level"]}, {rho: runs["dist"]}))
