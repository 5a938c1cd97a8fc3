"""
Choosing rho from a distance budget
===================================

A standard normal restricted softly to theta <= 0.  Instead of fixing rho we
ask for an expected half squared distance D and solve for the exponential
tilt that achieves it, using draws from the unconstrained posterior.
"""

import numpy as np

from dset_infer.hmc import HmcConfig, sample_chains
from dset_infer.posterior import GaussianLinear, RelaxedPosterior, Unpenalized
from dset_infer.sets import Box
from dset_infer.tilting import TiltingProblem, calibrate, tilted_moment

base = GaussianLinear([[1.0]], [0.0])
halfline = Box([-np.inf], [0.0])

cfg = HmcConfig(num_warmup=1000, num_samples=20_000, num_chains=2, integration_time=1.2, step_jitter=0.3, seed=9)
chains = sample_chains(RelaxedPosterior(base, halfline, Unpenalized()), cfg)

# closed form for this family: s = (1 + lambda)^(-1/2), moment = s^3 / (2 (1 + s))
exact = lambda lam: 0.5 * (1 + lam) ** -1.5 / (1 + (1 + lam) ** -0.5)

prob = TiltingProblem(base, halfline, 0.05, chains)
for lam in (0.0, 1.0, 4.0):
    tm = tilted_moment(prob, lam)
    print(f"lambda={lam:4.1f}  moment {tm.moment:.4f} +- {tm.std_error:.4f}  exact {exact(lam):.4f}")

for D in (0.1, 0.05, 0.01):
    sol = calibrate(TiltingProblem(base, halfline, D, chains))
    print(f"D={D:<5g} rho={sol.lam:.3f}  achieved {sol.achieved_moment:.4f}  weight ESS {sol.ess_of_weights:.0f}")
