"""
How the relaxation approaches the constrained problem
=====================================================

MAP estimates and whole densities of the relaxed posterior converge to their
sharply constrained counterparts as rho grows.  Both are checked on a
one-dimensional Gaussian where everything is computable.
"""

import numpy as np

from dset_infer.checks import radial_gradient_profile
from dset_infer.diagnostics import theorem1_check, theorem2_tv
from dset_infer.posterior import GaussianLinear, SquaredDistance, UnsquaredDistance
from dset_infer.sets import Box

# MAP: N(1, 1) restricted to theta <= 0 has relaxed mode 1 / (1 + rho)
base = GaussianLinear([[1.0]], [1.0])
rep = theorem1_check(base, Box([-np.inf], [0.0]), [1, 10, 100, 1e3, 1e4], [(-2, 2)], tol=2e-4)
print("\n".join(rep.lines()))

# densities: total variation to the truncated Gaussian on [-1, 1]
rhos = [1, 10, 100, 1000, 10_000]
tv = theorem2_tv(lambda x: -0.5 * (x[:, 0] - 1.0) ** 2, Box([-1.0], [1.0]), rhos, [(-8.0, 8.0)])
for r, t in zip(rhos, tv):
    print(f"rho={r:<6g} TV {t:.4f}  TV*sqrt(rho) {t * np.sqrt(r):.3f}")

# gradients across the boundary: continuous when squared, a jump of rho/2 when not
radii = [0.999, 1 - 1e-9, 1 + 1e-9, 1.001]
print("squared  ", radial_gradient_profile(SquaredDistance(100.0), radii).round(4))
print("unsquared", radial_gradient_profile(UnsquaredDistance(100.0), radii).round(4))
