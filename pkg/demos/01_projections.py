"""
Projections onto constraint sets
================================

Nearest points, distances and the gradient identity for the sets used
throughout the package.
"""

import numpy as np

from dset_infer import qp
from dset_infer.sets import Ball, Box, Simplex, Sphere, StochasticDominance, dist_sq_grad

# a point outside the unit ball moves radially
ball = Ball([0.0, 0.0], 1.0)
res = ball.project([2.0, 0.0])
print("ball:", res.point, res.distance)

# the sphere is not convex; its centre has no unique nearest point
sphere = Sphere([0.0, 0.0, 0.0], 1.0)
print("sphere centre unique?", sphere.project(np.zeros(3)).unique)

# gradient of dist^2 / 2 is theta minus its projection
box = Box([-1.0], [1.0])
print("box gradient at 1.01:", dist_sq_grad(box, [1.01]))

# simplex projection by sorting agrees with the general QP solver
theta = np.array([0.2, 0.3, 0.1])
A, b, E, d = Simplex(3).halfspaces()
print("simplex sort   :", Simplex(3).project(theta).point)
print("simplex QP     :", qp.solve(qp.QpProblem(theta, A, b, E, d)).x)

# stochastic ordering of a 2x2 table of distributions
theta = np.array([0.7, 0.3, 0.4, 0.6])
cone = StochasticDominance(2, 2)
E = np.kron(np.eye(2), np.ones((1, 2)))
sol = qp.solve(qp.QpProblem(theta, cone.A, cone.b, E, np.ones(2)))
print("ordered table  :", sol.x.reshape(2, 2).round(4).tolist(), "active", sol.active_set)
