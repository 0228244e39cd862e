"""
The one-cell transport toy
==========================

The smallest possible ultraweak solve: ``u' = 0`` on ``(0, 1)`` with ``u(0) = 1``,
posed on a strip one cell high so that the 2D code sees a 1D problem.
Everything here can be checked by hand.
"""

import numpy as np

from uwtransport.coefficients import ConstantField, constant_inflow, constant_velocity
from uwtransport.mesh import CHANNEL_GEOMETRY, build_mesh
from uwtransport.reconstruct import eval_u, outflow_trace
from uwtransport.ultraweak import build_system, solve_ultraweak

# A single Q1 cell. The left side is inflow, the right side outflow.
mesh = build_mesh(1, 1, CHANNEL_GEOMETRY)
system = build_system(mesh, 1, constant_velocity(1.0, 0.0), ConstantField(0.0), g=constant_inflow(1.0))

# The test basis has four functions, but in y they only come in copies, so
# summing over the bottom and top copy recovers the 1D matrix of the hat
# functions 1 - x and x:  int v_i' v_j' + v_i(1) v_j(1).
G = system.gram.toarray()
bottom, top = [0, 1], [2, 3]
G1 = sum(G[np.ix_(a, b)] for a in (bottom, top) for b in (bottom, top))
f1 = system.rhs[bottom] + system.rhs[top]
print("1D Gram matrix\n", G1.round(14))
print("1D right-hand side", f1)

# Solving gives w = 1 + (1 - x), i.e. nodal values (2, 1).
sol = solve_ultraweak(system, tol=1e-14)
print("w at the four nodes", sol.w.coeffs.round(12))

# The solution is never assembled; it is evaluated pointwise as u = -b . grad w.
rng = np.random.default_rng(0)
u = eval_u(sol, np.zeros(5, int), rng.random((5, 2)))
print("u at random points", u.round(12))
print("outflow trace", outflow_trace(sol).values.ravel().round(12))

# Had the inflow term entered the right-hand side with a minus sign, the same
# pipeline would return u = -1 everywhere: the sign is easy to get wrong.
system.rhs = -system.rhs
flipped = solve_ultraweak(system, tol=1e-14)
print("u with the flipped inflow sign", eval_u(flipped, np.zeros(3, int), rng.random((3, 2))).round(12))
