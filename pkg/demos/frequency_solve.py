#!/usr/bin/env python3
"""Solve the stretched frequency-domain system and inspect it.

Assembles the first-order stretched system for a compactly supported
source at a few complex frequencies, solves, and reports the solution
norm, the interior residual of the equivalent divergence-form Helmholtz
equation, and the residual of the second (never imposed) boundary
condition.

Usage:  python3 demos/frequency_solve.py [n]
"""

import sys

import numpy as np

from paulipml import freqdomain
from paulipml.geometry import BoxDomain
from paulipml.stretching import AbsorptionProfile, StretchContext
from paulipml.timedomain import Grid

n = int(sys.argv[1]) if len(sys.argv) > 1 else 17

box = BoxDomain((1.0, 1.0, 1.0), inner_fraction=0.5)
grid = Grid(box, (n, n, n))
profiles = tuple(AbsorptionProfile(a=0.5, b=1.0, sigma0=1.0)
                 for _ in range(3))

x = grid.mesh()
F = np.zeros((2,) + tuple(grid.shape), dtype=complex)
F[0] = np.maximum(0.0, 1.0 - np.sum(x ** 2, axis=0) / 0.16) ** 4

print(f"grid {n}^3, {2 * n ** 3} complex unknowns\n")
print(f"{'tau':>10}  {'|u|':>10}  {'helmholtz res':>14}  {'2nd-bc res':>10}")
for tau in (2.0 + 1.0j, 4.0 + 2.0j, 8.0 + 1.0j):
    ctx = StretchContext(tau, profiles)
    op = freqdomain.assemble_stretched(ctx, grid, F)
    u = freqdomain.solve(op)
    res = freqdomain.helmholtz_vs_stretched(u, ctx, grid, F)
    _, bc2 = freqdomain.second_bc_residual(u, ctx, grid)
    print(f"{tau!s:>10}  {grid.norm(u):10.4e}  {grid.norm(res):14.4e}"
          f"  {bc2:10.4e}")

print("\nThe helmholtz residual is finite-difference truncation; refine "
      "the grid and it shrinks at 2nd order.  The 2nd-bc residual decays "
      "too although the solver never imposes that condition.")
