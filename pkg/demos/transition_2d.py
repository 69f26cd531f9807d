#!/usr/bin/env python3
"""Two dimensions: a second-order threshold and the F-pairing test.

In 2D the same ion-atom potential also needs a finite coupling to bind,
but near the threshold the minimizers spread out: ``||u||_4^4`` collapses
as ``g`` decreases to ``g*`` and the state at ``g*`` vanishes.

The obstruction to a zero-energy bound state is the 2D identity
``<u^2, F * u^2> = 0`` with ``F = V/2 + W/4``, which any critical point
must satisfy.  ``F`` is positive inside ``r* = b`` and negative outside,
and for radially nonincreasing densities the pairing is strictly positive.

The script

  * classifies the 2D transition on a 128^2 box of side 48,
  * evaluates the F pairing on a family of radial trial states,
  * checks the radial monotonicity of the density autocorrelation.
"""

import numpy as np

from choquard.grid import Field, Grid, rearrange_decreasing
from choquard.pokhozaev import autocorrelation_monotone_check, two_d_F_pairing
from choquard.potentials import find_rstar, ion_atom
from choquard.transition import classify_transition

p = ion_atom(1.0, 2)
rep = classify_transition(1.0, p, Grid(2, 128, 48.0), bracket=(3.0, 5.0))
print(f"2D transition: {rep.order.value} at g* = {rep.g_star:.4f}")
for pr in rep.evidence["sequence"]:
    print(f"  g = {pr['g']:.5f}  ||u||_4^4 = {pr['l4_4']:.3e}  {pr['status']}")
lim = rep.evidence["at_gstar"][-1]
print(f"  state at g*: {lim['status']} (||u||_4^4 = {lim['l4_4']:.2e})")

grid = Grid(2, 64, 16.0)
rng = np.random.default_rng(0)
print(f"\nr* = {find_rstar(p):.12f}")
for w in (0.5, 1.0, 2.0, 4.0):
    u = Field(grid, np.exp(-grid.r2 / (2 * w * w)))
    print(f"  Gaussian width {w}: <u^2, F * u^2> = {two_d_F_pairing(u, p):.4e}")
u = rearrange_decreasing(Field(grid, rng.random(grid.shape) * np.exp(-grid.r2 / 10)))
print(f"  rearranged noise:  <u^2, F * u^2> = {two_d_F_pairing(u, p):.4e}")
print(f"  autocorrelation radially nonincreasing: {autocorrelation_monotone_check(u).monotone}")
