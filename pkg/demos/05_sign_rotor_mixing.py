"""Mixing of the sign rotor.

Q_n h multiplies hdot by a product of n independent Brownian signs, so
(Q_n h, h) shrinks as n grows.  The Wick exponentials rho(delta h) and
rho(delta h) o T^n become uncorrelated: their product averages to 1.
"""

import numpy as np

from rotorlab import CMVector, RngStream, SignFamily, TimeGrid
from rotorlab.ergostat import qn_decay, wick_mixing_curve

SEED = 20261017
grid = TimeGrid(64)
h = CMVector.constant(grid, 1)
fam = SignFamily(grid, RngStream(SEED, 1000))

decay = qn_decay(fam, h, h, 8, 20_000, RngStream(SEED, 0))
curve = wick_mixing_curve(h, h, fam, 8, 20_000, RngStream(SEED, 0))
print(" n   E(Q_n h,h)^2   P(|.|>0.1)   E[rho rho o T^n]   reference")
print(f" 0   {1.0:12.4f}   {1.0:10.3f}   {curve.estimate[0]:9.4f} +- {curve.stderr[0]:.4f}   {curve.reference[0]:.4f}")
for n in range(1, 9):
    print(f"{n:2d}   {decay.second_moment[n - 1]:12.4f}   {decay.exceedance[n - 1]:10.3f}   "
          f"{curve.estimate[n]:9.4f} +- {curve.stderr[n]:.4f}   {curve.reference[n]:.4f}")
print(f"strictly decreasing: {decay.monotone_decay};  |(Q_n h, h)| <= |h|^2 always: {decay.cauchy_schwarz_ok}")
print(f"max |sample| = {np.max(np.abs(decay.samples)):.3f}")
