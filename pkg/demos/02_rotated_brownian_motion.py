"""The rotated path T w is again a Brownian motion.

T w is built from the Wiener integrals of the rotated indicator vectors.
Here we check the identity delta(h) o T = delta(R h) path by path and then
look at the increments of T w over many paths.
"""

import numpy as np

from rotorlab import CMVector, RngStream, TimeGrid, sample_brownian_batch, transform, wiener_integral
from rotorlab.ergostat import levy_check
from rotorlab.rotors import state_rotation_rotor

SEED = 20261017
grid = TimeGrid(8)
R = state_rotation_rotor(lambda st: np.pi * st[..., 0] + st[..., 1] ** 2)

w = sample_brownian_batch(grid, 2, RngStream(SEED, 0), 10_000)
Tw = transform(R, w)

h = CMVector(grid, np.arange(16.0).reshape(8, 2))
err = np.max(np.abs(wiener_integral(h, Tw) - wiener_integral(R.apply(w, h), w)))
print(f"max |delta h(Tw) - delta(Rh)(w)| over 10^4 paths: {err:.2e}")

rep = levy_check(Tw)
print("increments of T w:")
print(f"  worst relative error of a cell variance: {rep.max_rel_variance_error:.4f} (tolerance {rep.rel_tol})")
print(f"  largest |correlation| between cells:     {rep.max_abs_correlation:.4f} (band {rep.corr_band:.4f})")
print("  cell variances / dt:")
print(np.round(rep.cell_variance / grid.dt, 3))
