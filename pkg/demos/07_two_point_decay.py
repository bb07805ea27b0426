"""Powers of the two-point function of the sign rotor.

A(s, t) = E[sign b_s sign b_t] = (2/pi) arcsin sqrt(s/t) for s < t.  Its
powers decay for every pair with s > 0, fastest when s and t are far apart.
A Monte Carlo estimate of A confirms the closed form.
"""

import numpy as np

from rotorlab import RngStream, TimeGrid, sample_brownian_batch
from rotorlab.ergostat import example1_decay, sign_two_point

pairs = [(0.1, 0.9), (0.5, 0.9), (0.8, 0.9), (0.89, 0.9)]
curve = example1_decay(sign_two_point, np.ones(1), np.ones(1), 40, pairs)
for (s, t), vals, rad in zip(curve.pairs, curve.values, curve.spectral_radius):
    print(f"s={s:.2f} t={t:.2f}  A={rad:.4f}  A^10={vals[10]:.2e}  A^40={vals[40]:.2e}")
print(f"pairs still above 1e-2 at n=40: {int(curve.violating.sum())}")

grid = TimeGrid(10)
b = sample_brownian_batch(grid, 1, RngStream(20261017, 0), 100_000).values()[:, :, 0]
sg = np.where(b >= 0, 1.0, -1.0)
for i, j in ((1, 9), (5, 9), (8, 9)):
    print(f"MC E[sign b_{i / 10:.1f} sign b_{j / 10:.1f}] = {np.mean(sg[:, i] * sg[:, j]):.4f}   "
          f"closed form {sign_two_point(i / 10, j / 10)[0, 0]:.4f}")
