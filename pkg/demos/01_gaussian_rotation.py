"""A random rotation of Cameron-Martin space keeps delta(h) Gaussian.

We rotate a fixed unit vector h by the sign of an independent Brownian path
(and, in two dimensions, by an angle read off the current state of w itself)
and look at the law of delta(R h).  Although R h is random and correlated
with w, the result is still N(0, |h|^2).
"""

import numpy as np

from rotorlab import CMVector, RngStream, SignFamily, TimeGrid, sample_brownian_batch, wiener_integral
from rotorlab.ergostat import gaussianity_report
from rotorlab.rotors import state_rotation_rotor

SEED = 20261017
M = 20_000
grid = TimeGrid(128)

w = sample_brownian_batch(grid, 1, RngStream(SEED, 0), M)
h = CMVector.constant(grid, 1)
R = SignFamily(grid, RngStream(SEED, 1000)).at(1, 0, M)
x = wiener_integral(R.apply(w, h), w)
rep = gaussianity_report(x)
print("sign rotor, hdot = 1")
print(f"  mean {rep.mean:+.4f}  variance {rep.variance:.4f}  skew {rep.skewness:+.4f}  "
      f"excess kurtosis {rep.excess_kurtosis:+.4f}  KS {rep.ks_distance:.4f}")

# a path-dependent rotation in the plane
R2 = state_rotation_rotor(lambda st: np.pi * st[..., 0] + st[..., 1] ** 2)
s = grid.times[:-1]
h2 = CMVector(grid, np.stack([np.cos(2 * np.pi * s), np.sin(2 * np.pi * s)], -1))
w2 = sample_brownian_batch(grid, 2, RngStream(SEED, 0), M)
rep2 = gaussianity_report(wiener_integral(R2.apply(w2, h2), w2))
print("adapted rotation, angle = pi W1(s) + W2(s)^2")
print(f"  mean {rep2.mean:+.4f}  variance {rep2.variance:.4f}  skew {rep2.skewness:+.4f}  "
      f"excess kurtosis {rep2.excess_kurtosis:+.4f}  KS {rep2.ks_distance:.4f}")

# for contrast: multiplying h by a random factor that is not a rotation breaks the law
scale = 1 + 0.5 * np.sign(w.values()[:, -1, 0])
bad = gaussianity_report(scale * wiener_integral(h, w))
print("non-isometric random scaling (for contrast)")
print(f"  variance {bad.variance:.3f}  excess kurtosis {bad.excess_kurtosis:+.3f}  passes: {bad.passed}")
