"""The divergence of an anticipating integrand, by finite differences.

For u = delta(k) h the Skorohod integral is delta(k) delta(h) - (h, k).  The
library computes it as a pairing with the path minus the trace of the
gradient, using central differences along Cameron-Martin shifts.
"""

import numpy as np

from rotorlab import CMVector, RngStream, TimeGrid, cm_inner, ogawa_integral, phi_trace, sample_brownian_batch, skorohod, wiener_integral

grid = TimeGrid(32)
s = grid.times[:-1]
h = CMVector(grid, np.cos(np.pi * s)[:, None])
k = CMVector(grid, (1 + s)[:, None])
u = lambda p: h * wiener_integral(k, p)  # noqa: E731

w = sample_brownian_batch(grid, 1, RngStream(20261017, 0), 1000)
pairing = ogawa_integral(u, w)
trace = phi_trace(u, w)
closed = wiener_integral(k, w) * wiener_integral(h, w) - cm_inner(h, k)
print(f"(h, k)_H = {float(cm_inner(h, k)):.6f}")
print(f"trace term, first paths: {np.round(trace[:4], 8)}")
print(f"max |pairing - trace - closed form| = {np.max(np.abs(pairing - trace - closed)):.2e}")
print(f"same through skorohod():              {np.max(np.abs(skorohod(u, w) - closed)):.2e}")
