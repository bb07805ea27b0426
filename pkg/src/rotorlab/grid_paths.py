"""Time grids, Brownian increments and the discrete Cameron-Martin space.

A path on the uniform grid of ``[0, 1]`` is stored through its increments
``dW_i``; a Cameron-Martin vector ``h`` through its cell-constant density
``hdot_i``.  Arrays may carry leading batch axes: the last two axes are always
``(n_steps, dim)``.

The normalized indicator basis ``e_{i,c} = 1_{[s_i, s_{i+1})} e_c / sqrt(dt)``
identifies H with ``R^(n_steps * dim)``.  In those coordinates a vector has
``coords = hdot * sqrt(dt)`` and a path has ``xi = dW / sqrt(dt)``, which are
i.i.d. standard normals under Wiener measure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "TimeGrid",
    "DiscretePath",
    "CMVector",
    "RngStream",
    "sample_brownian",
    "sample_brownian_batch",
    "cm_inner",
    "wiener_integral",
    "indicator_vector",
    "indicator_basis",
]

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition of [0, 1] into ``n_steps`` cells."""

    n_steps: int

    def __post_init__(self):
        if not isinstance(self.n_steps, (int, np.integer)) or self.n_steps < 2:
            raise ValueError(f"n_steps must be an integer >= 2, got {self.n_steps!r}")

    @property
    def dt(self) -> float:
        return 1.0 / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt


def _check_block(arr, grid, what):
    arr = np.asarray(arr, dtype=float)
    if arr.ndim < 2 or arr.shape[-2] != grid.n_steps or arr.shape[-1] < 1:
        raise ValueError(
            f"{what} must have shape (..., {grid.n_steps}, dim), got {arr.shape}"
        )
    return arr


@dataclass(frozen=True, eq=False)
class DiscretePath:
    """Brownian-type path given by its increments, shape ``(..., n_steps, dim)``."""

    grid: TimeGrid
    increments: np.ndarray

    def __post_init__(self):
        inc = _check_block(self.increments, self.grid, "increments")
        inc.setflags(write=False)
        object.__setattr__(self, "increments", inc)

    @property
    def dim(self) -> int:
        return self.increments.shape[-1]

    @property
    def batch_shape(self) -> tuple:
        return self.increments.shape[:-2]

    def values(self) -> np.ndarray:
        """Path values ``W(s_i)`` for ``i = 0..n_steps`` with ``W(0) = 0``."""
        zero = np.zeros(self.batch_shape + (1, self.dim))
        return np.concatenate([zero, np.cumsum(self.increments, axis=-2)], axis=-2)

    def xi(self) -> np.ndarray:
        """Flattened normalized increments ``dW / sqrt(dt)``, shape ``(..., N)``."""
        return (self.increments / math.sqrt(self.grid.dt)).reshape(self.batch_shape + (-1,))

    def shift(self, k: "CMVector", eps: float = 1.0) -> "DiscretePath":
        """Cameron-Martin shift ``w + eps k`` (adds ``eps * kdot_i * dt`` to cell i)."""
        _same_space(self, k)
        return DiscretePath(self.grid, self.increments + eps * k.density * self.grid.dt)

    def __getitem__(self, idx) -> "DiscretePath":
        if not self.batch_shape:
            raise IndexError("path is not batched")
        return DiscretePath(self.grid, self.increments[idx])

    def __len__(self):
        if not self.batch_shape:
            raise TypeError("path is not batched")
        return self.batch_shape[0]


@dataclass(frozen=True, eq=False)
class CMVector:
    """Element of the discrete Cameron-Martin space (cell-constant density)."""

    grid: TimeGrid
    density: np.ndarray

    def __post_init__(self):
        den = _check_block(self.density, self.grid, "density")
        den.setflags(write=False)
        object.__setattr__(self, "density", den)

    @property
    def dim(self) -> int:
        return self.density.shape[-1]

    @property
    def batch_shape(self) -> tuple:
        return self.density.shape[:-2]

    @classmethod
    def zeros(cls, grid: TimeGrid, dim: int) -> "CMVector":
        return cls(grid, np.zeros((grid.n_steps, dim)))

    @classmethod
    def constant(cls, grid: TimeGrid, dim: int, value=1.0) -> "CMVector":
        return cls(grid, np.full((grid.n_steps, dim), float(value)))

    @classmethod
    def from_coords(cls, grid: TimeGrid, dim: int, coords) -> "CMVector":
        """Build from coordinates in the normalized indicator basis."""
        coords = np.asarray(coords, dtype=float)
        den = coords.reshape(coords.shape[:-1] + (grid.n_steps, dim)) / math.sqrt(grid.dt)
        return cls(grid, den)

    def coords(self) -> np.ndarray:
        return (self.density * math.sqrt(self.grid.dt)).reshape(self.batch_shape + (-1,))

    def norm(self):
        return np.sqrt(cm_inner(self, self))

    def __add__(self, other: "CMVector") -> "CMVector":
        _same_space(self, other)
        return CMVector(self.grid, self.density + other.density)

    def __sub__(self, other: "CMVector") -> "CMVector":
        _same_space(self, other)
        return CMVector(self.grid, self.density - other.density)

    def __neg__(self) -> "CMVector":
        return CMVector(self.grid, -self.density)

    def __mul__(self, alpha) -> "CMVector":
        alpha = np.asarray(alpha, dtype=float)
        if alpha.ndim:
            alpha = alpha[..., None, None]
        return CMVector(self.grid, alpha * self.density)

    __rmul__ = __mul__

    def __truediv__(self, alpha) -> "CMVector":
        return self * (1.0 / np.asarray(alpha, dtype=float))


def _same_space(a, b):
    if a.grid != b.grid:
        raise ValueError(f"grid mismatch: {a.grid} vs {b.grid}")
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")


@dataclass(frozen=True)
class RngStream:
    """Counter-based random stream keyed by ``(master_seed, stream_index)``.

    Backed by Philox-4x64.  Draws are laid out per *path*: path ``j`` of a
    stream owns a fixed block of counters, so the values for path ``j`` never
    depend on how many other paths are generated alongside it, or in which
    order.  Normals come from the Box-Muller transform of 53-bit uniforms,
    pairing words ``(2m, 2m + 1)`` of the path's block.
    """

    master_seed: int
    stream_index: int = 0
    _key: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not 0 <= self.master_seed <= _MASK64:
            raise ValueError("master_seed must fit in 64 bits")
        if self.stream_index < 0:
            raise ValueError("stream_index must be nonnegative")
        key = np.array([self.master_seed & _MASK64, self.stream_index & _MASK64], dtype=np.uint64)
        object.__setattr__(self, "_key", key)

    def child(self, offset: int) -> "RngStream":
        """Stream with the same seed and ``stream_index + offset``."""
        return RngStream(self.master_seed, self.stream_index + offset)

    def raw(self, words_per_path: int, n_paths: int = 1, start: int = 0) -> np.ndarray:
        """Raw 64-bit words, shape ``(n_paths, words_per_path)``."""
        blocks = -(-words_per_path // 4)
        bitgen = np.random.Philox(key=self._key, counter=start * blocks)
        out = bitgen.random_raw(n_paths * blocks * 4).reshape(n_paths, blocks * 4)
        return out[:, :words_per_path]

    def uniforms(self, per_path: int, n_paths: int = 1, start: int = 0) -> np.ndarray:
        """Uniforms on [0, 1), 53-bit resolution, shape ``(n_paths, per_path)``."""
        return (self.raw(per_path, n_paths, start) >> np.uint64(11)) * 2.0**-53

    def normals(self, per_path: int, n_paths: int = 1, start: int = 0) -> np.ndarray:
        """Standard normals via Box-Muller, shape ``(n_paths, per_path)``."""
        pairs = -(-per_path // 2)
        u = self.uniforms(2 * pairs, n_paths, start)
        radius = np.sqrt(-2.0 * np.log1p(-u[:, 0::2]))
        angle = 2.0 * np.pi * u[:, 1::2]
        z = np.empty((n_paths, 2 * pairs))
        z[:, 0::2] = radius * np.cos(angle)
        z[:, 1::2] = radius * np.sin(angle)
        return z[:, :per_path]


def sample_brownian_batch(
    grid: TimeGrid, dim: int, stream: RngStream, n_paths: int, start: int = 0
) -> DiscretePath:
    """Sample paths ``start .. start + n_paths - 1`` of ``stream`` as one batch."""
    if not isinstance(grid, TimeGrid):
        raise TypeError("grid must be a TimeGrid")
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    z = stream.normals(grid.n_steps * dim, n_paths, start)
    inc = z.reshape(n_paths, grid.n_steps, dim) * math.sqrt(grid.dt)
    return DiscretePath(grid, inc)


def sample_brownian(grid: TimeGrid, dim: int, stream: RngStream, path_index: int = 0) -> DiscretePath:
    """Sample a single Brownian path; identical to row ``path_index`` of a batch."""
    batch = sample_brownian_batch(grid, dim, stream, 1, start=path_index)
    return DiscretePath(grid, batch.increments[0])


def cm_inner(h: CMVector, k: CMVector):
    """``(h, k)_H = sum_i hdot_i . kdot_i dt``; broadcasts over batch axes."""
    _same_space(h, k)
    return np.sum(h.density * k.density, axis=(-2, -1)) * h.grid.dt


def wiener_integral(h: CMVector, w: DiscretePath):
    """``delta h (w) = sum_i hdot_i . dW_i``."""
    _same_space(h, w)
    return np.sum(h.density * w.increments, axis=(-2, -1))


def indicator_vector(grid: TimeGrid, dim: int, a: float, b: float, coord: int = 0) -> CMVector:
    """Density 1 on the cells ``[s_i, s_{i+1})`` lying inside ``[a, b)``, coordinate ``coord``.

    Cells only partially covered by ``[a, b)`` are left out.
    """
    if not 0.0 <= a <= b <= 1.0:
        raise ValueError(f"need 0 <= a <= b <= 1, got a={a}, b={b}")
    if not 0 <= coord < dim:
        raise ValueError(f"coord {coord} out of range for dim {dim}")
    # cells with s_i >= a and s_{i+1} <= b, robust to rounding of a, b onto the grid
    n = grid.n_steps
    first = math.ceil(a * n - 1e-9)
    last = math.floor(b * n + 1e-9)
    den = np.zeros((n, dim))
    if last > first:
        den[first:last, coord] = 1.0
    return CMVector(grid, den)


def indicator_basis(grid: TimeGrid, dim: int) -> np.ndarray:
    """Coordinate matrix (identity) of the normalized indicator basis, ``(N, N)``."""
    return np.eye(grid.n_steps * dim)
