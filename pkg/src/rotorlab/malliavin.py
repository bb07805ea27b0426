"""Discrete Malliavin calculus on the grid Wiener space, and the rotation ``T``.

The gradient is realized by central finite differences along Cameron-Martin
shifts ``dW_i -> dW_i + eps * kdot_i * dt``.  The divergence of an H-valued
map ``u`` is split as ``delta u = ogawa(u) - phi_trace(grad u)``.

``transform(R, w)`` builds the rotated path whose normalized increments are
``delta(R(w) e_n)(w)`` for the indicator basis ``e_n``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .grid_paths import CMVector, DiscretePath, _same_space
from .rotors import Rotor, as_family

__all__ = [
    "FDConfig",
    "HValuedMap",
    "gradient_direction",
    "ogawa_integral",
    "phi_trace",
    "skorohod",
    "transform",
    "iterate_T",
    "iterate_Q",
    "RotorSequence",
]

BASIS_TOL = 1e-10


@dataclass(frozen=True)
class FDConfig:
    """Central-difference step.  ``tolerance`` is the error budget ``10 eps^2 + 1e-9``."""

    eps: float = 1e-5

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")

    @property
    def tolerance(self) -> float:
        return 10 * self.eps**2 + 1e-9


@dataclass(frozen=True)
class HValuedMap:
    """A map ``w -> u(w)`` from paths to Cameron-Martin vectors.

    ``adapted`` declares that cell ``i`` of ``u(w)`` depends only on increments
    with index ``< i``.
    """

    func: Callable[[DiscretePath], CMVector]
    smooth: bool = True
    adapted: bool = False

    def __call__(self, w: DiscretePath) -> CMVector:
        return self.func(w)


def _eval(F, w):
    val = np.asarray(F(w), dtype=float)
    if not np.all(np.isfinite(val)):
        raise FloatingPointError("functional returned a non-finite value")
    return val


def gradient_direction(F: Callable, w: DiscretePath, k: CMVector, cfg: FDConfig = FDConfig()):
    """``d/de F(w + e k)`` at ``e = 0`` by central differences."""
    _same_space(w, k)
    up = _eval(F, w.shift(k, cfg.eps))
    down = _eval(F, w.shift(k, -cfg.eps))
    return (up - down) / (2 * cfg.eps)


def _basis_matrix(basis, grid, dim) -> np.ndarray:
    """Columns = coordinates of the basis vectors.  ``None`` means the indicator basis."""
    n_coords = grid.n_steps * dim
    if basis is None:
        return np.eye(n_coords)
    if isinstance(basis, np.ndarray):
        B = np.asarray(basis, dtype=float)
    else:
        basis = list(basis)
        for v in basis:
            if v.grid != grid or v.dim != dim:
                raise ValueError("basis vector on a different space")
        B = np.column_stack([v.coords() for v in basis])
    if B.ndim != 2 or B.shape[0] != n_coords:
        raise ValueError(f"basis must have {n_coords} coordinates per vector")
    err = np.max(np.abs(B.T @ B - np.eye(B.shape[1])))
    if err > BASIS_TOL:
        raise ValueError(f"basis is not orthonormal (max error {err:.3g})")
    return B


def ogawa_integral(u: Callable, w: DiscretePath, basis=None):
    """``sum_i (u(w), phi_i)_H * delta(phi_i)(w)``."""
    B = _basis_matrix(basis, w.grid, w.dim)
    x = u(w)
    _same_space(w, x)
    return np.sum((x.coords() @ B) * (w.xi() @ B), axis=-1)


def phi_trace(u: Callable, w: DiscretePath, basis=None, cfg: FDConfig = FDConfig()):
    """``sum_i grad_{phi_i} (u, phi_i)_H`` with finite differences, one basis vector at a time."""
    B = _basis_matrix(basis, w.grid, w.dim)
    total = 0.0
    for col in B.T:
        phi = CMVector.from_coords(w.grid, w.dim, col)
        up = u(w.shift(phi, cfg.eps)).coords() @ col
        down = u(w.shift(phi, -cfg.eps)).coords() @ col
        term = (up - down) / (2 * cfg.eps)
        if not np.all(np.isfinite(term)):
            raise FloatingPointError("non-finite value in trace evaluation")
        total = total + term
    return total


def skorohod(u: Callable, w: DiscretePath, basis=None, cfg: FDConfig = FDConfig()):
    """Divergence ``delta u = ogawa(u) - phi_trace(grad u)``."""
    return ogawa_integral(u, w, basis) - phi_trace(u, w, basis, cfg)


def transform(R: Rotor, w: DiscretePath, cfg: FDConfig = FDConfig()) -> DiscretePath:
    """The rotated path ``T w``.

    For trace-free rotors ``delta(R e_n) = (R e_n, xi)``, hence
    ``dY = dt * R(w)^* (dW / dt)``; for adapted matrices this is
    ``dY_i = sigma_i^T dW_i``.  Other rotors fall back to the finite-difference
    Skorohod integral of every ``R e_n``.
    """
    dt = w.grid.dt
    if R.trace_free:
        g = CMVector(w.grid, w.increments / dt)
        return DiscretePath(w.grid, R.apply_adjoint(w, g).density * dt)
    warnings.warn(
        "rotor not declared trace-free: T is computed in the indicator basis and is "
        "basis-independent only if the trace of grad(R h) vanishes",
        stacklevel=2,
    )
    if w.batch_shape:
        raise ValueError("generic transform works on single paths only")
    n_coords = w.grid.n_steps * w.dim
    xi_new = np.empty(n_coords)
    for n in range(n_coords):
        e_n = CMVector.from_coords(w.grid, w.dim, np.eye(n_coords)[n])
        xi_new[n] = skorohod(lambda v: R.apply(v, e_n), w, None, cfg)
    inc = xi_new.reshape(w.grid.n_steps, w.dim) * math.sqrt(dt)
    return DiscretePath(w.grid, inc)


def _n_paths(w):
    return w.batch_shape[0] if w.batch_shape else None


class RotorSequence:
    """Rotors ``R_1, ..., R_n`` along the orbit ``w, T_1 w, T_2 T_1 w, ...``.

    ``rotors[j]`` is the level ``j + 1`` rotor and acts at ``orbit[j]``;
    ``orbit[j]`` is ``T^j w``.
    """

    def __init__(self, family, w: DiscretePath, n: int, start: int = 0):
        fam = as_family(family)
        self.family = fam
        self.rotors = []
        self.orbit = [w]
        for level in range(1, n + 1):
            R = fam.at(level, start, _n_paths(w))
            self.rotors.append(R)
            self.orbit.append(transform(R, self.orbit[-1]))

    def __len__(self):
        return len(self.rotors)

    def Q(self, n: int, h: CMVector) -> CMVector:
        """``Q_n h = R_1(w) R_2(Tw) ... R_n(T^{n-1} w) h``."""
        if not 0 <= n <= len(self):
            raise ValueError(f"n must be in 0..{len(self)}")
        v = h
        for j in reversed(range(n)):
            v = self.rotors[j].apply(self.orbit[j], v)
        return v

    def Q_adjoint_iter(self, k: CMVector):
        """Yield ``Q_n^* k`` for ``n = 1..len``, one rotor application per step."""
        v = k
        for j in range(len(self)):
            v = self.rotors[j].apply_adjoint(self.orbit[j], v)
            yield v


def iterate_T(R, w: DiscretePath, n: int, start: int = 0) -> list:
    """``[T^1 w, ..., T^n w]``; ``R`` is a rotor (same every level) or a :class:`RotorFamily`."""
    return RotorSequence(R, w, n, start).orbit[1:]


def iterate_Q(R, w: DiscretePath, n: int, h: CMVector, start: int = 0) -> list:
    """``[Q_1 h, ..., Q_n h]``."""
    seq = RotorSequence(R, w, n, start)
    return [seq.Q(j, h) for j in range(1, n + 1)]
