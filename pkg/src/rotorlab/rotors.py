"""Random isometries of the discrete Cameron-Martin space.

Four families are provided, all acting on :class:`~rotorlab.grid_paths.CMVector`:

* :class:`SpectralRotor` -- ``R = sum_j exp(i phi_j) P_j`` over a finite
  :class:`SpectralResolution`; a complex phase is realized on a 2-dim block as
  a planar rotation, on a 1-dim block only ``+1``/``-1`` are allowed.
  :func:`resolve_iid_phases` draws the phases from a :class:`PhaseLaw`.
* :class:`AdaptedMatrixRotor` -- ``(Rh)'(s_i) = sigma(s_i, w) hdot(s_i)`` with an
  orthogonal, non-anticipating ``sigma``.
* :class:`SignRotor` -- ``(Rh)'(s_i) = sign(b(s_i)) hdot(s_i)`` for an auxiliary
  Brownian path ``b`` independent of ``w``.
* :class:`IdentityRotor`.

Rotors and their randomness broadcast over leading batch axes, so a batch of
paths can carry one realization of the auxiliary randomness per path.
Families (:class:`SignFamily`, :class:`IidPhaseFamily`,
:class:`ConstantFamily`) hand out the rotor used at each iteration level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .grid_paths import (
    CMVector,
    DiscretePath,
    RngStream,
    TimeGrid,
    _same_space,
    sample_brownian_batch,
)

__all__ = [
    "Rotor",
    "IdentityRotor",
    "SpectralRotor",
    "AdaptedMatrixRotor",
    "SignRotor",
    "SpectralResolution",
    "PhaseLaw",
    "apply_rotor",
    "make_sign_rotor",
    "constant_matrix_rotor",
    "state_rotation_rotor",
    "rotation_2d",
    "resolve_iid_phases",
    "spectral_measure",
    "RotorFamily",
    "ConstantFamily",
    "SignFamily",
    "IidPhaseFamily",
    "as_family",
]

ORTHO_TOL = 1e-8


class Rotor:
    """Base class: a (possibly path-dependent) isometry ``h -> R(w) h``.

    Subclasses implement :meth:`apply` and :meth:`apply_adjoint`.  ``path_dependent``
    tells whether ``w`` is actually read; ``trace_free`` declares that
    ``trace(grad R h) = 0`` so that the divergence of ``R h`` equals its
    Ogawa integral (true for every built-in family).
    """

    path_dependent = False
    trace_free = True

    def apply(self, w: DiscretePath | None, h: CMVector) -> CMVector:
        raise NotImplementedError

    def apply_adjoint(self, w: DiscretePath | None, h: CMVector) -> CMVector:
        raise NotImplementedError

    def matrix(self, w: DiscretePath | None = None, grid: TimeGrid | None = None, dim: int | None = None):
        """Matrix of ``R(w)`` in the normalized indicator basis, shape ``(..., N, N)``."""
        if w is not None:
            grid, dim = w.grid, w.dim
        elif self.path_dependent:
            raise ValueError("a path is required for a path-dependent rotor")
        if grid is None or dim is None:
            raise ValueError("grid and dim are required when no path is given")
        n_coords = grid.n_steps * dim
        basis = CMVector.from_coords(grid, dim, np.eye(n_coords))  # batch of N vectors
        if w is not None and w.batch_shape:
            basis = CMVector(grid, basis.density[:, None] * np.ones(w.batch_shape + (1, 1)))
        cols = self.apply(w, basis).coords()  # (N, ..., N) : column j = R e_j
        return np.moveaxis(cols, 0, -1)

    def __call__(self, w, h):
        return self.apply(w, h)


def apply_rotor(R: Rotor, w: DiscretePath | None, h: CMVector) -> CMVector:
    """Apply ``R(w)`` to ``h``."""
    return R.apply(w, h)


class IdentityRotor(Rotor):
    def apply(self, w, h):
        if w is not None:
            _same_space(w, h)
        return h

    apply_adjoint = apply

    def __repr__(self):
        return "IdentityRotor()"


# ---------------------------------------------------------------------------
# sign rotor


class SignRotor(Rotor):
    """Multiplies ``hdot(s_i)`` by ``sign(b(s_i))``, left endpoints, ``sign(0) = +1``.

    ``aux`` is a 1-dim path (batched or not).  With ``dim > 1`` every
    coordinate is multiplied by the same sign.
    """

    def __init__(self, aux: DiscretePath):
        if aux.dim != 1:
            raise ValueError(f"auxiliary path must be 1-dimensional, got dim={aux.dim}")
        self.aux = aux
        b_left = aux.values()[..., :-1, :]
        self.signs = np.where(b_left >= 0.0, 1.0, -1.0)

    def apply(self, w, h):
        if h.grid != self.aux.grid:
            raise ValueError(f"grid mismatch: {h.grid} vs {self.aux.grid}")
        if w is not None:
            _same_space(w, h)
        return CMVector(h.grid, self.signs * h.density)

    apply_adjoint = apply


def make_sign_rotor(aux: DiscretePath) -> SignRotor:
    return SignRotor(aux)


# ---------------------------------------------------------------------------
# adapted matrix rotor


def rotation_2d(angle) -> np.ndarray:
    """Planar rotation matrices, shape ``angle.shape + (2, 2)``."""
    angle = np.asarray(angle, dtype=float)
    c, s = np.cos(angle), np.sin(angle)
    return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)


def _check_orthogonal(mats, where):
    d = mats.shape[-1]
    gram = np.swapaxes(mats, -1, -2) @ mats
    err = np.max(np.abs(gram - np.eye(d))) if gram.size else 0.0
    if not np.isfinite(err) or err > ORTHO_TOL:
        raise ValueError(f"sigma is not orthogonal at {where} (max |S^T S - I| = {err:.3g})")


class AdaptedMatrixRotor(Rotor):
    """``(Rh)'(s_i) = sigma_i(w) hdot(s_i)`` with ``sigma_i`` orthogonal ``d x d``.

    Parameters
    ----------
    sigma : callable
        ``sigma(i, prefix)`` where ``prefix`` holds the increments with index
        ``< i``, shape ``(..., i, d)``; returns matrices of shape ``(..., d, d)``.
        Must broadcast over the leading batch axes and be pure.
    dim : int
    matrices : callable, optional
        Vectorized equivalent ``matrices(increments) -> (..., n, d, d)``; when
        given it is used instead of the step-by-step loop.  It must agree with
        ``sigma``.
    """

    path_dependent = True

    def __init__(self, sigma: Callable, dim: int, matrices: Callable | None = None):
        self.sigma = sigma
        self.dim = dim
        self._matrices = matrices

    def matrices(self, w: DiscretePath) -> np.ndarray:
        if w.dim != self.dim:
            raise ValueError(f"rotor acts on dim {self.dim}, path has dim {w.dim}")
        inc = w.increments
        if self._matrices is not None:
            mats = np.asarray(self._matrices(inc), dtype=float)
            mats = np.broadcast_to(mats, w.batch_shape + (w.grid.n_steps, self.dim, self.dim))
        else:
            steps = []
            for i in range(w.grid.n_steps):
                m = np.asarray(self.sigma(i, inc[..., :i, :]), dtype=float)
                steps.append(np.broadcast_to(m, w.batch_shape + (self.dim, self.dim)))
            mats = np.stack(steps, axis=-3)
        _check_orthogonal(mats, "some step")
        return mats

    def apply(self, w, h):
        if w is None:
            raise ValueError("AdaptedMatrixRotor needs the path w")
        _same_space(w, h)
        mats = self.matrices(w)
        return CMVector(h.grid, np.einsum("...iab,...ib->...ia", mats, h.density))

    def apply_adjoint(self, w, h):
        if w is None:
            raise ValueError("AdaptedMatrixRotor needs the path w")
        _same_space(w, h)
        mats = self.matrices(w)
        return CMVector(h.grid, np.einsum("...iba,...ib->...ia", mats, h.density))


def constant_matrix_rotor(Q) -> AdaptedMatrixRotor:
    """Adapted rotor with the same orthogonal matrix ``Q`` at every step."""
    Q = np.asarray(Q, dtype=float)
    _check_orthogonal(Q, "constant matrix")
    d = Q.shape[0]
    rotor = AdaptedMatrixRotor(lambda i, prefix: Q, d, matrices=lambda inc: np.broadcast_to(Q, inc.shape[:-1] + (d, d)))
    rotor.path_dependent = False
    return rotor


def state_rotation_rotor(angle_of_state: Callable) -> AdaptedMatrixRotor:
    """2-dim rotor turning ``hdot(s_i)`` by ``angle_of_state(W(s_i))``.

    ``angle_of_state`` maps states of shape ``(..., 2)`` to angles ``(...)``.
    """

    def sigma(i, prefix):
        return rotation_2d(angle_of_state(prefix.sum(axis=-2)))

    def matrices(inc):
        zero = np.zeros(inc.shape[:-2] + (1, 2))
        left = np.concatenate([zero, np.cumsum(inc, axis=-2)[..., :-1, :]], axis=-2)
        return rotation_2d(angle_of_state(left))

    return AdaptedMatrixRotor(sigma, 2, matrices=matrices)


# ---------------------------------------------------------------------------
# spectral resolutions and phases


@dataclass(frozen=True, eq=False)
class SpectralResolution:
    """Finite resolution of identity: orthogonal blocks of dimension 1 or 2 with angles.

    ``basis`` holds the block bases as columns (coordinates in the normalized
    indicator basis), block after block; ``block_dims[j]`` columns belong to
    block ``j`` which sits at angle ``thetas[j]``.
    """

    grid: TimeGrid
    dim: int
    thetas: np.ndarray
    block_dims: np.ndarray
    basis: np.ndarray
    offsets: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        thetas = np.asarray(self.thetas, dtype=float)
        dims = np.asarray(self.block_dims, dtype=int)
        basis = np.asarray(self.basis, dtype=float)
        n_coords = self.grid.n_steps * self.dim
        if thetas.shape != dims.shape or thetas.ndim != 1:
            raise ValueError("thetas and block_dims must be 1-d of equal length")
        if np.any((dims != 1) & (dims != 2)):
            raise ValueError("block dimensions must be 1 or 2")
        if np.any(thetas < 0) or np.any(thetas >= 2 * np.pi):
            raise ValueError("thetas must lie in [0, 2 pi)")
        if np.any(np.diff(thetas) < 0):
            raise ValueError("thetas must be nondecreasing")
        if basis.shape != (n_coords, n_coords) or dims.sum() != n_coords:
            raise ValueError(f"blocks must span the whole space of dimension {n_coords}")
        err = np.max(np.abs(basis.T @ basis - np.eye(n_coords)))
        if err > 1e-12 * max(1, n_coords / 64):
            raise ValueError(f"block bases are not orthonormal (max error {err:.3g})")
        for name, val in (("thetas", thetas), ("block_dims", dims), ("basis", basis)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        object.__setattr__(self, "offsets", np.concatenate([[0], np.cumsum(dims)]))

    @classmethod
    def from_blocks(cls, grid: TimeGrid, dim: int, blocks: Sequence) -> "SpectralResolution":
        """Build from ``[(theta, [CMVector, ...]), ...]``."""
        thetas, dims, cols = [], [], []
        for theta, vecs in blocks:
            thetas.append(theta)
            dims.append(len(vecs))
            cols.extend(v.coords() for v in vecs)
        return cls(grid, dim, np.array(thetas), np.array(dims), np.column_stack(cols))

    @property
    def n_blocks(self) -> int:
        return len(self.thetas)

    def block(self, j: int) -> list:
        """Orthonormal basis of block ``j`` as CMVectors."""
        cols = self.basis[:, self.offsets[j] : self.offsets[j + 1]]
        return [CMVector.from_coords(self.grid, self.dim, c) for c in cols.T]

    def projector(self, j: int) -> np.ndarray:
        cols = self.basis[:, self.offsets[j] : self.offsets[j + 1]]
        return cols @ cols.T

    def masses(self, h: CMVector) -> np.ndarray:
        """``|P_j h|^2`` per block (broadcasts over batch axes of ``h``)."""
        y = h.coords() @ self.basis
        return np.add.reduceat(y**2, self.offsets[:-1], axis=-1)

    @classmethod
    def random_planar(cls, grid: TimeGrid, dim: int, stream: RngStream) -> "SpectralResolution":
        """Haar-random basis cut into 2-dim blocks at evenly spaced angles."""
        n_coords = grid.n_steps * dim
        if n_coords % 2:
            raise ValueError("planar resolution needs an even number of coordinates")
        basis = _haar_orthogonal(n_coords, stream)
        n_blocks = n_coords // 2
        thetas = 2 * np.pi * (np.arange(n_blocks) + 0.5) / n_blocks
        return cls(grid, dim, thetas, np.full(n_blocks, 2), basis)

    @classmethod
    def indicator_planar(cls, grid: TimeGrid, dim: int) -> "SpectralResolution":
        """Blocks pairing consecutive indicator basis vectors."""
        n_coords = grid.n_steps * dim
        if n_coords % 2:
            raise ValueError("planar resolution needs an even number of coordinates")
        n_blocks = n_coords // 2
        thetas = 2 * np.pi * (np.arange(n_blocks) + 0.5) / n_blocks
        return cls(grid, dim, thetas, np.full(n_blocks, 2), np.eye(n_coords))

    @classmethod
    def with_atom(cls, h: CMVector, stream: RngStream, atom_dim: int = 2) -> "SpectralResolution":
        """Planar resolution whose first block contains ``h`` (an atom of its spectral measure)."""
        grid, dim = h.grid, h.dim
        n_coords = grid.n_steps * dim
        x = h.coords()
        if not np.any(x):
            raise ValueError("h must be nonzero")
        rest = _haar_orthogonal(n_coords, stream)
        q, r = np.linalg.qr(np.column_stack([x, rest[:, : n_coords - 1]]))
        q = q * np.where(np.diag(r) < 0, -1.0, 1.0)
        if atom_dim == 1:
            if (n_coords - 1) % 2:
                raise ValueError("remaining coordinates must pair into planes")
            dims = [1] + [2] * ((n_coords - 1) // 2)
        else:
            if n_coords % 2:
                raise ValueError("planar resolution needs an even number of coordinates")
            dims = [2] * (n_coords // 2)
        n_blocks = len(dims)
        thetas = 2 * np.pi * (np.arange(n_blocks) + 0.5) / n_blocks
        if atom_dim == 1:
            thetas[0] = 0.0
        return cls(grid, dim, np.sort(thetas), np.array(dims), q)


def _haar_orthogonal(n: int, stream: RngStream) -> np.ndarray:
    z = stream.normals(n * n).reshape(n, n)
    q, r = np.linalg.qr(z)
    return q * np.where(np.diag(r) < 0, -1.0, 1.0)


def spectral_measure(res: SpectralResolution, h: CMVector) -> list:
    """``[(theta_j, |P_j h|^2), ...]`` for a single nonzero ``h``."""
    if h.grid != res.grid or h.dim != res.dim:
        raise ValueError("h does not live on the resolution's space")
    if h.batch_shape:
        raise ValueError("spectral_measure takes a single vector")
    masses = res.masses(h)
    if not np.any(h.density):
        raise ValueError("spectral measure of the zero vector is not defined")
    return list(zip(res.thetas.tolist(), masses.tolist()))


class SpectralRotor(Rotor):
    """``R = sum_j exp(i phase_j) P_j`` on a finite resolution.

    ``phases`` is either a callable ``theta -> angle`` (default: the identity,
    ``R = int exp(i theta) dp_theta``) or an array of per-block angles with
    optional leading batch axes.
    """

    def __init__(self, res: SpectralResolution, phases=None):
        self.res = res
        if phases is None:
            phases = res.thetas.copy()
        elif callable(phases):
            phases = np.array([phases(t) for t in res.thetas], dtype=float)
        phases = np.asarray(phases, dtype=float)
        if phases.shape[-1:] != (res.n_blocks,):
            raise ValueError(f"need one phase per block ({res.n_blocks}), got shape {phases.shape}")
        one_dim = res.block_dims == 1
        if np.any(np.abs(np.sin(phases[..., one_dim])) > 1e-12):
            raise ValueError("1-dim blocks accept only the angles 0 and pi")
        self.phases = phases
        offs = res.offsets[:-1]
        self._first = offs[~one_dim]
        self._second = offs[~one_dim] + 1
        self._single = offs[one_dim]
        self._one_dim = one_dim

    def _rotate(self, h, sign):
        if h.grid != self.res.grid or h.dim != self.res.dim:
            raise ValueError("h does not live on the resolution's space")
        y = h.coords() @ self.res.basis
        ph = sign * self.phases
        c, s = np.cos(ph), np.sin(ph)
        out = np.empty(np.broadcast_shapes(y.shape, ph.shape[:-1] + y.shape[-1:]))
        two = ~self._one_dim
        a, b = y[..., self._first], y[..., self._second]
        out[..., self._first] = c[..., two] * a - s[..., two] * b
        out[..., self._second] = s[..., two] * a + c[..., two] * b
        out[..., self._single] = np.round(c[..., self._one_dim]) * y[..., self._single]
        return CMVector.from_coords(h.grid, h.dim, out @ self.res.basis.T)

    def apply(self, w, h):
        if w is not None:
            _same_space(w, h)
        return self._rotate(h, 1.0)

    def apply_adjoint(self, w, h):
        if w is not None:
            _same_space(w, h)
        return self._rotate(h, -1.0)


_LAW_KINDS = ("constant", "uniform", "two_point", "custom_table")


@dataclass(frozen=True)
class PhaseLaw:
    """Law of the random phase attached to each spectral block.

    ``constant``: always ``value``; ``uniform``: uniform on ``[0, 2 pi)``;
    ``two_point`` and ``custom_table``: atoms with probabilities.
    """

    kind: str
    value: float = 0.0
    atoms: tuple = ()
    probs: tuple = ()

    def __post_init__(self):
        if self.kind not in _LAW_KINDS:
            raise ValueError(f"unknown phase law kind {self.kind!r}")
        if self.kind in ("two_point", "custom_table"):
            atoms = np.asarray(self.atoms, dtype=float)
            probs = np.asarray(self.probs, dtype=float)
            if atoms.ndim != 1 or atoms.shape != probs.shape or atoms.size == 0:
                raise ValueError("atoms and probs must be 1-d of equal, positive length")
            if self.kind == "two_point" and atoms.size != 2:
                raise ValueError("two_point law needs exactly two atoms")
            if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
                raise ValueError("probs must be nonnegative and sum to 1")

    @classmethod
    def constant(cls, value: float) -> "PhaseLaw":
        return cls("constant", value=float(value))

    @classmethod
    def uniform(cls) -> "PhaseLaw":
        return cls("uniform")

    @classmethod
    def two_point(cls, a: float, b: float, p: float = 0.5) -> "PhaseLaw":
        return cls("two_point", atoms=(float(a), float(b)), probs=(float(p), 1.0 - float(p)))

    @classmethod
    def custom_table(cls, atoms, probs) -> "PhaseLaw":
        return cls("custom_table", atoms=tuple(map(float, atoms)), probs=tuple(map(float, probs)))

    def characteristic(self) -> complex:
        """``E exp(i psi)``."""
        if self.kind == "constant":
            return complex(np.exp(1j * self.value))
        if self.kind == "uniform":
            return 0j
        return complex(np.sum(np.asarray(self.probs) * np.exp(1j * np.asarray(self.atoms))))

    def sample(self, stream: RngStream, n_blocks: int, n_paths: int = 1, start: int = 0) -> np.ndarray:
        """Angles of shape ``(n_paths, n_blocks)``, path ``j`` reading its own counter block."""
        if self.kind == "constant":
            return np.full((n_paths, n_blocks), self.value)
        u = stream.uniforms(n_blocks, n_paths, start)
        if self.kind == "uniform":
            return 2 * np.pi * u
        cum = np.cumsum(self.probs)
        idx = np.minimum(np.searchsorted(cum, u, side="right"), len(cum) - 1)
        return np.asarray(self.atoms)[idx]


def resolve_iid_phases(
    res: SpectralResolution,
    law: PhaseLaw,
    stream: RngStream,
    n_paths: int | None = None,
    start: int = 0,
) -> SpectralRotor:
    """Draw one phase per block (i.i.d.) and return the resulting spectral rotor.

    With ``n_paths`` the rotor is batched: path ``start + j`` gets its own phases.
    """
    phases = law.sample(stream, res.n_blocks, 1 if n_paths is None else n_paths, start)
    if n_paths is None:
        phases = phases[0]
    return SpectralRotor(res, phases)


# ---------------------------------------------------------------------------
# families: which rotor acts at iteration level 1, 2, ...


class RotorFamily:
    """Supplies the rotor of level ``level >= 1`` for paths ``start .. start + n_paths - 1``.

    ``n_paths=None`` requests an unbatched rotor for the single path ``start``.
    """

    def at(self, level: int, start: int = 0, n_paths: int | None = None) -> Rotor:
        raise NotImplementedError


class ConstantFamily(RotorFamily):
    """The same rotor at every level (randomness, if any, only through ``w``)."""

    def __init__(self, rotor: Rotor):
        self.rotor = rotor

    def at(self, level, start=0, n_paths=None):
        return self.rotor


class SignFamily(RotorFamily):
    """Sign rotors with a fresh auxiliary Brownian path ``b^level`` per level and per path.

    ``b^level`` for path ``j`` is path ``j`` of ``stream.child(level)``.
    """

    def __init__(self, grid: TimeGrid, stream: RngStream):
        self.grid = grid
        self.stream = stream

    def at(self, level, start=0, n_paths=None):
        if level < 1:
            raise ValueError("levels start at 1")
        aux = sample_brownian_batch(self.grid, 1, self.stream.child(level), n_paths or 1, start)
        if n_paths is None:
            aux = aux[0]
        return SignRotor(aux)


class IidPhaseFamily(RotorFamily):
    """Spectral rotors with i.i.d. phases, fresh at each level (from ``stream.child(level)``)."""

    def __init__(self, res: SpectralResolution, law: PhaseLaw, stream: RngStream):
        self.res = res
        self.law = law
        self.stream = stream

    def at(self, level, start=0, n_paths=None):
        if level < 1:
            raise ValueError("levels start at 1")
        return resolve_iid_phases(self.res, self.law, self.stream.child(level), n_paths, start)


def as_family(R) -> RotorFamily:
    if isinstance(R, RotorFamily):
        return R
    if isinstance(R, Rotor):
        return ConstantFamily(R)
    raise TypeError(f"expected a Rotor or RotorFamily, got {type(R).__name__}")
