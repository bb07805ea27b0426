"""Monte Carlo harness: Gaussianity and Levy checks, Birkhoff averages, mixing
curves, decay of ``(k, Q_n h)_H``, the Girsanov identity and two-point decay.

Every Monte Carlo routine splits its paths into fixed-size chunks (independent
of the worker count), draws path ``j`` from its own counter block and reduces
per-path values in path order, so results are bit-for-bit reproducible for any
``workers``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .chaos import wick_exponential
from .grid_paths import (
    CMVector,
    DiscretePath,
    RngStream,
    TimeGrid,
    cm_inner,
    sample_brownian_batch,
    wiener_integral,
)
from .malliavin import RotorSequence, transform
from .rotors import AdaptedMatrixRotor, SignRotor, as_family

__all__ = [
    "MomentReport",
    "gaussianity_report",
    "LevyReport",
    "levy_check",
    "ErgodicTrace",
    "birkhoff_trace",
    "MixingCurve",
    "mixing_curve",
    "wick_mixing_curve",
    "DecayCurve",
    "qn_decay",
    "GirsanovResult",
    "GirsanovReport",
    "girsanov_check",
    "Example1Curve",
    "example1_decay",
    "sign_two_point",
    "step_matrices",
    "empirical_two_point",
    "map_chunks",
    "DEFAULT_CHUNK",
]

DEFAULT_CHUNK = 8192


def map_chunks(fn: Callable[[int, int], object], n_paths: int, chunk: int = DEFAULT_CHUNK, workers: int = 1) -> list:
    """Run ``fn(start, count)`` over consecutive path chunks; results in chunk order."""
    if n_paths < 1:
        raise ValueError("n_paths must be positive")
    spans = [(s, min(chunk, n_paths - s)) for s in range(0, n_paths, chunk)]
    if workers <= 1 or len(spans) == 1:
        return [fn(s, c) for s, c in spans]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda sc: fn(*sc), spans))


def _mean_se(x, axis=0):
    x = np.asarray(x, dtype=float)
    m = x.shape[axis]
    return x.mean(axis=axis), x.std(axis=axis, ddof=1) / math.sqrt(m)


# ---------------------------------------------------------------------------
# Gaussianity


@dataclass(frozen=True)
class MomentReport:
    sample_count: int
    mean: float
    variance: float
    skewness: float
    excess_kurtosis: float
    ks_distance: float
    target_variance: float
    thresholds: dict
    passes: dict

    @property
    def passed(self) -> bool:
        return all(self.passes.values())


def gaussianity_report(
    samples,
    target_variance: float = 1.0,
    *,
    var_tol: float = 0.02,
    mean_tol: float | None = None,
    skew_tol: float = 0.05,
    kurt_tol: float = 0.1,
    ks_tol: float | None = None,
    min_samples: int = 1000,
) -> MomentReport:
    """Moments and one-sample KS distance against ``N(0, target_variance)``.

    ``mean_tol`` defaults to ``4 sqrt(target_variance / M)`` and ``ks_tol`` to
    ``1.5 * 1.36 / sqrt(M)``; ``var_tol`` is relative.
    """
    x = np.asarray(samples, dtype=float).ravel()
    m = x.size
    if m < min_samples:
        raise ValueError(f"need at least {min_samples} samples, got {m}")
    if target_variance <= 0:
        raise ValueError("target_variance must be positive")
    if mean_tol is None:
        mean_tol = 4.0 * math.sqrt(target_variance / m)
    if ks_tol is None:
        ks_tol = 1.5 * 1.36 / math.sqrt(m)
    mean = float(x.mean())
    var = float(x.var(ddof=1))
    if var > 0:
        skew = float(stats.skew(x))
        kurt = float(stats.kurtosis(x))
    else:
        skew = kurt = float("nan")
    ks = float(stats.kstest(x, "norm", args=(0.0, math.sqrt(target_variance))).statistic)
    thresholds = dict(var_tol=var_tol, mean_tol=mean_tol, skew_tol=skew_tol, kurt_tol=kurt_tol, ks_tol=ks_tol)
    passes = {
        "variance": abs(var / target_variance - 1.0) <= var_tol,
        "mean": abs(mean) < mean_tol,
        "skewness": abs(skew) < skew_tol,
        "excess_kurtosis": abs(kurt) < kurt_tol,
        "ks": ks < ks_tol,
    }
    return MomentReport(m, mean, var, skew, kurt, ks, target_variance, thresholds, passes)


# ---------------------------------------------------------------------------
# Levy characterization of the transformed increments


@dataclass(frozen=True)
class LevyReport:
    n_paths: int
    cell_variance: np.ndarray
    max_rel_variance_error: float
    max_abs_correlation: float
    rel_tol: float
    corr_band: float
    passes: dict

    @property
    def passed(self) -> bool:
        return all(self.passes.values())


def levy_check(paths, rel_tol: float = 0.03, corr_sigmas: float = 4.0, min_paths: int = 10_000) -> LevyReport:
    """Check that increments look like Brownian ones: variance ``dt`` per cell and
    coordinate, and no correlation between distinct (cell, coordinate) pairs.
    """
    if isinstance(paths, DiscretePath):
        batch = paths
    else:
        paths = list(paths)
        batch = DiscretePath(paths[0].grid, np.stack([p.increments for p in paths]))
    if len(batch.batch_shape) != 1:
        raise ValueError("expected a 1-d batch of paths")
    m = batch.batch_shape[0]
    if m < min_paths:
        raise ValueError(f"need at least {min_paths} paths, got {m}")
    dt = batch.grid.dt
    flat = batch.increments.reshape(m, -1)
    cell_var = flat.var(axis=0, ddof=1)
    rel_err = float(np.max(np.abs(cell_var / dt - 1.0)))
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = np.corrcoef(flat, rowvar=False)
    off = corr[~np.eye(corr.shape[0], dtype=bool)]
    max_corr = float(np.max(np.abs(off))) if np.all(np.isfinite(off)) else float("inf")
    band = corr_sigmas / math.sqrt(m)
    passes = {"cell_variance": rel_err <= rel_tol, "cross_correlation": max_corr < band}
    return LevyReport(m, cell_var.reshape(batch.grid.n_steps, batch.dim), rel_err, max_corr, rel_tol, band, passes)


# ---------------------------------------------------------------------------
# Birkhoff averages


@dataclass(frozen=True)
class ErgodicTrace:
    """Partial averages ``A_n = (1/n) sum_{i<=n} F(T^i w)`` per starting path."""

    partial_averages: np.ndarray  # (paths, n_iter)

    @property
    def final(self) -> np.ndarray:
        return self.partial_averages[:, -1]

    @property
    def mean(self) -> float:
        return float(self.final.mean())

    @property
    def dispersion(self) -> float:
        """Cross-path standard deviation of ``A_N``."""
        return float(self.final.std(ddof=1)) if self.final.size > 1 else 0.0

    @property
    def standard_error(self) -> float:
        return self.dispersion / math.sqrt(self.final.size)


def birkhoff_trace(F: Callable, family, w0: DiscretePath, n_iter: int, start: int = 0) -> ErgodicTrace:
    """Iterate ``T`` from each starting path in the batch ``w0`` and average ``F`` along the orbit.

    ``start`` is the path index of the first row of ``w0`` (selects per-path
    auxiliary randomness of the family).
    """
    if n_iter < 1:
        raise ValueError("n_iter must be positive")
    fam = as_family(family)
    w = w0
    n_paths = w0.batch_shape[0] if w0.batch_shape else None
    acc = np.zeros(w0.batch_shape or (1,))
    partial = np.empty(acc.shape + (n_iter,))
    for level in range(1, n_iter + 1):
        w = transform(fam.at(level, start, n_paths), w)
        val = np.asarray(F(w), dtype=float)
        if not np.all(np.isfinite(val)):
            raise FloatingPointError(f"F returned a non-finite value at iteration {level}")
        acc = acc + val
        partial[..., level - 1] = acc / level
    return ErgodicTrace(partial)


# ---------------------------------------------------------------------------
# mixing


@dataclass(frozen=True)
class MixingCurve:
    """``E[F * G(T^n w)]`` for ``n = 0..n_max`` with standard errors.

    ``product_of_means`` is the MC estimate of ``E[F] E[G]``.  When a
    per-path reference is supplied, ``reference`` holds its mean and
    ``diff_stderr`` the standard error of the paired difference.
    """

    n: np.ndarray
    estimate: np.ndarray
    stderr: np.ndarray
    product_of_means: float
    reference: np.ndarray | None = None
    diff_stderr: np.ndarray | None = None

    def rows(self):
        header = ["n", "estimate", "stderr", "product_of_means"]
        if self.reference is not None:
            header += ["reference", "diff_stderr"]
        out = []
        for j, n in enumerate(self.n):
            row = [int(n), self.estimate[j], self.stderr[j], self.product_of_means]
            if self.reference is not None:
                row += [self.reference[j], self.diff_stderr[j]]
            out.append(row)
        return header, out


def mixing_curve(
    F: Callable,
    G: Callable,
    family,
    n_max: int,
    n_paths: int,
    stream: RngStream,
    grid: TimeGrid,
    dim: int = 1,
    *,
    reference: Callable | None = None,
    chunk: int = DEFAULT_CHUNK,
    workers: int = 1,
    min_paths: int = 100,
) -> MixingCurve:
    """MC curve of ``E[F G o T^n]``.

    ``reference(seq, w)``, if given, returns per-path reference values of
    shape ``(paths, n_max + 1)`` computed from the rotor sequence.
    """
    if n_paths < min_paths:
        raise ValueError(f"need at least {min_paths} paths, got {n_paths}")
    fam = as_family(family)

    def run(start, count):
        w = sample_brownian_batch(grid, dim, stream, count, start)
        seq = RotorSequence(fam, w, n_max, start)
        f = np.asarray(F(w), dtype=float)
        g = np.stack([np.asarray(G(p), dtype=float) for p in seq.orbit], axis=-1)
        ref = reference(seq, w) if reference is not None else None
        return f, g, f[:, None] * g, ref

    parts = map_chunks(run, n_paths, chunk, workers)
    f = np.concatenate([p[0] for p in parts])
    g = np.concatenate([p[1] for p in parts])
    prod = np.concatenate([p[2] for p in parts])
    est, se = _mean_se(prod)
    pom = float(f.mean() * g[:, 0].mean())
    ref = diff_se = None
    if reference is not None:
        r = np.concatenate([p[3] for p in parts])
        ref = r.mean(axis=0)
        diff_se = _mean_se(prod - r)[1]
    return MixingCurve(np.arange(n_max + 1), est, se, pom, ref, diff_se)


def wick_mixing_curve(h: CMVector, k: CMVector, family, n_max: int, n_paths: int, stream: RngStream, **kw) -> MixingCurve:
    """Mixing curve for ``F = rho(delta k)``, ``G = rho(delta h)``, with the per-path
    reference ``exp((k, Q_n h)_H)`` (the conditional value of ``rho rho``).
    """

    def reference(seq, w):
        vals = [cm_inner(k, h)] + [cm_inner(v, h) for v in seq.Q_adjoint_iter(k)]
        return np.exp(np.stack([np.broadcast_to(v, w.batch_shape) for v in vals], axis=-1))

    return mixing_curve(
        lambda w: wick_exponential(k, w),
        lambda w: wick_exponential(h, w),
        family, n_max, n_paths, stream, h.grid, h.dim, reference=reference, **kw,
    )


# ---------------------------------------------------------------------------
# decay of (k, Q_n h)


@dataclass(frozen=True)
class DecayCurve:
    """Statistics of ``(Q_n h, k)_H`` for ``n = 1..n_max``."""

    n: np.ndarray
    mean: np.ndarray
    second_moment: np.ndarray
    second_moment_stderr: np.ndarray
    exceedance: np.ndarray
    eps: float
    bound: float
    max_abs: float
    samples: np.ndarray = field(repr=False)

    @property
    def cauchy_schwarz_ok(self) -> bool:
        return self.max_abs <= self.bound + 1e-10

    @property
    def monotone_decay(self) -> bool:
        """Second moments strictly decreasing in ``n``."""
        return bool(np.all(np.diff(self.second_moment) < 0))

    @property
    def converges_in_probability(self) -> bool:
        """Exceedance below 0.05 at ``n_max`` with a nonincreasing trend over the last half."""
        half = self.exceedance[len(self.exceedance) // 2 :]
        trend = np.polyfit(np.arange(half.size), half, 1)[0] if half.size > 1 else 0.0
        return bool(self.exceedance[-1] < 0.05 and trend <= 0)


def qn_decay(
    family,
    h: CMVector,
    k: CMVector,
    n_max: int,
    n_paths: int,
    stream: RngStream,
    eps: float | None = None,
    *,
    chunk: int = DEFAULT_CHUNK,
    workers: int = 1,
    min_paths: int = 100,
) -> DecayCurve:
    """Distribution summary of ``(k, Q_n h)_H``; ``eps`` defaults to ``0.1 |h| |k|``."""
    hn, kn = float(h.norm()), float(k.norm())
    if hn == 0 or kn == 0:
        raise ValueError("h and k must be nonzero")
    if n_paths < min_paths:
        raise ValueError(f"need at least {min_paths} paths, got {n_paths}")
    if eps is None:
        eps = 0.1 * hn * kn
    fam = as_family(family)

    def run(start, count):
        w = sample_brownian_batch(h.grid, h.dim, stream, count, start)
        seq = RotorSequence(fam, w, n_max, start)
        return np.stack([np.broadcast_to(cm_inner(v, h), w.batch_shape) for v in seq.Q_adjoint_iter(k)], axis=-1)

    vals = np.concatenate(map_chunks(run, n_paths, chunk, workers))
    sq = vals**2
    sm, sm_se = _mean_se(sq)
    return DecayCurve(
        n=np.arange(1, n_max + 1),
        mean=vals.mean(axis=0),
        second_moment=sm,
        second_moment_stderr=sm_se,
        exceedance=(np.abs(vals) > eps).mean(axis=0),
        eps=eps,
        bound=hn * kn,
        max_abs=float(np.max(np.abs(vals))),
        samples=vals,
    )


# ---------------------------------------------------------------------------
# Girsanov identity


@dataclass(frozen=True)
class GirsanovResult:
    """One test functional ``F = cos(delta k)``.

    ``gap`` pairs the weighted estimate with the plain estimate on the same
    paths; ``gap_exact`` compares with ``E cos(delta k) = exp(-|k|^2 / 2)``.
    """

    lhs: float
    lhs_stderr: float
    rhs_mc: float
    rhs_exact: float
    gap: float
    gap_stderr: float
    gap_exact: float

    def within(self, sigmas: float = 4.0) -> bool:
        ok_pair = abs(self.gap) <= sigmas * self.gap_stderr or self.gap == 0.0
        ok_exact = abs(self.gap_exact) <= sigmas * self.lhs_stderr
        return ok_pair and ok_exact


@dataclass(frozen=True)
class GirsanovReport:
    results: list
    n_paths: int
    clamped: int
    sigmas: float = 4.0

    @property
    def passed(self) -> bool:
        return all(r.within(self.sigmas) for r in self.results)


def girsanov_check(
    family,
    h: CMVector,
    n_paths: int,
    stream: RngStream,
    test_vectors: Sequence[CMVector] | None = None,
    level: int = 1,
    *,
    chunk: int = DEFAULT_CHUNK,
    workers: int = 1,
    sigmas: float = 4.0,
) -> GirsanovReport:
    """Estimate ``E[F(w + Q_n(w) h) exp(-delta(Q_n h) - |h|^2 / 2)]`` against ``E[F]``.

    ``F`` runs over ``cos(delta k)`` for ``k`` in ``test_vectors``.  The
    exponent is capped at 700 and capped samples are counted.
    """
    grid, dim = h.grid, h.dim
    if test_vectors is None:
        ramp = np.linspace(-1.0, 1.0, grid.n_steps)[:, None] * np.ones((1, dim))
        test_vectors = [h, CMVector(grid, np.where(grid.times[:-1, None] < 0.5, 1.0, 0.0) * np.ones((1, dim))), CMVector(grid, ramp)]
    fam = as_family(family)
    h2 = float(cm_inner(h, h))

    def run(start, count):
        w = sample_brownian_batch(grid, dim, stream, count, start)
        seq = RotorSequence(fam, w, level, start)
        qh = seq.Q(level, h)
        expo = -wiener_integral(qh, w) - 0.5 * h2
        clamped = int(np.count_nonzero(expo > 700.0))
        weight = np.exp(np.minimum(expo, 700.0))
        shifted = w.shift(qh)
        lhs = np.stack([np.cos(wiener_integral(k, shifted)) * weight for k in test_vectors], -1)
        rhs = np.stack([np.cos(wiener_integral(k, w)) for k in test_vectors], -1)
        return lhs, rhs, clamped

    parts = map_chunks(run, n_paths, chunk, workers)
    lhs = np.concatenate([p[0] for p in parts])
    rhs = np.concatenate([p[1] for p in parts])
    clamped = sum(p[2] for p in parts)
    lm, lse = _mean_se(lhs)
    rm, _ = _mean_se(rhs)
    dm, dse = _mean_se(lhs - rhs)
    results = []
    for j, k in enumerate(test_vectors):
        exact = math.exp(-0.5 * float(cm_inner(k, k)))
        results.append(GirsanovResult(float(lm[j]), float(lse[j]), float(rm[j]), exact, float(dm[j]), float(dse[j]), float(lm[j] - exact)))
    return GirsanovReport(results, n_paths, clamped, sigmas)


# ---------------------------------------------------------------------------
# two-point function decay


@dataclass(frozen=True)
class Example1Curve:
    """``(A_{s,t}^n x, y)`` for ``n = 0..n_max`` on a list of ``(s, t)`` pairs."""

    pairs: np.ndarray
    values: np.ndarray  # (pairs, n_max + 1)
    spectral_radius: np.ndarray
    decay_tol: float

    @property
    def violating(self) -> np.ndarray:
        """Pairs whose last value is not below ``decay_tol * |x||y|`` (scaled in ``values``)."""
        return np.abs(self.values[:, -1]) > self.decay_tol

    @property
    def all_decay(self) -> bool:
        return not np.any(self.violating)


def example1_decay(A: Callable, x, y, n_max: int, pairs, decay_tol: float = 1e-2) -> Example1Curve:
    """Powers of the two-point matrices ``A(s, t)`` tested against ``x, y``.

    Values are normalized by ``|x| |y|``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    scale = float(np.linalg.norm(x) * np.linalg.norm(y)) or 1.0
    pairs = np.asarray(pairs, dtype=float).reshape(-1, 2)
    values = np.empty((len(pairs), n_max + 1))
    radius = np.empty(len(pairs))
    for p, (s, t) in enumerate(pairs):
        M = np.atleast_2d(np.asarray(A(s, t), dtype=float))
        if M.shape != (x.size, x.size):
            raise ValueError(f"A({s}, {t}) has shape {M.shape}, expected {(x.size, x.size)}")
        if not np.all(np.isfinite(M)):
            raise FloatingPointError(f"A({s}, {t}) has non-finite entries")
        radius[p] = float(np.max(np.abs(np.linalg.eigvals(M))))
        v = x.copy()
        for n in range(n_max + 1):
            if not np.all(np.isfinite(v)):
                raise FloatingPointError(f"non-finite power at pair {(s, t)}, n={n}")
            values[p, n] = (v @ y) / scale
            with np.errstate(over="ignore", invalid="ignore"):
                v = M @ v
    return Example1Curve(pairs, values, radius, decay_tol)


def sign_two_point(s: float, t: float) -> np.ndarray:
    """``E[sign(b_s) sign(b_t)]`` for a Brownian ``b`` as a ``1 x 1`` matrix.

    Uses the arcsine law ``(2/pi) arcsin sqrt(min/max)``; at ``s = 0`` the
    left-endpoint convention ``sign(0) = +1`` gives ``E sign(b_t) = 0``.
    """
    lo, hi = min(s, t), max(s, t)
    if lo == hi:
        return np.ones((1, 1))
    if lo <= 0.0:
        return np.zeros((1, 1))
    return np.array([[2.0 / np.pi * np.arcsin(np.sqrt(lo / hi))]])


def step_matrices(R, w: DiscretePath) -> np.ndarray:
    """Per-step matrices ``(..., n, d, d)`` of a sign or adapted-matrix rotor."""
    if isinstance(R, SignRotor):
        signs = np.broadcast_to(R.signs, w.batch_shape + R.signs.shape[-2:])
        return signs[..., None] * np.eye(w.dim)
    if isinstance(R, AdaptedMatrixRotor):
        return R.matrices(w)
    raise TypeError(f"no step matrices for {type(R).__name__}")


def empirical_two_point(mats: np.ndarray, i: int, j: int) -> np.ndarray:
    """Sample mean of ``R_{s_i} (x) R_{s_j}`` over the leading batch axis."""
    a, b = mats[:, i], mats[:, j]
    d = a.shape[-1]
    kron = np.einsum("mab,mcd->macbd", a, b).reshape(len(a), d * d, d * d)
    return kron.mean(axis=0)
