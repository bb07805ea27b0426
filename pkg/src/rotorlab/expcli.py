"""Scenario runner and ``rotorlab`` command line.

Configuration files are plain ``key=value`` lines with ``#`` comments.  Each
scenario writes ``tests.csv``, scenario-specific curves and ``summary.txt``
(one ``TEST <name> PASS|FAIL value=<v> band=<lo,hi>`` line per test) into the
output directory.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import chaos, ergostat
from .grid_paths import (
    CMVector,
    RngStream,
    TimeGrid,
    cm_inner,
    indicator_vector,
    sample_brownian_batch,
    wiener_integral,
)
from .malliavin import FDConfig, iterate_T, skorohod, transform
from .rotors import (
    ConstantFamily,
    IidPhaseFamily,
    PhaseLaw,
    SignFamily,
    SpectralResolution,
    SpectralRotor,
    AdaptedMatrixRotor,
    state_rotation_rotor,
)

__all__ = [
    "ScenarioConfig",
    "TestResult",
    "RunReport",
    "ConfigError",
    "SCENARIOS",
    "parse_config",
    "serialize_config",
    "run_scenario",
    "emit_csv",
    "main",
]


class ConfigError(ValueError):
    """Invalid configuration text; the message names the line and key."""


# scenario -> overrides of the generic defaults
SCENARIOS = {
    "gauss_law": dict(n_steps=256, paths=100_000, rotor="sign"),
    "levy": dict(n_steps=8, dim=2, paths=10_000, rotor="adapted"),
    "ergodic_dichotomy": dict(n_steps=128, paths=50, n_iter=10_000, phase_law="uniform"),
    "necessary_conditions": dict(n_steps=64, paths=2_000, n_iter=200),
    "mixing_sign": dict(n_steps=256, paths=100_000, n_max=10, rotor="sign"),
    "girsanov": dict(n_steps=128, paths=100_000),
    "example1": dict(n_steps=32, paths=100_000, n_max=40),
    "divergence_identities": dict(n_steps=32, paths=1_000),
}

ROTORS = ("sign", "adapted", "identity", "spectral", "iid_phase")
PHASE_LAWS = ("uniform", "constant", "two_point")


@dataclass
class ScenarioConfig:
    scenario: str
    seed: int
    n_steps: int = 256
    dim: int = 1
    paths: int = 100_000
    n_iter: int = 10_000
    n_max: int = 10
    rotor: str = "sign"
    phase_law: str = "uniform"
    phase_value: float = 1.0
    var_tol: float = 0.02
    mean_tol: float = 0.013
    skew_tol: float = 0.05
    kurt_tol: float = 0.1
    ks_factor: float = 1.5
    sigmas: float = 4.0
    rel_tol: float = 0.03
    atom_threshold: float = 0.05
    dispersion_tol: float = 0.02
    out: str = "rotorlab_out"
    workers: int = 1
    chunk: int = ergostat.DEFAULT_CHUNK

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; known: {', '.join(SCENARIOS)}")
        for name in ("n_steps", "dim", "paths", "n_iter", "n_max", "workers", "chunk"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.n_steps < 2:
            raise ConfigError(f"n_steps must be >= 2, got {self.n_steps}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be a 64-bit nonnegative integer, got {self.seed}")
        for name in ("var_tol", "mean_tol", "skew_tol", "kurt_tol", "ks_factor", "sigmas", "rel_tol", "atom_threshold", "dispersion_tol"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.rotor not in ROTORS:
            raise ConfigError(f"rotor must be one of {ROTORS}, got {self.rotor!r}")
        if self.phase_law not in PHASE_LAWS:
            raise ConfigError(f"phase_law must be one of {PHASE_LAWS}, got {self.phase_law!r}")


_FIELDS = {f.name: f for f in fields(ScenarioConfig)}
_TYPES = {"int": int, "float": float, "str": str}


def _convert(name, raw, lineno):
    kind = _TYPES[_FIELDS[name].type]
    try:
        if kind is int:
            return int(raw, 0)
        return kind(raw)
    except ValueError:
        raise ConfigError(f"line {lineno}: {name}: cannot parse {raw!r} as {kind.__name__}") from None


def parse_config(text: str, overrides: dict | None = None) -> ScenarioConfig:
    """Parse ``key=value`` text; scenario defaults fill missing keys.

    ``overrides`` (e.g. from command-line flags) replace values of the same key.
    """
    values, where = {}, {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r} (first set on line {where[key]})")
        values[key] = _convert(key, raw, lineno)
        where[key] = lineno
    for key, val in (overrides or {}).items():
        if val is not None:
            values[key] = val
            where[key] = "command line"
    for key in ("scenario", "seed"):
        if key not in values:
            raise ConfigError(f"missing required key {key!r}")
    merged = dict(SCENARIOS.get(values["scenario"], {}))
    if values["scenario"] == "gauss_law" and values.get("rotor") == "adapted":
        merged["dim"] = 2
    merged.update(values)
    try:
        return ScenarioConfig(**merged)
    except ConfigError as exc:
        bad = next((k for k in where if k in str(exc)), None)
        loc = f"line {where[bad]}: " if isinstance(where.get(bad), int) else ""
        raise ConfigError(f"{loc}{exc}") from None


def serialize_config(cfg: ScenarioConfig) -> str:
    lines = []
    for f in fields(cfg):
        val = getattr(cfg, f.name)
        lines.append(f"{f.name}={repr(val) if isinstance(val, float) else val}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# reports


@dataclass(frozen=True)
class TestResult:
    name: str
    passed: bool
    value: float
    lo: float
    hi: float

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"TEST {self.name} {status} value={_fmt(self.value)} band={_fmt(self.lo)},{_fmt(self.hi)}"


@dataclass
class RunReport:
    config: ScenarioConfig
    tests: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    artifacts: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(t.passed for t in self.tests)

    def summary(self) -> str:
        lines = [f"# scenario {self.config.scenario} seed {self.config.seed}"]
        lines += [t.line() for t in self.tests]
        lines += [f"# wall_clock_seconds {name} {sec:.2f}" for name, sec in self.timings.items()]
        lines.append(f"OVERALL {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def emit_csv(obj, path) -> Path:
    """Write ``obj`` (anything with ``rows() -> (header, rows)``, or a ``(header, rows)``
    pair) as CSV with LF line endings and 17 significant digits."""
    header, rows = obj.rows() if hasattr(obj, "rows") else obj
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def _tests_table(tests):
    return ["name", "pass", "value", "lo", "hi"], [[t.name, int(t.passed), t.value, t.lo, t.hi] for t in tests]


def _band_test(name, value, lo, hi):
    return TestResult(name, bool(lo <= value <= hi), float(value), float(lo), float(hi))


# ---------------------------------------------------------------------------
# scenarios


def _adapted_rotor():
    return state_rotation_rotor(lambda st: np.pi * st[..., 0] + st[..., 1] ** 2)


def _unit_vector(grid, dim):
    if dim == 1:
        return CMVector.constant(grid, 1)
    s = grid.times[:-1]
    den = np.zeros((grid.n_steps, dim))
    den[:, 0], den[:, 1] = np.cos(2 * np.pi * s), np.sin(2 * np.pi * s)
    return CMVector(grid, den / math.sqrt(float(np.sum(den**2)) * grid.dt))


def _gauss_samples(cfg, rotor_kind, grid, dim, paths, stream, aux):
    h = _unit_vector(grid, dim)
    if rotor_kind == "sign":
        fam = SignFamily(grid, aux)
    elif rotor_kind == "adapted":
        fam = ConstantFamily(_adapted_rotor())
    elif rotor_kind == "identity":
        from .rotors import IdentityRotor

        fam = ConstantFamily(IdentityRotor())
    else:
        raise ConfigError(f"gauss_law does not support rotor {rotor_kind!r}")

    def run(start, count):
        w = sample_brownian_batch(grid, dim, stream, count, start)
        R = fam.at(1, start, count)
        return wiener_integral(R.apply(w, h), w)

    return np.concatenate(ergostat.map_chunks(run, paths, cfg.chunk, cfg.workers))


def _scenario_gauss_law(cfg, out):
    grid = TimeGrid(cfg.n_steps)
    if cfg.rotor == "adapted" and cfg.dim != 2:
        raise ConfigError("the adapted rotor of gauss_law is 2-dimensional (dim=2)")
    x = _gauss_samples(cfg, cfg.rotor, grid, cfg.dim, cfg.paths, RngStream(cfg.seed, 0), RngStream(cfg.seed, 1000))
    rep = ergostat.gaussianity_report(
        x, 1.0, var_tol=cfg.var_tol, mean_tol=cfg.mean_tol, skew_tol=cfg.skew_tol,
        kurt_tol=cfg.kurt_tol, ks_tol=cfg.ks_factor * 1.36 / math.sqrt(x.size),
    )
    t = rep.thresholds
    tests = [
        _band_test("variance", rep.variance, 1 - t["var_tol"], 1 + t["var_tol"]),
        TestResult("mean", rep.passes["mean"], rep.mean, -t["mean_tol"], t["mean_tol"]),
        TestResult("skewness", rep.passes["skewness"], rep.skewness, -t["skew_tol"], t["skew_tol"]),
        TestResult("excess_kurtosis", rep.passes["excess_kurtosis"], rep.excess_kurtosis, -t["kurt_tol"], t["kurt_tol"]),
        TestResult("ks_distance", rep.passes["ks"], rep.ks_distance, 0.0, t["ks_tol"]),
    ]
    edges = np.linspace(-5, 5, 41)
    counts, _ = np.histogram(x, edges)
    from scipy.stats import norm

    expected = np.diff(norm.cdf(edges)) * x.size
    hist = (["left", "right", "count", "expected"], [[a, b, int(c), e] for a, b, c, e in zip(edges[:-1], edges[1:], counts, expected)])
    return tests, {"histogram.csv": hist}


def _scenario_levy(cfg, out):
    grid = TimeGrid(cfg.n_steps)
    w = sample_brownian_batch(grid, cfg.dim, RngStream(cfg.seed, 0), cfg.paths)
    if cfg.rotor == "adapted":
        if cfg.dim != 2:
            raise ConfigError("levy with the adapted rotor needs dim=2")
        R = _adapted_rotor()
    elif cfg.rotor == "sign":
        R = SignFamily(grid, RngStream(cfg.seed, 1000)).at(1, 0, cfg.paths)
    else:
        raise ConfigError(f"levy does not support rotor {cfg.rotor!r}")
    Tw = transform(R, w)
    rep = ergostat.levy_check(Tw, rel_tol=cfg.rel_tol, corr_sigmas=cfg.sigmas)
    tests = [
        TestResult("cell_variance", rep.passes["cell_variance"], rep.max_rel_variance_error, 0.0, rep.rel_tol),
        TestResult("cross_correlation", rep.passes["cross_correlation"], rep.max_abs_correlation, 0.0, rep.corr_band),
    ]
    rows = [[i, c, rep.cell_variance[i, c], rep.cell_variance[i, c] / grid.dt - 1.0]
            for i in range(grid.n_steps) for c in range(cfg.dim)]
    return tests, {"cell_variance.csv": (["cell", "coord", "variance", "rel_error"], rows)}


def _verdict_test(name, verdict, expected):
    """Value 1 when the verdict is the expected one."""
    ok = verdict.verdict == expected
    return TestResult(name, ok, float(ok), 1.0, 1.0)


def _equal_spread(res):
    x = res.basis[:, res.offsets[:-1]].sum(axis=1) / math.sqrt(res.n_blocks)
    return CMVector.from_coords(res.grid, res.dim, x)


def _law(cfg):
    if cfg.phase_law == "uniform":
        return PhaseLaw.uniform()
    if cfg.phase_law == "constant":
        return PhaseLaw.constant(cfg.phase_value)
    return PhaseLaw.two_point(0.0, cfg.phase_value)


def _checkpoints(n):
    pts = sorted({int(round(v)) for v in np.logspace(0, math.log10(n), 25)} | {n})
    return [p for p in pts if 1 <= p <= n]


def _scenario_ergodic_dichotomy(cfg, out):
    grid = TimeGrid(cfg.n_steps)
    res = SpectralResolution.random_planar(grid, cfg.dim, RngStream(cfg.seed, 900))
    h = _equal_spread(res)
    atom_res = SpectralResolution.with_atom(h, RngStream(cfg.seed, 901))
    F = lambda w: np.cos(wiener_integral(h, w))  # noqa: E731
    w0 = sample_brownian_batch(grid, cfg.dim, RngStream(cfg.seed, 0), cfg.paths)
    aux = RngStream(cfg.seed, 1000)
    regimes = {
        "ergodic": (res, _law(cfg)),
        "constant_phase": (res, PhaseLaw.constant(cfg.phase_value)),
        "single_atom": (atom_res, _law(cfg)),
    }
    traces, verdicts = {}, {}
    for name, (r, law) in regimes.items():
        traces[name] = ergostat.birkhoff_trace(F, IidPhaseFamily(r, law, aux), w0, cfg.n_iter)
        verdicts[name] = chaos.spectral_ergodicity_check(r, law, atom_threshold=cfg.atom_threshold, h=h)
    target = math.exp(-0.5)
    erg = traces["ergodic"]
    tests = [
        _band_test("ergodic_mean", erg.mean, target - cfg.dispersion_tol, target + cfg.dispersion_tol),
        _band_test("ergodic_dispersion", erg.dispersion, 0.0, cfg.dispersion_tol),
    ]
    for name in ("constant_phase", "single_atom"):
        ratio = traces[name].dispersion / erg.dispersion
        tests.append(_band_test(f"{name}_dispersion_ratio", ratio, 5.0, math.inf))
    expected = {"ergodic": "ergodic", "constant_phase": "non_ergodic", "single_atom": "non_ergodic"}
    for name, v in verdicts.items():
        tests.append(_verdict_test(f"verdict_{name}", v, expected[name]))
    rows = []
    for name, tr in traces.items():
        for n in _checkpoints(cfg.n_iter):
            col = tr.partial_averages[:, n - 1]
            rows.append([name, n, col.mean(), col.std(ddof=1) if col.size > 1 else 0.0])
    return tests, {"birkhoff.csv": (["regime", "n", "mean", "dispersion"], rows)}


def _scenario_necessary_conditions(cfg, out):
    grid = TimeGrid(cfg.n_steps)
    dim = 1
    paths = sample_brownian_batch(grid, dim, RngStream(cfg.seed, 0), cfg.paths)
    aux = RngStream(cfg.seed, 1000)
    res = SpectralResolution.random_planar(grid, dim, RngStream(cfg.seed, 900))
    h = _equal_spread(res)
    tests, rows = [], []

    # (a) an atom: the block through h turns by a random angle in {0, pi}
    atom_res = SpectralResolution.with_atom(h, RngStream(cfg.seed, 901))
    fam = IidPhaseFamily(atom_res, PhaseLaw.two_point(0.0, math.pi), aux)
    # (a') atom with a path-dependent adapted phase: sigma_i = sign(W(s_i)) on the indicator blocks
    j = grid.n_steps // 2
    cell = indicator_vector(grid, dim, j * grid.dt, (j + 1) * grid.dt) / math.sqrt(grid.dt)
    sign_state = AdaptedMatrixRotor(
        lambda i, prefix: np.where(prefix.sum(axis=-2) >= 0, 1.0, -1.0)[..., None],
        1,
        matrices=lambda inc: np.where(
            np.concatenate([np.zeros(inc.shape[:-2] + (1, 1)), np.cumsum(inc, axis=-2)[..., :-1, :]], axis=-2) >= 0, 1.0, -1.0
        )[..., None],
    )
    # (b) constant phase pi on every block: delta h o T = -delta h
    fam_b = IidPhaseFamily(res, PhaseLaw.constant(math.pi), aux)
    cases = {"atom_two_point": (fam, h), "atom_adapted_sign": (ConstantFamily(sign_state), cell), "constant_phase_pi": (fam_b, h)}
    n = min(cfg.n_iter, 50)
    for name, (family, vec) in cases.items():
        orbit = iterate_T(family, paths, n)
        base = np.abs(wiener_integral(vec, paths))
        err = max(float(np.max(np.abs(np.abs(wiener_integral(vec, p)) - base))) for p in orbit)
        tests.append(_band_test(f"invariant_abs_delta_h_{name}", err, 0.0, 1e-10))
        rows.append([name, err])
    # ergodic comparison: |delta h| is not invariant under uniform phases
    orbit = iterate_T(IidPhaseFamily(res, PhaseLaw.uniform(), aux), paths, 1)
    corr = float(np.corrcoef(np.abs(wiener_integral(h, paths)), np.abs(wiener_integral(h, orbit[0])))[0, 1])
    tests.append(_band_test("uniform_phase_breaks_invariant", corr, -1.0, 0.9))
    rows.append(["uniform_phase_corr", corr])
    v_atom = chaos.spectral_ergodicity_check(atom_res, PhaseLaw.two_point(0.0, math.pi), atom_threshold=cfg.atom_threshold, h=h)
    v_const = chaos.spectral_ergodicity_check(res, PhaseLaw.constant(math.pi), atom_threshold=cfg.atom_threshold)
    tests.append(_verdict_test("verdict_atom", v_atom, "non_ergodic"))
    tests.append(_verdict_test("verdict_constant_phase", v_const, "non_ergodic"))
    return tests, {"invariants.csv": (["case", "value"], rows)}


def _scenario_mixing_sign(cfg, out):
    grid = TimeGrid(cfg.n_steps)
    h = CMVector.constant(grid, 1)
    fam = SignFamily(grid, RngStream(cfg.seed, 1000))
    stream = RngStream(cfg.seed, 0)
    kw = dict(chunk=cfg.chunk, workers=cfg.workers)
    decay = ergostat.qn_decay(fam, h, h, cfg.n_max, cfg.paths, stream, **kw)
    curve = ergostat.wick_mixing_curve(h, h, fam, cfg.n_max, cfg.paths, stream, **kw)
    tests = [
        _band_test("second_moment_n1", decay.second_moment[0], 0.49, 0.51),
        TestResult("second_moment_strictly_decreasing", decay.monotone_decay,
                   float(np.max(np.diff(decay.second_moment))), -math.inf, 0.0),
        TestResult("cauchy_schwarz", decay.cauchy_schwarz_ok, decay.max_abs, 0.0, decay.bound),
    ]
    band = cfg.sigmas * curve.stderr[-1]
    tests.append(_band_test(f"wick_mixing_n{cfg.n_max}", curve.estimate[-1], 1 - band, 1 + band))
    dev = np.abs(curve.estimate - curve.reference) / curve.diff_stderr
    tests.append(_band_test("wick_matches_reference_all_n", float(np.max(dev)), 0.0, cfg.sigmas))
    drows = [[int(n), decay.mean[i], decay.second_moment[i], decay.second_moment_stderr[i], decay.exceedance[i]]
             for i, n in enumerate(decay.n)]
    return tests, {
        "decay.csv": (["n", "mean", "second_moment", "second_moment_stderr", "exceedance"], drows),
        "mixing.csv": curve,
    }


def _scenario_girsanov(cfg, out):
    grid = TimeGrid(cfg.n_steps)
    h = CMVector.constant(grid, 1)
    stream = RngStream(cfg.seed, 0)
    res = SpectralResolution.random_planar(grid, 1, RngStream(cfg.seed, 900))
    families = {
        "spectral": ConstantFamily(SpectralRotor(res)),
        "sign": SignFamily(grid, RngStream(cfg.seed, 1000)),
    }
    tests, rows = [], []
    for name, fam in families.items():
        rep = ergostat.girsanov_check(fam, h, cfg.paths, stream, chunk=cfg.chunk, workers=cfg.workers, sigmas=cfg.sigmas)
        for j, r in enumerate(rep.results):
            band = cfg.sigmas * r.gap_stderr
            tests.append(TestResult(f"{name}_k{j}_paired_gap", abs(r.gap) <= band, r.gap, -band, band))
            band_e = cfg.sigmas * r.lhs_stderr
            tests.append(TestResult(f"{name}_k{j}_exact_gap", abs(r.gap_exact) <= band_e, r.gap_exact, -band_e, band_e))
            rows.append([name, j, r.lhs, r.lhs_stderr, r.rhs_mc, r.rhs_exact, r.gap, r.gap_stderr, r.gap_exact])
        tests.append(_band_test(f"{name}_clamped_samples", rep.clamped, 0, 0))
    header = ["rotor", "k", "lhs", "lhs_stderr", "rhs_mc", "rhs_exact", "gap", "gap_stderr", "gap_exact"]
    return tests, {"girsanov.csv": (header, rows)}


def _scenario_example1(cfg, out):
    grid = TimeGrid(cfg.n_steps)
    idx = np.arange(1, grid.n_steps, max(1, grid.n_steps // 8))
    times = grid.times[idx]
    pairs = [(s, t) for s in times for t in times if s < t]
    x = y = np.ones(1)
    curve = ergostat.example1_decay(ergostat.sign_two_point, x, y, cfg.n_max, pairs, decay_tol=1e-2)
    tests = [
        TestResult("all_pairs_decay", curve.all_decay, float(np.max(np.abs(curve.values[:, -1]))), 0.0, 1e-2),
        _band_test("max_spectral_radius", float(np.max(curve.spectral_radius)), 0.0, 1.0 - 1e-12),
    ]
    # the closed-form two-point function against Monte Carlo sign products
    sign_rotor = SignFamily(grid, RngStream(cfg.seed, 1000)).at(1, 0, cfg.paths)
    w = sample_brownian_batch(grid, 1, RngStream(cfg.seed, 0), cfg.paths)
    mats = ergostat.step_matrices(sign_rotor, w)
    worst = 0.0
    for i in idx:
        for j in idx:
            if i < j:
                prod = mats[:, i, 0, 0] * mats[:, j, 0, 0]
                se = prod.std(ddof=1) / math.sqrt(prod.size)
                exact = ergostat.sign_two_point(grid.times[i], grid.times[j])[0, 0]
                worst = max(worst, abs(prod.mean() - exact) / se)
    tests.append(_band_test("two_point_mc_vs_arcsine", worst, 0.0, cfg.sigmas))
    rows = [[s, t, n, curve.values[p, n]] for p, (s, t) in enumerate(curve.pairs) for n in range(cfg.n_max + 1)]
    return tests, {"example1.csv": (["s", "t", "n", "value"], rows)}


def _scenario_divergence_identities(cfg, out):
    grid = TimeGrid(cfg.n_steps)
    fd = FDConfig()
    tests, rows = [], []
    m = cfg.paths
    # delta(h) o T = delta(R h), path by path
    for name, dim in (("sign", 1), ("adapted", 2)):
        w = sample_brownian_batch(grid, dim, RngStream(cfg.seed, 0), m)
        hs = CMVector(grid, sample_brownian_batch(grid, dim, RngStream(cfg.seed, 5), m).increments / math.sqrt(grid.dt))
        R = SignFamily(grid, RngStream(cfg.seed, 1000)).at(1, 0, m) if name == "sign" else _adapted_rotor()
        Tw = transform(R, w)
        err = float(np.max(np.abs(wiener_integral(hs, Tw) - wiener_integral(R.apply(w, hs), w))))
        tests.append(_band_test(f"rotation_identity_{name}", err, 0.0, 1e-10))
        rows.append([f"rotation_identity_{name}", err])

    n_fd = min(m, 100)
    w = sample_brownian_batch(grid, 2, RngStream(cfg.seed, 0), n_fd)
    R = _adapted_rotor()
    hv = _unit_vector(grid, 2)
    # divergence expansion: sum_i delta(phi_i) (R^* phi_i, h) = delta(R h)
    errA = 0.0
    for p in range(n_fd):
        wp = w[p]
        M = R.matrix(wp)
        lhs = float(wp.xi() @ (M @ hv.coords()))
        rhs = float(skorohod(lambda v: R.apply(v, hv), wp, None, fd))
        errA = max(errA, abs(lhs - rhs))
    tests.append(_band_test("divergence_expansion", errA, 0.0, 1e-8))
    rows.append(["divergence_expansion", errA])
    # divergence transport: (delta v) o T = delta(R (v o T)) for adapted v
    v_map = lambda path: _adapted_rotor().apply(path, hv)  # noqa: E731
    errB = 0.0
    for p in range(n_fd):
        wp = w[p]
        lhs = float(skorohod(v_map, transform(R, wp), None, fd))
        rhs = float(skorohod(lambda path: R.apply(path, v_map(transform(R, path))), wp, None, fd))
        errB = max(errB, abs(lhs - rhs))
    tests.append(_band_test("divergence_transport", errB, 0.0, 1e-8))
    rows.append(["divergence_transport", errB])
    # Ogawa decomposition for u = delta(k) h
    w1 = sample_brownian_batch(grid, 1, RngStream(cfg.seed, 0), m)
    s = grid.times[:-1]
    h1 = CMVector(grid, np.cos(np.pi * s)[:, None])
    k1 = CMVector(grid, (1.0 + s)[:, None])
    u = lambda path: h1 * wiener_integral(k1, path)  # noqa: E731
    sk = skorohod(u, w1, None, fd)
    closed = wiener_integral(k1, w1) * wiener_integral(h1, w1) - cm_inner(h1, k1)
    errO = float(np.max(np.abs(sk - closed)))
    tests.append(_band_test("ogawa_decomposition", errO, 0.0, 1e-6))
    rows.append(["ogawa_decomposition", errO])
    # chaos invariance on a pi-block
    atom_h = CMVector.constant(grid, 1)
    res = SpectralResolution.with_atom(atom_h, RngStream(cfg.seed, 901))
    phases = np.where(np.arange(res.n_blocks) == 0, math.pi, res.thetas)
    R = SpectralRotor(res, phases)
    phi = res.block(0)[0]
    K = chaos.SymmetricKernel2.from_vectors(phi, phi)
    Tw1 = transform(R, w1)
    e1 = float(np.max(np.abs(wiener_integral(phi, Tw1) + wiener_integral(phi, w1))))
    e2 = float(np.max(np.abs(chaos.multiple_integral_2(K, Tw1) - chaos.multiple_integral_2(K, w1))))
    tests.append(_band_test("chaos_I1_flips", e1, 0.0, 1e-9))
    tests.append(_band_test("chaos_I2_invariant", e2, 0.0, 1e-9))
    rows += [["chaos_I1_flips", e1], ["chaos_I2_invariant", e2]]
    return tests, {"identities.csv": (["identity", "max_abs_error"], rows)}


_RUNNERS = {
    "gauss_law": _scenario_gauss_law,
    "levy": _scenario_levy,
    "ergodic_dichotomy": _scenario_ergodic_dichotomy,
    "necessary_conditions": _scenario_necessary_conditions,
    "mixing_sign": _scenario_mixing_sign,
    "girsanov": _scenario_girsanov,
    "example1": _scenario_example1,
    "divergence_identities": _scenario_divergence_identities,
}


def run_scenario(cfg: ScenarioConfig, write: bool = True) -> RunReport:
    """Run one scenario; with ``write`` the artifacts go to ``cfg.out``."""
    if cfg.scenario not in _RUNNERS:
        raise ConfigError(f"unknown scenario {cfg.scenario!r}")
    out = Path(cfg.out)
    if write:
        out.mkdir(parents=True, exist_ok=True)
        if not os.access(out, os.W_OK):
            raise PermissionError(f"output directory {out} is not writable")
    report = RunReport(cfg)
    t0 = time.perf_counter()
    tests, artifacts = _RUNNERS[cfg.scenario](cfg, out)
    report.timings[cfg.scenario] = time.perf_counter() - t0
    report.tests = tests
    if write:
        report.artifacts.append(emit_csv(_tests_table(tests), out / "tests.csv"))
        for name, obj in artifacts.items():
            report.artifacts.append(emit_csv(obj, out / name))
        (out / "config.txt").write_text(serialize_config(cfg))
        summary = out / "summary.txt"
        summary.write_text(report.summary())
        report.artifacts.append(summary)
    return report


# ---------------------------------------------------------------------------
# command line


def _selftest(quiet=False) -> bool:
    """Every statistical test on samples from its own null model, at three seeds."""
    ok = True
    grid = TimeGrid(4)
    for seed in (1, 2, 3):
        z = RngStream(seed, 0).normals(100_000)[0]
        g = ergostat.gaussianity_report(z)
        w = sample_brownian_batch(grid, 2, RngStream(seed, 0), 100_000)
        lv = ergostat.levy_check(w)
        for name, passed in (("gaussianity", g.passed), ("levy", lv.passed)):
            ok &= passed
            if not quiet:
                print(f"TEST selftest_{name}_seed{seed} {'PASS' if passed else 'FAIL'}")
    return ok


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="rotorlab", description="Random rotations on Wiener space: experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a scenario from a config file")
    run.add_argument("config")
    run.add_argument("--out")
    run.add_argument("--seed", type=int)
    run.add_argument("--paths", type=int)
    run.add_argument("--workers", type=int)
    run.add_argument("--quiet", action="store_true")
    sub.add_parser("list-scenarios", help="list the built-in scenarios")
    sub.add_parser("selftest", help="calibration self-test of the statistical checks")
    args = parser.parse_args(argv)

    if args.command == "list-scenarios":
        for name in SCENARIOS:
            print(name)
        return 0
    if args.command == "selftest":
        return 0 if _selftest() else 1

    try:
        text = Path(args.config).read_text()
        cfg = parse_config(text, {"out": args.out, "seed": args.seed, "paths": args.paths, "workers": args.workers})
        report = run_scenario(cfg)
    except ConfigError as exc:
        print(f"rotorlab: config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"rotorlab: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # any module error aborts with a diagnostic
        print(f"rotorlab: scenario {getattr(cfg, 'scenario', '?')} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    if not args.quiet:
        sys.stdout.write(report.summary())
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
