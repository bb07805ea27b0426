import math

import numpy as np
import pytest

from rotorlab import (
    CMVector,
    DiscretePath,
    IdentityRotor,
    RngStream,
    SignFamily,
    SpectralResolution,
    SpectralRotor,
    TimeGrid,
    cm_inner,
    sample_brownian_batch,
    transform,
    wiener_integral,
)
from rotorlab import ergostat
from rotorlab.rotors import ConstantFamily

G = TimeGrid(16)


def test_map_chunks_order_and_workers():
    fn = lambda s, c: np.arange(s, s + c) ** 2  # noqa: E731
    one = np.concatenate(ergostat.map_chunks(fn, 1000, chunk=64))
    four = np.concatenate(ergostat.map_chunks(fn, 1000, chunk=64, workers=4))
    np.testing.assert_array_equal(one, np.arange(1000) ** 2)
    np.testing.assert_array_equal(one, four)
    with pytest.raises(ValueError):
        ergostat.map_chunks(fn, 0)


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_gaussianity_calibration(seed):
    z = RngStream(seed, 0).normals(100_000)[0]
    assert ergostat.gaussianity_report(z).passed
    rep = ergostat.gaussianity_report(2 * z, target_variance=4.0)
    assert rep.passed


def test_gaussianity_detects_non_gaussian():
    u = RngStream(1, 0).uniforms(100_000)[0]
    rep = ergostat.gaussianity_report((u - 0.5) * math.sqrt(12))
    assert rep.passes["variance"] and rep.passes["mean"]
    assert not rep.passes["excess_kurtosis"] and not rep.passes["ks"]
    with pytest.raises(ValueError):
        ergostat.gaussianity_report(np.zeros(10))


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_levy_calibration(seed):
    # at 10^4 paths the 3% band is only ~2 standard errors per cell
    w = sample_brownian_batch(TimeGrid(4), 2, RngStream(seed, 0), 100_000)
    assert ergostat.levy_check(w).passed


def test_levy_detects_scaling_and_correlation():
    w = sample_brownian_batch(TimeGrid(4), 1, RngStream(1, 0), 10_000)
    inc = w.increments.copy()
    inc[:, 1] *= 1.1
    assert not ergostat.levy_check(DiscretePath(w.grid, inc)).passes["cell_variance"]
    inc = w.increments.copy()
    inc[:, 2] = 0.8 * inc[:, 2] + 0.6 * inc[:, 3]
    assert not ergostat.levy_check(DiscretePath(w.grid, inc)).passes["cross_correlation"]


def test_birkhoff_trace_identity_is_constant():
    w = sample_brownian_batch(G, 1, RngStream(1, 0), 4)
    h = CMVector.constant(G, 1)
    F = lambda p: np.cos(wiener_integral(h, p))  # noqa: E731
    tr = ergostat.birkhoff_trace(F, IdentityRotor(), w, 20)
    np.testing.assert_allclose(tr.partial_averages, np.repeat(F(w)[:, None], 20, axis=1))
    assert tr.dispersion == pytest.approx(np.std(F(w), ddof=1))
    with pytest.raises(ValueError):
        ergostat.birkhoff_trace(F, IdentityRotor(), w, 0)


def test_birkhoff_trace_non_finite():
    w = sample_brownian_batch(G, 1, RngStream(1, 0), 2)
    with pytest.raises(FloatingPointError):
        ergostat.birkhoff_trace(lambda p: np.full(2, np.inf), IdentityRotor(), w, 3)


def test_mixing_curve_identity_is_flat():
    h = CMVector.constant(G, 1)
    F = lambda p: wiener_integral(h, p) ** 2  # noqa: E731
    c = ergostat.mixing_curve(F, F, IdentityRotor(), 3, 500, RngStream(1, 0), G)
    np.testing.assert_allclose(c.estimate, c.estimate[0])
    header, rows = c.rows()
    assert header == ["n", "estimate", "stderr", "product_of_means"] and len(rows) == 4


def test_wick_curve_matches_exact_reference_for_deterministic_rotor():
    res = SpectralResolution.random_planar(G, 1, RngStream(1, 2))
    R = SpectralRotor(res)
    h = CMVector(G, np.linspace(-1, 1, 16)[:, None])
    k = CMVector(G, np.cos(np.arange(16.0))[:, None]) * 0.7
    c = ergostat.wick_mixing_curve(h, k, R, 6, 40_000, RngStream(1, 0))
    # reference computed independently: Q_n = R^n on the coordinates
    M = R.matrix(grid=G, dim=1)
    exact = [math.exp(float(k.coords() @ np.linalg.matrix_power(M, n) @ h.coords())) for n in range(7)]
    np.testing.assert_allclose(c.reference, exact, rtol=1e-12)
    assert np.all(np.abs(c.estimate - exact) < 4 * c.stderr)


def _sign_second_moment_exact(grid):
    # E (Q_1 h, h)^2 for hdot = 1: dt^2 sum_ij E sign(b_si) sign(b_sj), arcsine law
    s = grid.times[:-1]
    total = 0.0
    for a in s:
        for b in s:
            total += ergostat.sign_two_point(a, b)[0, 0]
    return total * grid.dt**2


def test_sign_rotor_second_moment_against_arcsine_oracle():
    g = TimeGrid(64)
    h = CMVector.constant(g, 1)
    dc = ergostat.qn_decay(SignFamily(g, RngStream(1, 9)), h, h, 3, 20_000, RngStream(1, 0))
    exact = _sign_second_moment_exact(g)
    assert abs(dc.second_moment[0] - exact) < 4 * dc.second_moment_stderr[0]
    assert dc.cauchy_schwarz_ok and dc.monotone_decay
    assert np.all(np.abs(dc.samples) <= 1 + 1e-10)


def test_qn_decay_identity_has_no_decay():
    h = CMVector.constant(G, 1)
    k = CMVector(G, np.linspace(0, 1, 16)[:, None])
    dc = ergostat.qn_decay(IdentityRotor(), h, k, 4, 200, RngStream(1, 0))
    np.testing.assert_allclose(dc.mean, float(cm_inner(h, k)))
    assert not dc.monotone_decay and not dc.converges_in_probability
    with pytest.raises(ValueError):
        ergostat.qn_decay(IdentityRotor(), CMVector.zeros(G, 1), k, 4, 200, RngStream(1, 0))


def test_decay_curve_convergence_rule():
    base = dict(n=np.arange(1, 5), mean=np.zeros(4), second_moment=np.array([4, 3, 2, 1.0]),
                second_moment_stderr=np.zeros(4), eps=0.1, bound=1.0, max_abs=0.5, samples=np.zeros((1, 4)))
    assert ergostat.DecayCurve(exceedance=np.array([0.5, 0.2, 0.04, 0.01]), **base).converges_in_probability
    assert not ergostat.DecayCurve(exceedance=np.array([0.5, 0.2, 0.1, 0.06]), **base).converges_in_probability
    assert not ergostat.DecayCurve(exceedance=np.array([0.5, 0.2, 0.0, 0.04]), **base).converges_in_probability


def test_girsanov_zero_shift_has_zero_gap():
    rep = ergostat.girsanov_check(SignFamily(G, RngStream(1, 9)), CMVector.zeros(G, 1), 1000, RngStream(1, 0),
                                  test_vectors=[CMVector.constant(G, 1)])
    r = rep.results[0]
    assert r.gap == 0.0 and rep.passed


def test_girsanov_deterministic_rotor():
    R = SpectralRotor(SpectralResolution.random_planar(G, 1, RngStream(1, 2)))
    rep = ergostat.girsanov_check(ConstantFamily(R), CMVector.constant(G, 1), 40_000, RngStream(1, 0))
    assert rep.passed and rep.clamped == 0
    assert len(rep.results) == 3


def test_girsanov_detects_wrong_weight():
    # a shift without its density does not preserve the expectation
    h = CMVector.constant(G, 1)
    w = sample_brownian_batch(G, 1, RngStream(1, 0), 40_000)
    lhs = np.cos(wiener_integral(h, w.shift(h)))
    assert abs(lhs.mean() - math.exp(-0.5)) > 10 * lhs.std() / math.sqrt(lhs.size)


def test_example1_trivial_and_envelope():
    pairs = [(0.2, 0.5), (0.5, 0.9)]
    x, y = np.array([1.0, -2.0]), np.array([0.5, 1.0])
    zero = ergostat.example1_decay(lambda s, t: np.zeros((2, 2)), x, y, 5, pairs)
    np.testing.assert_array_equal(zero.values[:, 1:], 0.0)
    ident = ergostat.example1_decay(lambda s, t: np.eye(2), x, y, 5, pairs)
    np.testing.assert_allclose(ident.values, (x @ y) / (np.linalg.norm(x) * np.linalg.norm(y)))
    assert not ident.all_decay
    S = np.array([[0.5, 0.0], [0.0, -0.3]])
    c, sn = math.cos(0.4), math.sin(0.4)
    U = np.array([[c, -sn], [sn, c]])
    normal = ergostat.example1_decay(lambda s, t: U @ S @ U.T, x, y, 30, pairs)
    assert np.all(np.abs(normal.values) <= 0.5 ** np.arange(31) + 1e-15)
    A = np.array([[0.5, 0.3], [0.0, -0.5]])
    half = ergostat.example1_decay(lambda s, t: A, x, y, 30, pairs)
    n = np.arange(31)
    # non-normal A: envelope with the condition number of its eigenbasis
    _, V = np.linalg.eig(A)
    assert np.all(np.abs(half.values) <= np.linalg.cond(V) * 0.5**n + 1e-15)
    np.testing.assert_allclose(half.spectral_radius, 0.5)
    assert half.all_decay
    with pytest.raises(ValueError):
        ergostat.example1_decay(lambda s, t: np.eye(3), x, y, 2, pairs)
    with pytest.raises(FloatingPointError):
        ergostat.example1_decay(lambda s, t: np.full((2, 2), np.inf), x, y, 2, pairs)
    with pytest.raises(FloatingPointError):
        ergostat.example1_decay(lambda s, t: 1e200 * np.eye(2), x, y, 3, pairs)


def test_sign_two_point_against_monte_carlo():
    g = TimeGrid(16)
    b = sample_brownian_batch(g, 1, RngStream(1, 0), 100_000).values()[:, :, 0]
    sg = np.where(b >= 0, 1.0, -1.0)
    for i, j in ((0, 5), (3, 7), (8, 16), (5, 5)):
        prod = sg[:, i] * sg[:, j]
        exact = ergostat.sign_two_point(g.times[i], g.times[j])[0, 0]
        assert abs(prod.mean() - exact) <= 4 * max(prod.std(), 1e-3) / math.sqrt(prod.size)


def test_step_matrices_and_empirical_two_point():
    g = TimeGrid(8)
    R = SignFamily(g, RngStream(1, 9)).at(1, 0, 20_000)
    w = sample_brownian_batch(g, 1, RngStream(1, 0), 20_000)
    mats = ergostat.step_matrices(R, w)
    assert mats.shape == (20_000, 8, 1, 1)
    emp = ergostat.empirical_two_point(mats, 2, 6)
    assert abs(emp[0, 0] - ergostat.sign_two_point(2 / 8, 6 / 8)[0, 0]) < 4 / math.sqrt(20_000)
    # a transformed path is again Brownian at this sample size
    assert ergostat.levy_check(transform(R, w), rel_tol=0.05).passed


def test_birkhoff_limit_is_product_of_bessel_j0():
    # uniform phases turn each block by a fresh angle while its radius r_b stays
    # fixed, so A_N -> prod_b J0(|P_b h| r_b) path by path
    from scipy.special import j0

    from rotorlab import IidPhaseFamily, PhaseLaw

    g = TimeGrid(32)
    res = SpectralResolution.random_planar(g, 1, RngStream(1, 2))
    h = CMVector(g, np.linspace(-1, 1, 32)[:, None])
    w = sample_brownian_batch(g, 1, RngStream(1, 0), 5)
    n_iter = 4000
    tr = ergostat.birkhoff_trace(lambda p: np.cos(wiener_integral(h, p)), IidPhaseFamily(res, PhaseLaw.uniform(), RngStream(1, 3)), w, n_iter)
    y = w.xi() @ res.basis
    radii = np.sqrt(np.add.reduceat(y**2, res.offsets[:-1], axis=-1))
    limit = np.prod(j0(np.sqrt(res.masses(h)) * radii), axis=-1)
    assert np.all(np.abs(tr.final - limit) < 5 / math.sqrt(n_iter))
    assert limit.std() > 0.01  # the limit really varies from path to path
