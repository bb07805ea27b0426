import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats

from rotorlab import (
    CMVector,
    DiscretePath,
    RngStream,
    TimeGrid,
    cm_inner,
    indicator_vector,
    sample_brownian,
    sample_brownian_batch,
    wiener_integral,
)
from rotorlab.grid_paths import indicator_basis

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def densities(n, d):
    return arrays(np.float64, (n, d), elements=finite)


def test_grid_basics():
    g = TimeGrid(4)
    assert g.dt == 0.25
    np.testing.assert_allclose(g.times, [0, 0.25, 0.5, 0.75, 1.0])
    for bad in (0, 1, -3, 2.5):
        with pytest.raises(ValueError):
            TimeGrid(bad)


def test_path_values_start_at_zero(grid16, stream):
    w = sample_brownian(grid16, 2, stream)
    v = w.values()
    assert v.shape == (17, 2)
    np.testing.assert_array_equal(v[0], 0.0)
    np.testing.assert_allclose(np.diff(v, axis=0), w.increments)


def test_path_is_read_only(grid16, stream):
    w = sample_brownian(grid16, 1, stream)
    with pytest.raises(ValueError):
        w.increments[0, 0] = 1.0


def test_shape_validation(grid16):
    with pytest.raises(ValueError):
        DiscretePath(grid16, np.zeros((15, 1)))
    with pytest.raises(ValueError):
        CMVector(grid16, np.zeros(16))


def test_single_path_matches_batch_row(grid16, stream):
    batch = sample_brownian_batch(grid16, 3, stream, 10)
    for j in (0, 3, 9):
        np.testing.assert_array_equal(sample_brownian(grid16, 3, stream, j).increments, batch.increments[j])
    tail = sample_brownian_batch(grid16, 3, stream, 4, start=6)
    np.testing.assert_array_equal(tail.increments, batch.increments[6:])


def test_raw_words_follow_philox_counter_layout(seed):
    # oracle: one uninterrupted Philox stream with the same key
    s = RngStream(seed, 7)
    words = 10  # 3 counter blocks of 4 words per path
    ref = np.random.Philox(key=np.array([seed, 7], dtype=np.uint64)).random_raw(12 * 5).reshape(5, 12)[:, :words]
    np.testing.assert_array_equal(s.raw(words, 5), ref)
    np.testing.assert_array_equal(s.raw(words, 2, start=3), ref[3:])


def test_streams_are_distinct_and_reproducible(seed):
    a = RngStream(seed, 0).normals(100)
    np.testing.assert_array_equal(a, RngStream(seed, 0).normals(100))
    assert not np.array_equal(a, RngStream(seed, 1).normals(100))
    assert not np.array_equal(a, RngStream(seed + 1, 0).normals(100))
    assert RngStream(seed, 2).child(3) == RngStream(seed, 5)


def test_rng_stream_validation():
    with pytest.raises(ValueError):
        RngStream(-1)
    with pytest.raises(ValueError):
        RngStream(2**64)
    with pytest.raises(ValueError):
        RngStream(1, -1)


def test_normals_are_standard(seed):
    z = RngStream(seed, 3).normals(200_000)[0]
    assert abs(z.mean()) < 4 / math.sqrt(z.size)
    assert abs(z.var() - 1) < 4 * math.sqrt(2 / z.size)
    assert stats.kstest(z, "norm").pvalue > 1e-3


def test_brownian_covariance_is_min(seed):
    g = TimeGrid(8)
    w = sample_brownian_batch(g, 1, RngStream(seed, 0), 50_000)
    v = w.values()[:, :, 0]
    emp = v.T @ v / v.shape[0]
    t = g.times
    exact = np.minimum.outer(t, t)
    # entries have variance <= 2 max(s,t)^2 / M
    assert np.max(np.abs(emp - exact)) < 4 * math.sqrt(2 / v.shape[0])


def test_ito_isometry(seed):
    g = TimeGrid(32)
    s = g.times[:-1]
    h = CMVector(g, np.stack([np.sin(3 * s), s**2], -1))
    w = sample_brownian_batch(g, 2, RngStream(seed, 0), 40_000)
    x = wiener_integral(h, w)
    var = float(cm_inner(h, h))
    assert abs(x.var() / var - 1) < 4 * math.sqrt(2 / x.size)


@settings(max_examples=40, deadline=None)
@given(densities(8, 2), densities(8, 2), finite)
def test_inner_product_and_coords(a, b, c):
    g = TimeGrid(8)
    h, k = CMVector(g, a), CMVector(g, b)
    assert cm_inner(h, k) == pytest.approx(cm_inner(k, h), abs=1e-9)
    assert cm_inner(h, k) == pytest.approx(float(h.coords() @ k.coords()), abs=1e-9)
    np.testing.assert_allclose(CMVector.from_coords(g, 2, h.coords()).density, a, atol=1e-12)
    np.testing.assert_allclose((h + k * c).density, a + c * b, atol=1e-9)
    np.testing.assert_allclose((h - h).density, 0.0)
    np.testing.assert_allclose((-h).density, -a)


@settings(max_examples=40, deadline=None)
@given(densities(8, 1), densities(8, 1), st.floats(-3, 3), st.integers(0, 1000))
def test_shift_moves_wiener_integral_by_inner_product(a, b, eps, j):
    g = TimeGrid(8)
    h, k = CMVector(g, a), CMVector(g, b)
    w = sample_brownian(g, 1, RngStream(11, 0), j)
    lhs = wiener_integral(k, w.shift(h, eps))
    assert lhs == pytest.approx(wiener_integral(k, w) + eps * cm_inner(h, k), abs=1e-9)


def test_batched_vectors_broadcast(grid16, stream):
    w = sample_brownian_batch(grid16, 1, stream, 5)
    h = CMVector.constant(grid16, 1) * np.arange(5.0)
    assert h.batch_shape == (5,)
    np.testing.assert_allclose(wiener_integral(h, w), np.arange(5.0) * w.values()[:, -1, 0])


def test_space_mismatch_raises(stream):
    g1, g2 = TimeGrid(4), TimeGrid(8)
    with pytest.raises(ValueError, match="grid"):
        cm_inner(CMVector.zeros(g1, 1), CMVector.zeros(g2, 1))
    with pytest.raises(ValueError, match="dimension"):
        wiener_integral(CMVector.zeros(g1, 2), sample_brownian(g1, 1, stream))


def test_indicator_vector():
    g = TimeGrid(8)
    h = indicator_vector(g, 2, 0.25, 0.75, coord=1)
    assert cm_inner(h, h) == pytest.approx(0.5)
    np.testing.assert_array_equal(h.density[:, 0], 0)
    np.testing.assert_array_equal(h.density[:, 1], [0, 0, 1, 1, 1, 1, 0, 0])
    np.testing.assert_array_equal(indicator_basis(g, 2), np.eye(16))
