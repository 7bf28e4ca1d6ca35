import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import circular_xcorr
from corrfilt.features import FeatureMap
from corrfilt.solvers import SpectralFilter
from corrfilt.spectral import DimensionError, correlate, forward_fft, inverse_fft


def _filter_from_spatial(planes):
    return SpectralFilter(np.fft.fft2(planes, axes=(-2, -1)))


def test_impulse_transforms_to_ones():
    img = np.zeros((4, 4))
    img[0, 0] = 1
    np.testing.assert_allclose(forward_fft(img).coefficients, np.ones((4, 4)))


def test_constant_image_is_dc_only():
    spec = forward_fft(np.full((4, 4), 2.5)).coefficients
    assert spec[0, 0] == pytest.approx(16 * 2.5)
    spec[0, 0] = 0
    np.testing.assert_allclose(spec, 0, atol=1e-12)


def test_parseval(rng):
    x = rng.normal(size=(8, 8))
    spec = forward_fft(x)
    assert spec.width == 8 and spec.height == 8
    lhs = np.sum(x ** 2) * 64
    rhs = np.sum(np.abs(spec.coefficients) ** 2)
    assert abs(lhs - rhs) / lhs < 1e-9


def test_inverse_of_ones_is_impulse():
    out = inverse_fft(np.ones((4, 4), complex))
    expected = np.zeros((4, 4))
    expected[0, 0] = 1
    np.testing.assert_allclose(out, expected, atol=1e-15)
    np.testing.assert_array_equal(inverse_fft(np.zeros((4, 4), complex)), 0)


def test_round_trip(rng):
    x = rng.normal(size=(8, 8))
    np.testing.assert_allclose(inverse_fft(forward_fft(x)), x, rtol=0, atol=1e-10 * np.abs(x).max())


def test_zero_sized_input_rejected():
    with pytest.raises(DimensionError):
        forward_fft(np.zeros((0, 4)))


def test_zero_filter_gives_zero_response(rng):
    feats = FeatureMap(rng.normal(size=(2, 5, 5)))
    resp = correlate(SpectralFilter(np.zeros((2, 5, 5), complex)), feats)
    np.testing.assert_array_equal(resp, 0)


def test_autocorrelation_peaks_at_zero_lag(rng):
    img = rng.normal(size=(7, 9))
    resp = correlate(_filter_from_spatial(img[None]), FeatureMap(img[None]))
    assert np.unravel_index(np.argmax(resp), resp.shape) == (0, 0)


def test_matches_bruteforce_k2(rng):
    f = rng.normal(size=(2, 6, 6))
    x = rng.normal(size=(2, 6, 6))
    resp = correlate(_filter_from_spatial(f), FeatureMap(x))
    np.testing.assert_allclose(resp, circular_xcorr(f, x), atol=1e-8)


def test_channel_mismatch(rng):
    with pytest.raises(DimensionError):
        correlate(_filter_from_spatial(rng.normal(size=(2, 4, 4))), FeatureMap(rng.normal(size=(3, 4, 4))))


def test_linearity(rng):
    f, g = rng.normal(size=(2, 3, 5, 5))
    x = FeatureMap(rng.normal(size=(3, 5, 5)))
    a, b = 0.7, -1.3
    lhs = correlate(_filter_from_spatial(a * f + b * g), x)
    rhs = a * correlate(_filter_from_spatial(f), x) + b * correlate(_filter_from_spatial(g), x)
    np.testing.assert_allclose(lhs, rhs, atol=1e-9)


@settings(max_examples=100, deadline=None)
@given(h=st.integers(1, 8), w=st.integers(1, 8), k=st.integers(1, 3), seed=st.integers(0, 2**32 - 1))
def test_spectral_equals_spatial_property(h, w, k, seed):
    r = np.random.default_rng(seed)
    f = r.normal(size=(k, h, w))
    x = r.normal(size=(k, h, w))
    resp = correlate(_filter_from_spatial(f), FeatureMap(x))
    np.testing.assert_allclose(resp, circular_xcorr(f, x), atol=1e-8)
    spec = forward_fft(x[0]).coefficients
    energy = np.sum(x[0] ** 2) * h * w
    assert abs(energy - np.sum(np.abs(spec) ** 2)) <= 1e-9 * max(energy, 1e-300)
