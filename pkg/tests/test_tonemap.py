import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hdrdiff.tonemap import (HdrImage, LdrSample, assemble_condition_input, ldr_to_hdr_domain,
                             mu_law_compress, mu_law_expand)


def make_sample(rng, h=8, w=8, gamma=2.2):
    ldrs = tuple(rng.random((h, w, 3), dtype=np.float32) for _ in range(3))
    return LdrSample(ldrs=ldrs, exposures=(0.25, 1.0, 4.0), gamma=gamma)


def test_mu_law_endpoints():
    assert mu_law_compress(np.array([0.0, 1.0])).tolist() == [0.0, 1.0]
    assert mu_law_expand(np.array([0.0, 1.0])).tolist() == [0.0, 1.0]


def test_mu_law_half_value():
    # log(2501)/log(5001) evaluated directly
    expected = math.log(2501) / math.log(5001)
    assert mu_law_compress(np.array(0.5)) == pytest.approx(expected, abs=1e-12)
    assert mu_law_compress(np.array(0.5)) == pytest.approx(0.918643, abs=1e-6)
    assert mu_law_expand(np.array(expected)) == pytest.approx(0.5, abs=1e-12)


def test_mu_law_roundtrip_single_precision():
    x = np.random.default_rng(0).random(10_000, dtype=np.float32)
    back = mu_law_expand(mu_law_compress(x))
    assert back.dtype == np.float32
    assert np.abs(back - x).max() <= 1e-5


def test_mu_law_roundtrip_double_precision():
    x = np.random.default_rng(1).random(10_000)
    assert np.abs(mu_law_expand(mu_law_compress(x)) - x).max() <= 1e-12


def test_mu_law_monotone():
    x = np.sort(np.random.default_rng(2).random(512))
    y = mu_law_compress(x)
    assert np.all(np.diff(y) >= 0)
    strict = np.diff(x) > 0
    assert np.all(np.diff(y)[strict] > 0)


def test_mu_law_domain_errors():
    with pytest.raises(ValueError):
        mu_law_compress(np.array([1.5]))
    with pytest.raises(ValueError):
        mu_law_compress(np.array([-0.01]))
    with pytest.raises(ValueError):
        mu_law_expand(np.array([2.0]))
    # values within the 1e-6 tolerance are clipped, not rejected
    assert mu_law_compress(np.array([1.0 + 5e-7])) == pytest.approx(1.0)


@given(st.floats(min_value=0.0, max_value=1.0, allow_nan=False),
       st.floats(min_value=1.0, max_value=1e6))
@settings(max_examples=200, deadline=None)
def test_mu_law_inverse_property(x, mu):
    x_arr = np.array([x])
    assert mu_law_expand(mu_law_compress(x_arr, mu), mu) == pytest.approx(x, abs=1e-9)


def test_ldr_to_hdr_domain_values():
    assert ldr_to_hdr_domain(np.array(0.0), 1.0) == 0.0
    assert ldr_to_hdr_domain(np.array(1.0), 1.0) == 1.0
    assert ldr_to_hdr_domain(np.array(0.5), 4.0, 2.2) == pytest.approx(0.5**2.2 / 4.0, abs=1e-12)
    assert ldr_to_hdr_domain(np.array(0.5), 4.0, 2.2) == pytest.approx(0.054409, abs=1e-6)
    assert ldr_to_hdr_domain(np.array(1.0), 8.0) == pytest.approx(0.125)


def test_ldr_to_hdr_domain_monotone():
    Y = np.linspace(0, 1, 64)
    out = ldr_to_hdr_domain(Y, 2.0, 2.2)
    assert np.all(np.diff(out) >= 0)


def test_ldr_to_hdr_rejects_bad_exposure():
    with pytest.raises(ValueError):
        ldr_to_hdr_domain(np.array(0.5), 0.0)
    with pytest.raises(ValueError):
        ldr_to_hdr_domain(np.array(0.5), -1.0)


def test_assemble_condition_shapes_and_layout():
    rng = np.random.default_rng(3)
    sample = make_sample(rng, h=6, w=7)
    y1, y2, y3 = assemble_condition_input(sample)
    for y in (y1, y2, y3):
        assert y.shape == (6, 7, 6)
    for i, y in enumerate((y1, y2, y3)):
        assert np.allclose(y[..., :3], sample.ldrs[i])
    expected_h2 = ldr_to_hdr_domain(sample.ldrs[1], 1.0, sample.gamma).clip(0, 1)
    assert np.allclose(y2[..., 3:], expected_h2, atol=1e-7)


def test_assemble_condition_clips_linear_estimates():
    # a fully bright low-exposure frame maps to 1/0.25 = 4 before clipping
    bright = np.ones((4, 4, 3), dtype=np.float32)
    mid = np.full((4, 4, 3), 0.5, dtype=np.float32)
    sample = LdrSample(ldrs=(bright, mid, mid), exposures=(0.25, 1.0, 4.0))
    y1, _, _ = assemble_condition_input(sample)
    assert y1[..., 3:].max() == 1.0


def test_hdr_image_validation():
    with pytest.raises(ValueError):
        HdrImage(np.full((4, 4, 3), 1.5))
    with pytest.raises(ValueError):
        HdrImage(np.zeros((4, 4)))
    img = HdrImage(np.full((4, 4, 3), 1.0 + 1e-7))
    assert img.data.max() == 1.0


def test_ldr_sample_validation():
    rng = np.random.default_rng(4)
    good = tuple(rng.random((4, 4, 3), dtype=np.float32) for _ in range(3))
    with pytest.raises(ValueError):
        LdrSample(ldrs=good, exposures=(1.0, 1.0, 4.0))
    with pytest.raises(ValueError):
        LdrSample(ldrs=good, exposures=(4.0, 1.0, 0.25))
    with pytest.raises(ValueError):
        LdrSample(ldrs=(good[0], good[1][:2], good[2]), exposures=(0.25, 1.0, 4.0))
    sample = LdrSample(ldrs=good, exposures=(0.25, 1.0, 4.0))
    assert sample.reference is sample.ldrs[1]
