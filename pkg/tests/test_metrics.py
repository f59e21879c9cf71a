import math

import numpy as np
import pytest

from ripplestego.image_core import Image
from ripplestego.metrics import capacity_bpp, entropy, histogram_deviation, mse, psnr, quality_report


def test_psnr_identical_is_infinite():
    a = Image(np.zeros((8, 8), np.uint8))
    assert math.isinf(psnr(a, a))


def test_psnr_extreme():
    assert psnr(Image(np.zeros((4, 4), np.uint8)), Image(np.full((4, 4), 255, np.uint8))) == pytest.approx(0.0)


def test_psnr_single_pixel():
    a = np.zeros((8, 8), np.uint8)
    b = a.copy()
    b[3, 3] = 16
    expected = 10 * math.log10(64 * 255**2 / 256)
    assert psnr(Image(a), Image(b)) == pytest.approx(expected)
    assert expected == pytest.approx(42.11, abs=0.01)


def test_psnr_symmetric_and_monotone():
    rng = np.random.default_rng(0)
    a = rng.integers(0, 256, (16, 16))
    b = np.clip(a + rng.integers(-3, 4, a.shape), 0, 255)
    c = np.clip(a + rng.integers(-9, 10, a.shape), 0, 255)
    assert psnr(a, b) == pytest.approx(psnr(b, a))
    assert (mse(a, b) < mse(a, c)) == (psnr(a, b) > psnr(a, c))


def test_psnr_shape_mismatch():
    with pytest.raises(ValueError):
        psnr(np.zeros((2, 2)), np.zeros((2, 3)))


def test_entropy_cases():
    assert entropy(np.full((4, 4), 7, np.uint8)) == 0.0
    assert entropy(np.arange(256, dtype=np.uint8).reshape(16, 16)) == pytest.approx(8.0)
    assert entropy(np.array([[0, 255]], np.uint8)) == pytest.approx(1.0)


def test_entropy_permutation_invariant():
    rng = np.random.default_rng(1)
    x = rng.integers(0, 256, 400).astype(np.uint8)
    assert entropy(x.reshape(20, 20)) == pytest.approx(entropy(rng.permutation(x).reshape(20, 20)))


def test_histogram_deviation():
    a = np.zeros((10, 10), np.uint8)
    b = a.copy()
    b[0, 0] = 1
    assert histogram_deviation(a, a) == 0.0
    assert histogram_deviation(a, np.full((10, 10), 9, np.uint8)) == pytest.approx(2.0)
    assert histogram_deviation(a, b) == pytest.approx(2 / 100)


def test_mse_and_capacity():
    a = np.zeros((2, 2))
    assert mse(a, a) == 0.0
    assert mse(a, a + 2) == pytest.approx(4 * mse(a, a + 1))
    assert capacity_bpp(131072, 512, 512) == 0.5


def test_quality_report_infinite_flag():
    a = np.zeros((8, 8), np.uint8)
    rep = quality_report(a, a, payload_bits=16)
    assert rep["psnr_db"] is None and rep["psnr_infinite"] is True
    assert rep["capacity_bpp"] == 0.25
