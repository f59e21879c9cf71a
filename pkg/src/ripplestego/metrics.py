"""Quality and capacity measurements."""

from __future__ import annotations

import math

import numpy as np

from .image_core import Image


def _arr(x) -> np.ndarray:
    return (x.data if isinstance(x, Image) else np.asarray(x)).astype(np.float64)


def _check(a, b):
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch {a.shape} vs {b.shape}")


def mse(a, b) -> float:
    a, b = _arr(a), _arr(b)
    _check(a, b)
    return float(np.mean((a - b) ** 2))


def psnr(a, b) -> float:
    """Peak SNR in dB over all pixels and channels; ``math.inf`` when identical."""
    a, b = _arr(a), _arr(b)
    _check(a, b)
    sse = float(np.sum((a - b) ** 2))
    if sse == 0:
        return math.inf
    return 10.0 * math.log10(a.size * 255.0**2 / sse)


def psnr_from_sse(sse: float, n: int) -> float:
    return math.inf if sse == 0 else 10.0 * math.log10(n * 255.0**2 / sse)


def _hist(x) -> np.ndarray:
    v = _arr(x).astype(np.int64).ravel()
    return np.bincount(v, minlength=256) / max(v.size, 1)


def entropy(img) -> float:
    p = _hist(img)
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum()) + 0.0


def histogram_deviation(a, b) -> float:
    _check(_arr(a), _arr(b))
    return float(np.abs(_hist(a) - _hist(b)).sum())


def capacity_bpp(bits: int, width: int, height: int) -> float:
    return bits / float(width * height)


def quality_report(cover, stego, payload_bits: int = 0) -> dict:
    """JSON-ready report. Infinite PSNR is emitted as null plus a flag."""
    cover_arr = _arr(cover)
    h, w = cover_arr.shape[:2]
    p = psnr(cover, stego)
    return {
        "psnr_db": None if math.isinf(p) else p,
        "psnr_infinite": math.isinf(p),
        "mse": mse(cover, stego),
        "entropy_cover": entropy(cover),
        "entropy_stego": entropy(stego),
        "histogram_l1": histogram_deviation(cover, stego),
        "capacity_bpp": capacity_bpp(payload_bits, w, h),
    }
