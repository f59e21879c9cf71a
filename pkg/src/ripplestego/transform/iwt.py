"""Reversible integer 5/3 wavelet by lifting, on images and on 8x8 blocks."""

from __future__ import annotations

import numpy as np

from .pyramid import CoefficientPyramid


def _lift_fwd(x: np.ndarray):
    """One 5/3 lifting step along the last axis (even length, symmetric extension)."""
    e = x[..., 0::2]
    o = x[..., 1::2]
    e_next = np.concatenate([e[..., 1:], e[..., -1:]], axis=-1)
    d = o - ((e + e_next) >> 1)
    d_prev = np.concatenate([d[..., :1], d[..., :-1]], axis=-1)
    s = e + ((d_prev + d + 2) >> 2)
    return s, d


def _lift_inv(s: np.ndarray, d: np.ndarray) -> np.ndarray:
    d_prev = np.concatenate([d[..., :1], d[..., :-1]], axis=-1)
    e = s - ((d_prev + d + 2) >> 2)
    e_next = np.concatenate([e[..., 1:], e[..., -1:]], axis=-1)
    o = d + ((e + e_next) >> 1)
    x = np.empty(s.shape[:-1] + (2 * s.shape[-1],), dtype=s.dtype)
    x[..., 0::2] = e
    x[..., 1::2] = o
    return x


def _analysis2d(x: np.ndarray):
    """Rows then columns. Returns LL, HL, LH, HH where the first letter is the
    horizontal filter and the second the vertical one."""
    lo, hi = _lift_fwd(x)
    ll, lh = _lift_fwd(lo.swapaxes(-1, -2))
    hl, hh = _lift_fwd(hi.swapaxes(-1, -2))
    t = lambda a: a.swapaxes(-1, -2)
    return t(ll), t(hl), t(lh), t(hh)


def _synthesis2d(ll, hl, lh, hh):
    t = lambda a: a.swapaxes(-1, -2)
    lo = t(_lift_inv(t(ll), t(lh)))
    hi = t(_lift_inv(t(hl), t(hh)))
    return _lift_inv(lo, hi)


def iwt_forward(image, levels: int = 1) -> CoefficientPyramid:
    """Integer 5/3 decomposition of a 2-D array (or a stack ``(..., H, W)``)."""
    x = np.asarray(image.data[:, :, 0] if not isinstance(image, np.ndarray) and hasattr(image, "data") else image).astype(np.int64)
    h, w = x.shape[-2:]
    if levels < 1 or h % (1 << levels) or w % (1 << levels):
        raise ValueError(f"levels={levels} too large for dimensions {h}x{w}")
    subbands = {}
    cur = x
    for lev in range(1, levels + 1):
        cur, hl, lh, hh = _analysis2d(cur)
        subbands[(lev, "HL")] = hl
        subbands[(lev, "LH")] = lh
        subbands[(lev, "HH")] = hh
    subbands[(levels, "LL")] = cur
    return CoefficientPyramid("IWT", subbands, shape=x.shape, quantized=True, meta={"levels": levels})


def iwt_inverse(pyr: CoefficientPyramid) -> np.ndarray:
    if pyr.kind != "IWT" or "levels" not in pyr.meta:
        raise ValueError("not an IWT pyramid")
    levels = pyr.meta["levels"]
    try:
        cur = pyr.subbands[(levels, "LL")]
        for lev in range(levels, 0, -1):
            cur = _synthesis2d(cur, pyr.subbands[(lev, "HL")], pyr.subbands[(lev, "LH")], pyr.subbands[(lev, "HH")])
    except KeyError as exc:
        raise ValueError(f"malformed pyramid, missing {exc}") from None
    if cur.shape != tuple(pyr.shape):
        raise ValueError("malformed pyramid: shape mismatch")
    return cur


# Block codec: one level on 8x8 tiles, coefficients laid out LL|HL|LH|HH (16 each).

IWT_ORIENTATIONS = ("HL", "LH", "HH")


def iwt_block_forward(blocks: np.ndarray) -> np.ndarray:
    b = np.asarray(blocks, dtype=np.int64)
    parts = _analysis2d(b)
    return np.concatenate([p.reshape(p.shape[:-2] + (-1,)) for p in parts], axis=-1)


def iwt_block_inverse(coeffs: np.ndarray) -> np.ndarray:
    c = np.asarray(coeffs, dtype=np.int64)
    q = c.shape[-1] // 4
    side = int(round(q**0.5))
    parts = [c[..., i * q : (i + 1) * q].reshape(c.shape[:-1] + (side, side)) for i in range(4)]
    return _synthesis2d(*parts)


def iwt_block_groups(block_size: int = 8) -> list[np.ndarray]:
    """Coefficient indices of the HL, LH and HH detail subbands of a block."""
    q = (block_size // 2) ** 2
    return [np.arange(q) + q * i for i in (1, 2, 3)]
