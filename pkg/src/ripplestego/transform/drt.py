"""Block-local discrete ripplet transform (type I).

Each 8x8 tile is expanded on a real orthonormal basis built from Hermitian-paired
2-D DFT bins. Bins are grouped into polar wedges: radial scales with edges
doubling outward, and orientation counts that follow the generalized scaling law
``n_j = n_base * 2**floor((j-1)(1-1/d))``, ``n_base = 2**round(log2(8/c))``.
With c=1, d=2 this is the parabolic (curvelet) tiling.

Two realizations share the basis and labels:

* a float orthonormal transform (exact Parseval, linear), and
* an integer-to-integer lifting factorization (Givens rotations, three
  rounded shears each) that is a bijection on Z^64 and tracks the float
  coefficients to within a few units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .pyramid import CoefficientPyramid

N = 8


@dataclass(frozen=True)
class TransformParams:
    kind: str = "DRT"
    levels: int = 3
    support_c: float = 1.0
    degree_d: float = 2.0
    quant_step: float = 1.0

    def __post_init__(self):
        if self.kind not in ("DRT", "IWT"):
            raise ValueError("kind must be DRT or IWT")
        if self.levels < 1:
            raise ValueError("levels must be >= 1")
        if self.support_c <= 0 or self.degree_d <= 0 or self.quant_step <= 0:
            raise ValueError("support_c, degree_d and quant_step must be positive")


# ---------------------------------------------------------------- basis


def _real_dft_rows(n: int = N):
    """Orthonormal real DFT basis rows and their (frequency, is_sine) tags."""
    y = np.arange(n)
    rows, tags = [np.full(n, 1 / math.sqrt(n))], [(0, 0)]
    for u in range(1, n // 2):
        rows.append(np.cos(2 * np.pi * u * y / n) * math.sqrt(2 / n))
        rows.append(np.sin(2 * np.pi * u * y / n) * math.sqrt(2 / n))
        tags += [(u, 0), (u, 1)]
    rows.append(np.cos(np.pi * y) / math.sqrt(n))
    tags.append((n // 2, 0))
    return np.array(rows), tags


@lru_cache(maxsize=None)
def _structure():
    """Separable layout, the 45-degree pair rotations and each output's DFT bin."""
    f1, tags = _real_dft_rows()
    pairs, bins = [], {}
    for r, (u, su) in enumerate(tags):
        for c, (v, sv) in enumerate(tags):
            idx = r * N + c
            if u in (0, N // 2) or v in (0, N // 2):
                bins[idx] = (u, v)
                continue
            if su == 0 and sv == 0:  # cos*cos with sin*sin
                ss = (r + 1) * N + (c + 1)
                pairs.append((idx, ss))
                bins[idx], bins[ss] = (u, v), (u, -v)
            elif su == 1 and sv == 0:  # sin*cos with cos*sin
                cs = (r - 1) * N + (c + 1)
                pairs.append((idx, cs))
                bins[idx], bins[cs] = (u, -v), (u, v)
    return f1, tuple(pairs), tuple(bins[i] for i in range(N * N))


@lru_cache(maxsize=None)
def basis_matrix() -> np.ndarray:
    """64x64 orthonormal analysis matrix; row k is the k-th atom on the flattened tile."""
    f1, pairs, _ = _structure()
    sep = np.kron(f1, f1)
    out = sep.copy()
    h = 1 / math.sqrt(2)
    for a, b in pairs:
        out[a] = h * (sep[a] - sep[b])
        out[b] = h * (sep[a] + sep[b])
    out.setflags(write=False)
    return out


def atom_bins() -> tuple:
    return _structure()[2]


# ---------------------------------------------------------------- wedge labels


def orientation_counts(params: TransformParams) -> list[int]:
    base = 2 ** int(round(math.log2(8.0 / params.support_c)))
    base = max(base, 1)
    return [base * 2 ** int(math.floor((j - 1) * (1 - 1 / params.degree_d))) for j in range(1, params.levels)]


def radial_edges(params: TransformParams) -> list[float]:
    j_max = params.levels
    return [(3 * N / 8) * 2.0 ** (j - (j_max - 1)) for j in range(1, j_max)]


def edge_angle(u: int, v: int) -> float:
    """Direction (radians in [0, pi)) of the edge an atom responds to.

    Angles are measured from the column axis towards the row axis of the array.
    """
    return (math.atan2(u, v) + math.pi / 2) % math.pi


def orientation_index(angle: float, n: int) -> int:
    return int(math.floor(((angle + math.pi / (2 * n)) % math.pi) / (math.pi / n))) % n


@lru_cache(maxsize=None)
def atom_labels(params: TransformParams = TransformParams()) -> np.ndarray:
    """(scale, orientation) per atom. Scale 0 is the coarse lowpass (orientation 0)."""
    edges = radial_edges(params)
    counts = orientation_counts(params)
    labs = []
    for u, v in atom_bins():
        r = math.hypot(u, v)
        a = sum(r >= e for e in edges)
        th = orientation_index(edge_angle(u, v), counts[a - 1]) if a else 0
        labs.append((a, th))
    out = np.array(labs, dtype=np.int64)
    out.setflags(write=False)
    return out


def orientation_groups(params: TransformParams = TransformParams()) -> list[np.ndarray]:
    """Atom indices per orientation across all detail scales.

    Finer scales with more orientations are folded onto the coarsest detail count.
    """
    labs = atom_labels(params)
    counts = orientation_counts(params)
    if not counts:
        raise ValueError("DRT needs levels >= 2 to have detail scales")
    n0 = counts[0]
    groups = [[] for _ in range(n0)]
    for k, (a, th) in enumerate(labs):
        if a:
            groups[th * n0 // counts[a - 1]].append(k)
    return [np.array(g, dtype=np.int64) for g in groups]


# ---------------------------------------------------------------- float transform


def _tiles(x: np.ndarray):
    h, w = x.shape
    if h < N or w < N:
        raise ValueError(f"image {h}x{w} smaller than the {N}x{N} window")
    rows, cols = -(-h // N), -(-w // N)
    padded = np.pad(x, ((0, rows * N - h), (0, cols * N - w)), mode="edge")
    return padded.reshape(rows, N, cols, N).swapaxes(1, 2).reshape(rows, cols, N * N)


def _untile(t: np.ndarray, shape) -> np.ndarray:
    rows, cols = t.shape[:2]
    full = t.reshape(rows, cols, N, N).swapaxes(1, 2).reshape(rows * N, cols * N)
    return full[: shape[0], : shape[1]]


def _plane(image) -> np.ndarray:
    if not isinstance(image, np.ndarray) and hasattr(image, "data"):
        if image.channels != 1:
            raise ValueError("transform one channel at a time")
        return image.data[:, :, 0].astype(np.float64)
    return np.asarray(image, dtype=np.float64)


def drt_forward(image, params: TransformParams = TransformParams(), quantize: bool = False) -> CoefficientPyramid:
    """Block ripplet analysis of a single-channel image.

    With ``quantize`` and a unit step the integer lifting realization is used, so
    the quantized path is exactly invertible. Other steps round ``c / step``.
    """
    if params.kind != "DRT":
        raise ValueError("params.kind must be DRT")
    x = _plane(image)
    tiles = _tiles(x)
    if quantize and params.quant_step == 1.0:
        coeffs = int_forward(tiles.reshape(tiles.shape[:2] + (N, N)).astype(np.int64))
    else:
        coeffs = tiles @ basis_matrix().T
        if quantize:
            coeffs = np.floor(coeffs / params.quant_step + 0.5).astype(np.int64)
    labs = atom_labels(params)
    flat = coeffs.reshape(-1, N * N)
    subbands = {}
    for key in sorted(set(map(tuple, labs.tolist()))):
        sel = np.flatnonzero((labs == key).all(axis=1))
        subbands[key] = flat[:, sel]
    meta = {"quant_step": params.quant_step, "grid": tiles.shape[:2], "params": params, "coeffs": coeffs}
    return CoefficientPyramid("DRT", subbands, shape=x.shape, quantized=quantize, meta=meta)


def _coeffs_from_subbands(pyr: CoefficientPyramid) -> np.ndarray:
    params = pyr.meta["params"]
    labs = atom_labels(params)
    rows, cols = pyr.meta["grid"]
    dtype = np.int64 if pyr.quantized else np.float64
    flat = np.zeros((rows * cols, N * N), dtype=dtype)
    for key, vals in pyr.subbands.items():
        sel = np.flatnonzero((labs == np.array(key)).all(axis=1))
        flat[:, sel] = vals
    return flat.reshape(rows, cols, N * N)


def drt_inverse(pyr: CoefficientPyramid, clamp: bool = True) -> np.ndarray:
    """Synthesis. Returns float pixels, or rounded/clamped uint8 when ``clamp``."""
    if pyr.kind != "DRT" or "params" not in pyr.meta:
        raise ValueError("not a DRT pyramid")
    try:
        coeffs = _coeffs_from_subbands(pyr)
    except (ValueError, IndexError) as exc:
        raise ValueError(f"metadata mismatch: {exc}") from None
    params = pyr.meta["params"]
    if pyr.quantized and params.quant_step == 1.0:
        tiles = int_inverse(coeffs).reshape(coeffs.shape[:2] + (N * N,)).astype(np.float64)
    else:
        scale = params.quant_step if pyr.quantized else 1.0
        tiles = (coeffs * scale) @ basis_matrix()
    x = _untile(tiles, pyr.shape)
    if clamp:
        return np.clip(np.floor(x + 0.5), 0, 255).astype(np.uint8)
    return x


# ---------------------------------------------------------------- integer lifting


def _givens_factor(a: np.ndarray):
    """Orthogonal ``a`` = S * G_m ... G_1. Returns rotations (j, i, theta) and signs S."""
    r = a.T.copy()
    ops = []
    n = len(a)
    for j in range(n):
        for i in range(n - 1, j, -1):
            if abs(r[i, j]) < 1e-14:
                continue
            th = math.atan2(r[i, j], r[j, j])
            c, s = math.cos(th), math.sin(th)
            rj, ri = r[j].copy(), r[i].copy()
            r[j], r[i] = c * rj + s * ri, -s * rj + c * ri
            ops.append((j, i, th))
    return ops, np.sign(np.diag(r))


def _shears(theta: float):
    """Lifting coefficients for v_j' = c v_j + s v_i, v_i' = -s v_j + c v_i."""
    alpha, neg = -theta, False
    if math.cos(alpha) < 0:
        alpha -= math.copysign(math.pi, alpha)
        neg = True
    c, s = math.cos(alpha), math.sin(alpha)
    return (c - 1) / s, s, neg


def _layers(ops, n):
    """Group rotations into layers touching disjoint coordinates, keeping order."""
    depth = [0] * n
    layers: list[list] = []
    for j, i, th in ops:
        d = max(depth[j], depth[i])
        depth[j] = depth[i] = d + 1
        while len(layers) <= d:
            layers.append([])
        layers[d].append((j, i) + _shears(th))
    packed = []
    for layer in layers:
        j, i, p, u, neg = map(np.array, zip(*layer))
        packed.append((j, i, p, u, np.where(neg, -1.0, 1.0)))
    return packed


@lru_cache(maxsize=None)
def _lifting_plan():
    f1, pairs, _ = _structure()
    ops, signs = _givens_factor(f1)
    plan1d = _layers(ops, N)
    a, b = (np.array(x) for x in zip(*pairs))
    p45, u45, _ = _shears(-math.pi / 4)
    return plan1d, signs, (a, b, p45, u45)


def _rnd(x):
    # values are integers held in float64 (exact below 2**53)
    return np.floor(x + 0.5)


def _fwd_axis0(x, plan, signs):
    for j, i, p, u, neg in plan:
        shape = (-1,) + (1,) * (x.ndim - 1)
        a, b = x[j] * neg.reshape(shape), x[i] * neg.reshape(shape)
        p, u = p.reshape(shape), u.reshape(shape)
        a = a + _rnd(p * b)
        b = b + _rnd(u * a)
        a = a + _rnd(p * b)
        x[j], x[i] = a, b
    x *= signs.reshape((-1,) + (1,) * (x.ndim - 1))
    return x


def _inv_axis0(x, plan, signs):
    x *= signs.reshape((-1,) + (1,) * (x.ndim - 1))
    for j, i, p, u, neg in reversed(plan):
        shape = (-1,) + (1,) * (x.ndim - 1)
        a, b = x[j], x[i]
        p, u = p.reshape(shape), u.reshape(shape)
        a = a - _rnd(p * b)
        b = b - _rnd(u * a)
        a = a - _rnd(p * b)
        x[j], x[i] = a * neg.reshape(shape), b * neg.reshape(shape)
    return x


def int_forward(blocks: np.ndarray) -> np.ndarray:
    """Integer DRT of tiles ``(..., 8, 8)`` -> ``(..., 64)``."""
    plan, signs, (pa, pb, p45, u45) = _lifting_plan()
    x = np.asarray(blocks, dtype=np.float64)
    lead = x.shape[:-2]
    t = np.moveaxis(x.reshape((-1, N, N)), (1, 2), (0, 1)).copy()  # (8 rows, 8 cols, n)
    t = _fwd_axis0(t, plan, signs)  # along rows index (vertical frequency)
    t = np.moveaxis(_fwd_axis0(np.moveaxis(t, 1, 0).copy(), plan, signs), 0, 1)
    s = t.reshape(N * N, -1)
    a, b = s[pa], s[pb]
    a = a + _rnd(p45 * b)
    b = b + _rnd(u45 * a)
    a = a + _rnd(p45 * b)
    s[pa], s[pb] = a, b
    return s.T.reshape(lead + (N * N,)).astype(np.int64)


def int_inverse(coeffs: np.ndarray) -> np.ndarray:
    """Exact inverse of ``int_forward``: ``(..., 64)`` -> ``(..., 8, 8)``."""
    plan, signs, (pa, pb, p45, u45) = _lifting_plan()
    c = np.asarray(coeffs, dtype=np.float64)
    lead = c.shape[:-1]
    s = c.reshape(-1, N * N).T.copy()
    a, b = s[pa], s[pb]
    a = a - _rnd(p45 * b)
    b = b - _rnd(u45 * a)
    a = a - _rnd(p45 * b)
    s[pa], s[pb] = a, b
    t = s.reshape(N, N, -1)
    t = np.moveaxis(_inv_axis0(np.moveaxis(t, 1, 0).copy(), plan, signs), 0, 1)
    t = _inv_axis0(t.copy(), plan, signs)
    return np.moveaxis(t, (0, 1), (1, 2)).reshape(lead + (N, N)).astype(np.int64)
