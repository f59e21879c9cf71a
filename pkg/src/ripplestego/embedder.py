"""Embedding and extraction pipeline.

Every 8x8 block goes through an integer block transform that is a bijection on
Z^64 (5/3 lifting wavelet, or the lifting realization of the block ripplet
transform). The receiver recomputes the selection from ``sign(c) * (|c| >> k)``,
which k-LSB substitution leaves unchanged, so decoding is exact whenever the
stego pixels stay inside [0, 255].
"""

from __future__ import annotations

import json
import math
import random
import zlib
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from typing import Callable

import numpy as np

from . import crypto_layer as cl
from .ga_engine import AgaParams, evolve
from .image_core import HistogramMap, Image, histogram_modify, histogram_restore, merge_blocks, split_blocks
from .metrics import psnr, psnr_from_sse
from .transform import drt as drt_mod
from .transform.drt import TransformParams, int_forward, int_inverse, orientation_groups
from .transform.iwt import iwt_block_forward, iwt_block_groups, iwt_block_inverse
from .transform.selection import select_top

BS = 8
HEADER_BITS = 8 * cl.HEADER.size
LEHMER_BITS = math.ceil(math.log2(math.factorial(64)))
WINDOW = 64


class CapacityError(ValueError):
    pass


class EmbedError(RuntimeError):
    pass


@dataclass(frozen=True)
class EmbedParams:
    k: int = 2
    eta: float = 0.30
    V: int | None = None  # default: 16 (IWT) or 4 (DRT)
    mode: str = "LSB"
    transform: TransformParams = TransformParams(kind="IWT")
    use_opap: bool = True
    use_aga_mapping: bool = False
    guard: int | None = None  # default 2**k
    refine: bool | None = None  # verified pixel search; default on for DRT only
    seed: int = 0
    aga: AgaParams = AgaParams(max_generations=40)

    def __post_init__(self):
        if not 1 <= self.k <= 4:
            raise ValueError("k must lie in [1, 4]")
        if not 0.0 < self.eta < 1.0:
            raise ValueError("eta must lie in (0, 1)")
        if self.mode not in ("LSB", "Additive"):
            raise ValueError("mode must be LSB or Additive")
        if self.V is not None and self.V < 1:
            raise ValueError("V must be positive")

    @property
    def kind(self) -> str:
        return self.transform.kind

    @property
    def v(self) -> int:
        return self.V if self.V is not None else (16 if self.kind == "IWT" else 4)

    @property
    def g(self) -> int:
        return self.guard if self.guard is not None else min(16, 1 << self.k)

    @property
    def use_refine(self) -> bool:
        return self.refine if self.refine is not None else (self.kind == "DRT" and self.use_opap)

    @property
    def bits_per_block(self) -> int:
        return self.v * self.k


@dataclass(frozen=True)
class StegoKey:
    """Shared secret: an RSA key (public part for embedding, private for extraction)."""

    rsa: cl.RsaKeyPair

    @property
    def n(self) -> int:
        return self.rsa.n

    @classmethod
    def from_pair(cls, pair: cl.RsaKeyPair) -> "StegoKey":
        return cls(pair)


@dataclass
class EmbedReport:
    payload_bits: int
    capacity_bits: int
    psnr_before_opap: float
    psnr_after_opap: float
    blocks_used: int
    transform: str
    k: int
    V: int
    histogram_relocated: int
    mapping: list = field(default_factory=list)
    refined_blocks: int = 0

    def to_json(self) -> str:
        d = asdict(self)
        for name in ("psnr_before_opap", "psnr_after_opap"):
            if math.isinf(d[name]):
                d[name] = None
                d[name.replace("psnr", "infinite")] = True
        return json.dumps(d, indent=2, sort_keys=True)


# ------------------------------------------------------------------ block codec


@dataclass(frozen=True)
class BlockCodec:
    forward: Callable
    inverse: Callable
    groups: tuple


@lru_cache(maxsize=None)
def codec_for(tp: TransformParams) -> BlockCodec:
    if tp.kind == "IWT":
        return BlockCodec(iwt_block_forward, iwt_block_inverse, tuple(iwt_block_groups(BS)))
    if tp.quant_step != 1.0:
        raise ValueError("embedding uses the integer ripplet realization, which requires quant_step = 1")
    return BlockCodec(int_forward, int_inverse, tuple(orientation_groups(tp)))


def key_values(coeffs: np.ndarray, k: int) -> np.ndarray:
    """Selection key: the coefficient with its k low magnitude bits removed."""
    return np.sign(coeffs) * (np.abs(coeffs) >> k)


def select_blocks(coeffs: np.ndarray, codec: BlockCodec, V: int, k: int):
    return select_top(key_values(coeffs, k), codec.groups, V)


def decode_blocks(blocks: np.ndarray, codec: BlockCodec, V: int, k: int) -> np.ndarray:
    """Bits carried by each block, shape (n, V), in selection order."""
    c = codec.forward(blocks)
    _, idx = select_blocks(c, codec, V, k)
    return np.abs(np.take_along_axis(c, idx, 1)) & ((1 << k) - 1)


def opap_adjust(p, p_mod, k: int, upper: int | None = 256):
    """Optimal adjustment of a k-LSB substituted value.

    Moves ``p_mod`` by 2**k towards ``p`` when the error exceeds 2**(k-1), unless
    that would leave [0, upper). ``upper=None`` lifts the top bound (coefficients).
    """
    p = np.asarray(p, dtype=np.int64)
    q = np.asarray(p_mod, dtype=np.int64)
    step, half = 1 << k, 1 << (k - 1)
    d = q - p
    down = (d > half) & (d < step) & (q >= step)
    up = (d < -half) & (d > -step)
    if upper is not None:
        up &= q < upper - step
    out = np.where(down, q - step, np.where(up, q + step, q))
    return out if out.ndim else int(out)


def lsb_substitute(values, bits, k: int):
    mask = (1 << k) - 1
    return (np.asarray(values, dtype=np.int64) & ~mask) | np.asarray(bits, dtype=np.int64)


def additive_embed(r, s, eta: float = 0.30):
    """R^S = R + eta * S * R with S in {-1, +1}."""
    return np.asarray(r, dtype=float) + eta * np.asarray(s, dtype=float) * np.asarray(r, dtype=float)


def additive_detect(received, reference):
    """Non-blind sign recovery and a correlation weight W in [0, 1].

    S is read from the sign of (received - reference) relative to sign(reference).
    W is the mean agreement between that decision and the magnitude ratio test.
    """
    rec = np.asarray(received, dtype=float)
    ref = np.asarray(reference, dtype=float)
    diff = (rec - ref) * np.sign(ref)
    s = np.where(diff >= 0, 1, -1)
    usable = np.abs(ref) > 0
    agree = np.sign(np.abs(rec) - np.abs(ref)) == s
    w = float(agree[usable].mean()) if usable.any() else 0.0
    return s, w


# ------------------------------------------------------------------ block embedding


def _set_selected(c, idx, mags):
    sign = np.where(np.take_along_axis(c, idx, 1) < 0, -1, 1)
    out = c.copy()
    np.put_along_axis(out, idx, sign * mags, 1)
    return out


def _in_range(x):
    return (x >= 0).all(axis=(-1, -2)) & (x <= 255).all(axis=(-1, -2))


def _sse(a, b):
    d = a.astype(np.int64) - b.astype(np.int64)
    return (d * d).sum(axis=(-1, -2))


def _repair_range(x, c, idx, mags, bits, codec, V, k):
    """Greedy search over +-2^k magnitude alternatives to bring a block into range."""
    step = 1 << k
    cur = mags.copy()

    def overflow(m):
        y = codec.inverse(_set_selected(c[None], idx[None], m[None]))[0]
        return float(np.clip(-y, 0, None).sum() + np.clip(y - 255, 0, None).sum()), y

    best, y = overflow(cur)
    for _ in range(4 * V):
        if best == 0:
            break
        improved = False
        for j in range(V):
            for delta in (-step, step):
                m = cur.copy()
                m[j] += delta
                if m[j] < 0:
                    continue
                ov, yy = overflow(m)
                if ov < best:
                    best, y, cur, improved = ov, yy, m, True
        if not improved:
            break
    if best == 0 and np.array_equal(decode_blocks(y[None], codec, V, k)[0], bits):
        return y
    return None


def _perturbations():
    """Sparse integer pixel moves grouped into tiers of increasing squared cost."""
    n = BS * BS
    singles = []
    for i in range(n):
        for s in (1, -1):
            w = np.zeros(n, np.int64)
            w[i] = s
            singles.append(w)
    pairs = []
    for i in range(n):
        r, c = divmod(i, BS)
        for j in ([i + 1] if c < BS - 1 else []) + ([i + BS] if r < BS - 1 else []):
            for s1 in (1, -1):
                for s2 in (1, -1):
                    w = np.zeros(n, np.int64)
                    w[i], w[j] = s1, s2
                    pairs.append(w)
    doubles = [2 * w for w in singles]
    tiers = [np.zeros((1, n), np.int64), np.array(singles), np.array(pairs), np.array(doubles)]
    return [t.reshape(-1, BS, BS) for t in tiers]


_TIERS = None


def _search(x, bits, best_sse, best_y, codec, V, k, tp, seed, budget=150_000, n_tiers=4, n_dither=16):
    """Verified search for lower-distortion stego blocks.

    Candidates are the cover block plus sparse moves, then dithered moves along
    the selected atoms. A candidate counts only if the exact decoder returns the
    wanted bits and every pixel is in range.
    """
    global _TIERS
    if _TIERS is None:
        _TIERS = _perturbations()
    n = len(x)
    best_sse = best_sse.copy()
    best_y = best_y.copy()
    found = np.zeros(n, bool)

    def try_set(blocks_idx, cands):  # cands: (m, c, 8, 8) absolute pixel candidates
        m, c = cands.shape[:2]
        flat = cands.reshape(-1, BS, BS)
        ok = _in_range(flat).reshape(m, c)
        dec = decode_blocks(np.clip(flat, 0, 255), codec, V, k).reshape(m, c, V)
        ok &= (dec == bits[blocks_idx][:, None, :]).all(-1)
        cost = _sse(cands, x[blocks_idx][:, None])
        cost = np.where(ok, cost, np.iinfo(np.int64).max)
        j = np.argmin(cost, axis=1)
        cj = cost[np.arange(m), j]
        better = cj < best_sse[blocks_idx]
        sel = blocks_idx[better]
        best_sse[sel] = cj[better]
        best_y[sel] = cands[better, j[better]]
        found[sel] = True

    for tier in _TIERS[:n_tiers]:
        tier_cost = int((tier[0].astype(np.int64) ** 2).sum())
        todo = np.flatnonzero(best_sse > tier_cost)
        chunk = max(1, budget // len(tier))
        for s in range(0, len(todo), chunk):
            bi = todo[s : s + chunk]
            try_set(bi, x[bi][:, None] + tier[None])

    # dithered moves along the selected atoms
    if tp.kind == "DRT":
        basis = drt_mod.basis_matrix()
        rng = np.random.default_rng(seed)
        step = 1 << k
        todo = np.flatnonzero(best_sse > 2)
        c_all = codec.forward(x[todo]) if len(todo) else None
        for t, b in enumerate(todo):
            c = c_all[t]
            _, idx = select_blocks(c[None], codec, V, k)
            idx = idx[0]
            mag = np.abs(c[idx])
            sgn = np.where(c[idx] < 0, -1, 1)
            target = lsb_substitute(mag, bits[b], k)
            opts = [[tv] + ([tv - step] if tv >= step else []) + [tv + step] for tv in target]
            deltas = np.array(np.meshgrid(*opts, indexing="ij")).reshape(V, -1).T - mag
            moves = (deltas * sgn) @ basis[idx]
            moves = np.repeat(moves, n_dither, axis=0)
            cands = np.floor(moves + rng.random(moves.shape)).astype(np.int64)
            try_set(np.array([b]), (x[b].reshape(1, -1) + cands).reshape(1, -1, BS, BS))
    return best_y, best_sse, found


def _plain_embed(x, bits, codec, V, k):
    """LSB substitution with range repair. Returns (coeffs, idx, mags, plain mags, blocks, failed)."""
    c = codec.forward(x)
    _, idx = select_blocks(c, codec, V, k)
    mags = np.abs(np.take_along_axis(c, idx, 1))
    plain_m = lsb_substitute(mags, bits, k)
    plain = codec.inverse(_set_selected(c, idx, plain_m))
    failed = np.zeros(len(x), bool)
    for b in np.flatnonzero(~_in_range(plain)):
        y = _repair_range(x[b], c[b], idx[b], plain_m[b], bits[b], codec, V, k)
        if y is None:
            failed[b] = True
        else:
            plain[b] = y
    return c, idx, mags, plain_m, plain, failed


def feasible_blocks(x, bits, params: EmbedParams) -> np.ndarray:
    """True where plain LSB embedding stays inside [0, 255] (after repair)."""
    x = np.asarray(x, dtype=np.int64)
    return ~_plain_embed(x, np.asarray(bits, dtype=np.int64), codec_for(params.transform), params.v, params.k)[-1]


def embed_blocks(x, bits, params: EmbedParams, seed: int = 0):
    """Embed ``bits`` (n, V) into blocks ``x`` (n, 8, 8).

    Returns (plain stego blocks, final stego blocks, number of refined blocks).
    """
    codec = codec_for(params.transform)
    V, k = params.v, params.k
    x = np.asarray(x, dtype=np.int64)
    bits = np.asarray(bits, dtype=np.int64)
    c, idx, mags, plain_m, plain, failed = _plain_embed(x, bits, codec, V, k)
    if failed.any():
        raise EmbedError(f"block {int(np.flatnonzero(failed)[0])} cannot hold its bits inside [0,255]; raise the guard")
    final = plain.copy()
    refined = 0
    if params.use_opap:
        op_m = opap_adjust(mags, plain_m, k, upper=None)
        op = codec.inverse(_set_selected(c, idx, op_m))
        good = _in_range(op)
        good[good] &= (decode_blocks(op[good], codec, V, k) == bits[good]).all(1)
        better = good & (_sse(op, x) < _sse(final, x))
        final[better] = op[better]
        if params.use_refine:
            best_y, _, found = _search(x, bits, _sse(final, x), final, codec, V, k, params.transform, seed)
            final = best_y
            refined = int(found.sum())
    return plain, final, refined


# ------------------------------------------------------------------ bit plumbing


def bytes_to_bits(data: bytes) -> np.ndarray:
    return np.unpackbits(np.frombuffer(data, dtype=np.uint8)).astype(np.int64)


def bits_to_bytes(bits: np.ndarray) -> bytes:
    return np.packbits(np.asarray(bits, dtype=np.uint8)).tobytes()


def bits_to_segments(bits: np.ndarray, V: int, k: int) -> np.ndarray:
    """Flat bit array (multiple of V*k) -> (segments, V) integers, MSB first."""
    b = np.asarray(bits, dtype=np.int64).reshape(-1, V, k)
    return (b << np.arange(k - 1, -1, -1)).sum(-1)


def segments_to_bits(seg: np.ndarray, k: int) -> np.ndarray:
    seg = np.asarray(seg, dtype=np.int64)
    return ((seg[..., None] >> np.arange(k - 1, -1, -1)) & 1).reshape(-1)


def lehmer_encode(perm) -> int:
    perm = list(perm)
    items = sorted(perm)
    code = 0
    for p in perm:
        i = items.index(p)
        code = code * len(items) + i
        items.pop(i)
    return code


def lehmer_decode(code: int, n: int = WINDOW) -> list[int]:
    digits = []
    for base in range(1, n + 1):
        digits.append(code % base)
        code //= base
    items = list(range(n))
    return [items.pop(d) for d in reversed(digits)]


def int_to_bits(value: int, width: int) -> np.ndarray:
    return np.array([(value >> (width - 1 - i)) & 1 for i in range(width)], dtype=np.int64)


def bits_to_int(bits) -> int:
    out = 0
    for b in bits:
        out = (out << 1) | int(b)
    return out


# ------------------------------------------------------------------ layout


def full_block_ids(grid) -> np.ndarray:
    """Flat indices (channel, row, col order) of blocks without padding."""
    c, rows, cols = grid.blocks.shape[:3]
    full_r = grid.height // BS
    full_c = grid.width // BS
    ids = np.arange(c * rows * cols).reshape(c, rows, cols)
    return ids[:, :full_r, :full_c].reshape(-1)


def scramble(n_blocks: int, key_n: int) -> np.ndarray:
    rng = np.random.default_rng(cl.permutation_seed(key_n))
    return rng.permutation(n_blocks)


def layout(frame_bits: int, bpb: int, aga: bool):
    """(preamble segments P, mapped windows W, data segments D)."""
    data_bits = frame_bits - HEADER_BITS
    d = -(-data_bits // bpb)
    w = d // WINDOW if aga else 0
    pre = HEADER_BITS + (16 + LEHMER_BITS * w if aga else 0)
    return -(-pre // bpb), w, d


def capacity(img: Image, params: EmbedParams) -> int:
    """Bits the cover can carry: full blocks x V x k, summed over channels."""
    if params.k < 1:
        raise ValueError("k must be positive")
    grid = split_blocks(img)
    return len(full_block_ids(grid)) * params.v * params.k


def max_message_bytes(img: Image, params: EmbedParams, key: StegoKey, bits: float | None = None) -> int:
    """Largest plaintext that fits ``bits`` of embedding (default: full capacity), ignoring the guard map."""
    cap = capacity(img, params) if bits is None else int(bits)
    kb = key.rsa.key_bytes
    lo, hi = 0, cap // 8
    while lo < hi:
        mid = (lo + hi + 1) // 2
        fb = 8 * (cl.HEADER.size + cl.cipher_length(mid, kb))
        p, w, d = layout(fb, params.bits_per_block, params.use_aga_mapping)
        if (p + d) * params.bits_per_block <= cap:
            lo = mid
        else:
            hi = mid - 1
    return lo


# ------------------------------------------------------------------ AGA block mapping


def window_cost_matrix(x_win, seg_win, params: EmbedParams):
    """SSE of placing each of the window's segments in each of its blocks."""
    m = len(x_win)
    xs = np.repeat(x_win[None], m, axis=0).reshape(-1, BS, BS)  # [seg, block]
    bs = np.repeat(seg_win[:, None], m, axis=1).reshape(-1, seg_win.shape[-1])
    quick = replace(params, refine=False)
    try:
        _, final, _ = embed_blocks(xs, bs, quick)
    except EmbedError:
        return None
    return _sse(final, xs).reshape(m, m).astype(float)


def aga_block_mapping(x_win, seg_win, params: EmbedParams, aga: AgaParams | None = None):
    """Permutation (0-based) assigning segment j to block perm[j], maximizing window PSNR."""
    aga = aga or params.aga
    m = len(x_win)
    cost = window_cost_matrix(x_win, seg_win, params)
    if cost is None:
        return list(range(m)), None
    cols = np.arange(m)

    def fitness(genome):
        sse = cost[cols, np.asarray(genome) - 1].sum()
        return min(psnr_from_sse(sse, m * BS * BS), 1000.0)

    rng = np.random.default_rng(aga.seed)
    pop = [np.arange(1, m + 1)] + [rng.permutation(m) + 1 for _ in range(aga.population_size - 1)]
    best, trace = evolve(pop, fitness, aga)
    return (np.asarray(best) - 1).tolist(), trace


# ------------------------------------------------------------------ embed / extract


def _guarded_cover(cover: Image, grid, levels: dict, guard: int):
    """Pull each block id in ``levels`` inside [g, 255 - g] for its own guard g.

    A block touching only one end moves by a constant (one entry in the map);
    otherwise its out-of-range pixels are clipped and recorded individually.
    """
    c, rows, cols = grid.blocks.shape[:3]
    tiles = grid.blocks.reshape(-1, BS, BS).astype(np.int64)
    shifts, clip = [], {}
    for b, g in sorted(levels.items()):
        lo, hi = int(tiles[b].min()), int(tiles[b].max())
        up, down = max(0, g - lo), max(0, hi - (255 - g))
        if up and not down and hi + up <= 255 - g:
            shifts.append((b, up))
        elif down and not up and lo - down >= g:
            shifts.append((b, -down))
        else:
            clip.setdefault(g, []).append(b)
    shifts = np.array(shifts, np.int64).reshape(-1, 2)
    tiles[shifts[:, 0]] += shifts[:, 1][:, None, None]
    shifted = split_blocks(cover)
    shifted.blocks = tiles.reshape(shifted.blocks.shape).astype(np.uint8)
    out, idx, vals = merge_blocks(shifted), [np.zeros(0, np.int64)], [np.zeros(0, np.uint8)]
    for g, ids in sorted(clip.items()):
        mask = np.zeros(grid.blocks.shape, bool)
        mask.reshape(-1, BS, BS)[ids] = True
        full = mask.transpose(1, 3, 2, 4, 0).reshape(rows * BS, cols * BS, c)[: grid.height, : grid.width]
        out, part = histogram_modify(out, g, mask=full)
        idx.append(part.indices)
        vals.append(part.values)
    idx, vals = np.concatenate(idx), np.concatenate(vals)
    order = np.argsort(idx, kind="stable")
    lo = min(levels.values(), default=guard)
    return out, HistogramMap(lo, 255 - lo, idx[order], vals[order], shifts)


def _assign(raw: bytes, order, blocks, params: EmbedParams):
    """Segments and their target block ids for a frame. Returns (target, segs, mapping)."""
    V, k, bpb = params.v, params.k, params.bits_per_block
    p_seg, n_win, d_seg = layout(8 * len(raw), bpb, params.use_aga_mapping)
    bits = bytes_to_bits(raw)
    head, body = bits[:HEADER_BITS], bits[HEADER_BITS:]
    body = np.concatenate([body, np.zeros(d_seg * bpb - len(body), np.int64)])
    body_seg = bits_to_segments(body, V, k)
    data_slots = order[p_seg : p_seg + d_seg]
    mapping = []
    if params.use_aga_mapping:
        for w in range(n_win):
            sl = slice(w * WINDOW, (w + 1) * WINDOW)
            perm, _ = aga_block_mapping(blocks[data_slots[sl]], body_seg[sl], params, replace(params.aga, seed=params.aga.seed + w))
            mapping.append(perm)
        pre = [head, int_to_bits(n_win, 16)] + [int_to_bits(lehmer_encode(pm), LEHMER_BITS) for pm in mapping]
        pre_bits = np.concatenate(pre)
    else:
        pre_bits = head
    pre_bits = np.concatenate([pre_bits, np.zeros(p_seg * bpb - len(pre_bits), np.int64)])
    target = np.empty(p_seg + d_seg, dtype=np.int64)
    target[:p_seg] = order[:p_seg]
    slots = data_slots.copy()
    for w, perm in enumerate(mapping):
        base = w * WINDOW
        slots[base + np.arange(WINDOW)] = data_slots[base + np.asarray(perm)]
    target[p_seg:] = slots
    segs = np.concatenate([bits_to_segments(pre_bits, V, k), body_seg])
    return target, segs, mapping


def embed(cover: Image, plaintext: bytes, key: StegoKey, params: EmbedParams = EmbedParams()):
    """Encrypt, frame and hide ``plaintext``. Returns (stego Image, EmbedReport).

    The histogram guard is applied only to blocks whose plain embedding would leave
    [0, 255], starting at 1 and doubling up to the configured guard per block. Its
    location map travels in the frame so the cover stays recoverable.
    """
    if params.mode != "LSB":
        raise ValueError("embed() implements LSB mode; use additive_embed for the non-blind demo")
    cap = capacity(cover, params)
    if not plaintext:
        return cover, EmbedReport(0, cap, math.inf, math.inf, 0, params.kind, params.k, params.v, 0)
    bpb = params.bits_per_block
    grid = split_blocks(cover)
    ids = full_block_ids(grid)
    order = ids[scramble(len(ids), key.n)]
    rng = random.Random(f"pad:{params.seed}:{key.n}:{len(plaintext)}")
    cipher = cl.encrypt(plaintext, key.rsa, rng=rng)
    flags = cl.FLAG_MAPPING if params.use_aga_mapping else 0
    crc = zlib.crc32(plaintext)

    levels: dict = {}
    guarded, hmap = cover, HistogramMap(params.g, 255 - params.g)
    for _ in range(256):
        extra = hmap.to_bytes() if len(hmap) else b""
        payload = cl.Payload(cl.VERSION, flags | (cl.FLAG_HISTMAP if extra else 0), len(plaintext), crc, cipher, extra)
        raw = cl.frame(payload)
        p_seg, _, d_seg = layout(8 * len(raw), bpb, params.use_aga_mapping)
        if p_seg + d_seg > len(order):
            raise CapacityError(f"payload needs {(p_seg + d_seg) * bpb} bits, capacity is {cap}")
        blocks = split_blocks(guarded).flat().astype(np.int64)
        target, segs, mapping = _assign(raw, order, blocks, params)
        bad = target[~feasible_blocks(blocks[target], segs, params)].tolist()
        raise_ = [b for b in bad if levels.get(b, 0) < params.g]
        if not raise_:
            break  # remaining failures (if any) surface as EmbedError below
        for b in raise_:
            levels[b] = min(params.g, 2 * levels[b]) if b in levels else 1
        guarded, hmap = _guarded_cover(cover, grid, levels, params.g)
    else:  # pragma: no cover - guard levels only grow and are bounded
        raise EmbedError("guard selection did not converge")

    x = blocks[target]
    plain, final, refined = embed_blocks(x, segs, params, seed=params.seed)
    before = blocks.copy()
    before[target] = plain
    after = blocks.copy()
    after[target] = final

    def assemble(flat):
        g = split_blocks(guarded)
        g.blocks = flat.reshape(g.blocks.shape).astype(np.uint8)
        return merge_blocks(g)

    stego_plain, stego = assemble(before), assemble(after)
    report = EmbedReport(
        payload_bits=8 * len(raw),
        capacity_bits=cap,
        psnr_before_opap=psnr(cover, stego_plain),
        psnr_after_opap=psnr(cover, stego),
        blocks_used=int(len(target)),
        transform=params.kind,
        k=params.k,
        V=params.v,
        histogram_relocated=len(hmap),
        mapping=mapping,
        refined_blocks=refined,
    )
    return stego, report


def _read_stream(stego: Image, key: StegoKey, params: EmbedParams):
    """Decode the raw frame bytes plus the guard map from a stego image."""
    V, k, bpb = params.v, params.k, params.bits_per_block
    grid = split_blocks(stego)
    ids = full_block_ids(grid)
    order = ids[scramble(len(ids), key.n)]
    blocks = grid.flat().astype(np.int64)
    codec = codec_for(params.transform)
    seg_bits = {}

    def bits_of(block_ids):
        need = [b for b in block_ids if b not in seg_bits]
        if need:
            dec = decode_blocks(blocks[need], codec, V, k)
            for b, row in zip(need, dec):
                seg_bits[b] = segments_to_bits(row, k)
        return np.concatenate([seg_bits[b] for b in block_ids]) if len(block_ids) else np.zeros(0, np.int64)

    n_head = -(-HEADER_BITS // bpb)
    if n_head > len(order):
        raise cl.NoPayloadError("no payload found (image too small)")
    head = bits_to_bytes(bits_of(order[:n_head])[:HEADER_BITS])
    _, flags, length, _ = cl.parse_header(head)
    kb = key.rsa.key_bytes
    clen = cl.cipher_length(length, kb)
    n_win = 0
    mapping = []
    if flags & cl.FLAG_MAPPING:
        n_pre = -(-(HEADER_BITS + 16) // bpb)
        if n_pre > len(order):
            raise cl.IntegrityError("payload corrupted")
        n_win = bits_to_int(bits_of(order[:n_pre])[HEADER_BITS : HEADER_BITS + 16])
        pre_len = HEADER_BITS + 16 + LEHMER_BITS * n_win
        p_seg = -(-pre_len // bpb)
        if p_seg > len(order):
            raise cl.IntegrityError("payload corrupted")
        pre = bits_of(order[:p_seg])
        for w in range(n_win):
            off = HEADER_BITS + 16 + w * LEHMER_BITS
            code = bits_to_int(pre[off : off + LEHMER_BITS])
            if code >= math.factorial(WINDOW):
                raise cl.IntegrityError("payload corrupted")
            mapping.append(lehmer_decode(code))
    else:
        p_seg = n_head

    def body_bits(n_bits):
        d = -(-n_bits // bpb)
        if p_seg + d > len(order):
            raise cl.IntegrityError("payload corrupted (declared length exceeds capacity)")
        slots = order[p_seg : p_seg + d].copy()
        data_slots = order[p_seg : p_seg + d]
        for w, perm in enumerate(mapping):
            base = w * WINDOW
            if base + WINDOW <= d:
                slots[base + np.arange(WINDOW)] = data_slots[base + np.asarray(perm)]
        return bits_of(list(slots))[:n_bits]

    nbits = 8 * clen + (32 if flags & cl.FLAG_HISTMAP else 0)
    body = body_bits(nbits)
    extra_len = 0
    if flags & cl.FLAG_HISTMAP:
        extra_len = bits_to_int(body[8 * clen : 8 * clen + 32])
        if extra_len > len(order) * bpb // 8:
            raise cl.IntegrityError("payload corrupted")
        body = body_bits(nbits + 8 * extra_len)
    raw = head + bits_to_bytes(body)
    return raw


def restore_guard(img: Image, hmap: HistogramMap | None) -> Image:
    """Undo the guard on an image (exact for pixels the payload did not touch)."""
    return img if hmap is None else histogram_restore(img, hmap)


def extract(stego: Image, key: StegoKey, params: EmbedParams = EmbedParams(), with_map: bool = False):
    """Recover the plaintext. Raises NoPayloadError or IntegrityError."""
    raw = _read_stream(stego, key, params)
    plain, payload = cl.open_payload(raw, key.rsa)
    if with_map:
        hmap = HistogramMap.from_bytes(payload.extra) if payload.extra else None
        return plain, hmap
    return plain


def payload_oracle(key: StegoKey, params: EmbedParams, expected: bytes):
    """Callable image -> bool that checks the payload still extracts bit-exactly."""

    def check(img: Image) -> bool:
        try:
            return extract(img, key, params) == expected
        except (cl.NoPayloadError, cl.IntegrityError, ValueError):
            return False

    return check


def used_blocks(stego: Image, key: StegoKey, params: EmbedParams) -> np.ndarray:
    """Flat ids of blocks carrying payload (for local integrity checks)."""
    raw = _read_stream(stego, key, params)
    _, flags, _, _ = cl.parse_header(raw)
    grid = split_blocks(stego)
    ids = full_block_ids(grid)
    order = ids[scramble(len(ids), key.n)]
    p, _, d = layout(8 * len(raw), params.bits_per_block, bool(flags & cl.FLAG_MAPPING))
    return np.sort(order[: p + d])


def block_oracle(stego: Image, key: StegoKey, params: EmbedParams):
    """Fast local integrity test ``(flat_block_id, 8x8 pixels) -> bool``.

    Transforms are block-local, so the payload survives a change to one block iff
    that block still decodes to the same segment (unused blocks are free).
    """
    if stego.channels != 1 and stego.channels != 3:
        raise ValueError("unsupported channel count")
    ids = set(int(b) for b in used_blocks(stego, key, params))
    codec = codec_for(params.transform)
    flat = split_blocks(stego).flat().astype(np.int64)
    expected = {}

    def check(block_id: int, pixels: np.ndarray) -> bool:
        if block_id not in ids:
            return True
        if block_id not in expected:
            expected[block_id] = decode_blocks(flat[[block_id]], codec, params.v, params.k)[0]
        got = decode_blocks(np.asarray(pixels, np.int64)[None], codec, params.v, params.k)[0]
        return bool(np.array_equal(got, expected[block_id]))

    return check
