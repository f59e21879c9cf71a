"""RS steganalysis (regular/singular groups) and the GA block-adjustment shield."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .ga_engine import BIT_TRIPLE, AgaParams, evolve
from .image_core import Image
from .metrics import psnr_from_sse

CANONICAL_MASK = (0, 1, 1, 0)
BS = 8


@dataclass(frozen=True)
class ShieldParams:
    Th: float = 1.8
    alpha: float = 25.0
    trials: int = 50
    stop_ratio: float = 0.05
    group_size: int = 4
    max_blocks: int | None = None
    psnr_cap: float = 80.0
    seed: int = 0

    def __post_init__(self):
        if self.Th <= 1:
            raise ValueError("Th must exceed 1")
        if not 0 < self.stop_ratio <= 1:
            raise ValueError("stop_ratio must lie in (0, 1]")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")


@dataclass
class RsStats:
    R_m: float
    S_m: float
    R_neg: float
    S_neg: float

    @property
    def dR(self) -> float:
        return self.R_m - self.R_neg

    @property
    def dS(self) -> float:
        return self.S_m - self.S_neg

    def relative(self) -> tuple[float, float]:
        return abs(self.dR) / max(self.R_m, 0.01), abs(self.dS) / max(self.S_m, 0.01)

    def as_dict(self) -> dict:
        return {"rm": self.R_m, "sm": self.S_m, "r_neg": self.R_neg, "s_neg": self.S_neg, "dR": self.dR, "dS": self.dS}


def flip(x, kind: str):
    """Flipping on the extended range [-1, 256]: positive 2i<->2i+1, negative 2i-1<->2i."""
    x = np.asarray(x, dtype=np.int64)
    if kind == "zero":
        out = x
    elif kind == "positive":
        out = x ^ 1
    elif kind == "negative":
        out = ((x + 1) ^ 1) - 1
    else:
        raise ValueError(f"unknown flip kind {kind!r}")
    return out if out.ndim else int(out)


def apply_mask(groups: np.ndarray, mask) -> np.ndarray:
    """Flip each column of ``groups`` (..., n) according to mask values in {-1, 0, 1}."""
    m = np.asarray(mask, dtype=np.int64)
    g = np.asarray(groups, dtype=np.int64)
    return np.where(m == 1, g ^ 1, np.where(m == -1, ((g + 1) ^ 1) - 1, g))


def smoothness(group) -> np.ndarray:
    g = np.asarray(group, dtype=np.int64)
    if g.shape[-1] < 2:
        raise ValueError("group needs at least two pixels")
    out = np.abs(np.diff(g, axis=-1)).sum(-1)
    return out if out.ndim else int(out)


def classify_group(group, mask) -> str:
    if len(group) != len(mask):
        raise ValueError("mask length differs from group length")
    before, after = smoothness(group), smoothness(apply_mask(group, mask))
    return "Regular" if after > before else "Singular" if after < before else "Unusable"


def _groups(img, n: int) -> np.ndarray:
    flat = (img.data if isinstance(img, Image) else np.asarray(img)).astype(np.int64).reshape(-1)
    count = flat.size // n
    if count == 0:
        raise ValueError("image smaller than one group")
    return flat[: count * n].reshape(count, n)


def _rs_counts(groups: np.ndarray, mask) -> tuple[float, float]:
    f0 = smoothness(groups)
    f1 = smoothness(apply_mask(groups, mask))
    return float((f1 > f0).mean()), float((f1 < f0).mean())


def rs_statistics(img, mask=CANONICAL_MASK, n: int = 4) -> RsStats:
    """Regular/singular fractions for mask M (non-negative) and -M (non-positive)."""
    m = np.asarray(mask, dtype=np.int64)
    if len(m) != n:
        raise ValueError("mask length must equal group size")
    g = _groups(img, n)
    rm, sm = _rs_counts(g, np.abs(m))
    rn, sn = _rs_counts(g, -np.abs(m))
    return RsStats(rm, sm, rn, sn)


def random_masks(count: int, n: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        m = rng.integers(0, 2, n)
        if m.any():
            out.append(m)
    return np.array(out)


def detect(img, n: int = 4, masks: int = 10, seed: int = 0) -> float:
    """Mean of |dR| + |dS| over seeded random masks."""
    vals = []
    for m in random_masks(masks, n, seed):
        s = rs_statistics(img, m, n)
        vals.append(abs(s.dR) + abs(s.dS))
    return float(np.mean(vals))


# ---------------------------------------------------------------- block labels


@dataclass
class BlockLabelCounts:
    P_plus_R: int
    P_plus_S: int
    P_minus_R: int
    P_minus_S: int
    plus: str | None
    minus: str | None

    @property
    def group(self) -> str:
        if self.plus is None or self.minus is None:
            return "excluded"
        return self.plus + self.minus


def _ratio_label(r: int, s: int, th: float, sign: str):
    if r > th * s and r > 0:
        return "R" + sign
    if s > th * r and s > 0:
        return "S" + sign
    return None


def _block_trial_counts(block: np.ndarray, masks: np.ndarray, n: int):
    """(regular, singular) counts for positive masks then negative masks."""
    g = np.asarray(block, dtype=np.int64).reshape(-1, n)
    m = np.asarray(masks, dtype=np.int64)[:, None, :]
    f0 = smoothness(g).sum()
    pos = np.abs(np.diff(np.where(m == 1, g ^ 1, g), axis=-1)).sum((1, 2))
    neg = np.abs(np.diff(np.where(m == 1, ((g + 1) ^ 1) - 1, g), axis=-1)).sum((1, 2))
    return int((pos > f0).sum()), int((pos < f0).sum()), int((neg > f0).sum()), int((neg < f0).sum())


def label_block(block: np.ndarray, params: ShieldParams, masks: np.ndarray | None = None) -> BlockLabelCounts:
    if masks is None:
        masks = random_masks(params.trials, params.group_size, params.seed)
    pr, ps, mr, ms = _block_trial_counts(np.asarray(block), masks, params.group_size)
    return BlockLabelCounts(pr, ps, mr, ms, _ratio_label(pr, ps, params.Th, "+"), _ratio_label(mr, ms, params.Th, "-"))


def _tiles(plane: np.ndarray):
    h, w = plane.shape
    rows, cols = h // BS, w // BS
    return rows, cols


def label_blocks(stego: Image, params: ShieldParams = ShieldParams()) -> dict:
    """Labels for every full 8x8 block, keyed by (channel, row, col)."""
    masks = random_masks(params.trials, params.group_size, params.seed)
    out = {}
    for c in range(stego.channels):
        plane = stego.data[:, :, c]
        rows, cols = _tiles(plane)
        for r in range(rows):
            for q in range(cols):
                blk = plane[r * BS : (r + 1) * BS, q * BS : (q + 1) * BS]
                out[(c, r, q)] = label_block(blk, params, masks)
    return out


# ---------------------------------------------------------------- shield


def _satisfied(stats: RsStats, ratio: float) -> bool:
    rr, rs = stats.relative()
    return rr <= ratio and rs <= ratio


def shield_fitness(block, original, masks, alpha, n, cap, sse_rest=0.0, size=None):
    """alpha * (e1 + e2) + PSNR, e1 = P(f(F-(C)) < f(C)), e2 = P(f(F+(C)) > f(C)).

    PSNR is taken over ``size`` pixels with ``sse_rest`` squared error already spent
    elsewhere in the image (block-only when omitted), capped at ``cap``.
    """
    pr, ps, mr, ms = _block_trial_counts(block, masks, n)
    t = len(masks)
    e1, e2 = ms / t, pr / t
    d = np.asarray(block, np.int64) - np.asarray(original, np.int64)
    q = min(psnr_from_sse(sse_rest + float((d * d).sum()), size or d.size), cap)
    return alpha * (e1 + e2) + q


@dataclass
class ShieldResult:
    image: Image
    before: RsStats
    after: RsStats
    blocks_adjusted: int
    success: bool


def shield(
    stego: Image,
    oracle: Callable[[Image], bool],
    params: ShieldParams = ShieldParams(),
    aga: AgaParams = AgaParams(population_size=8, max_generations=6),
    block_oracle: Callable[[int, np.ndarray], bool] | None = None,
) -> ShieldResult:
    """Adjust R- blocks with a pixel-triple GA until the RS differentials fall within the stop ratio.

    ``block_oracle(flat_block_id, pixels)`` is an optional fast local integrity test; the
    whole-image ``oracle`` is always applied to the final result.
    """
    before = rs_statistics(stego, CANONICAL_MASK, params.group_size)
    if _satisfied(before, params.stop_ratio):
        return ShieldResult(stego, before, before, 0, True)
    work = stego.data.astype(np.int64).copy()
    masks = random_masks(params.trials, params.group_size, params.seed)
    labels = label_blocks(stego, params)
    targets = [key for key, lab in sorted(labels.items()) if lab.minus == "R-"]
    if params.max_blocks is not None:
        targets = targets[: params.max_blocks]
    adjusted = 0
    n = params.group_size
    ref = stego.data.astype(np.int64)
    sse = 0.0
    for t_i, (c, r, q) in enumerate(targets):
        sl = (slice(r * BS, (r + 1) * BS), slice(q * BS, (q + 1) * BS), c)
        original = ref[sl]
        block = work[sl].copy()
        d0 = block - original
        sse_rest = sse - float((d0 * d0).sum())
        flat_id = (c * -(-stego.height // BS) + r) * -(-stego.width // BS) + q
        flat = block.reshape(-1)
        for start in range(0, flat.size - 2, 3):
            cache = {}

            def fitness(genome, start=start):
                genome = tuple(int(v) for v in genome)
                if genome in cache:
                    return cache[genome]
                if min(genome) < 0 or max(genome) > 255:
                    cache[genome] = -math.inf
                    return -math.inf
                cand = flat.copy()
                cand[start : start + 3] = genome
                cand = cand.reshape(BS, BS)
                if block_oracle is not None and not block_oracle(flat_id, cand):
                    val = -math.inf
                else:
                    val = shield_fitness(cand, original, masks, params.alpha, n, params.psnr_cap, sse_rest, ref.size)
                cache[genome] = val
                return val

            seed_triple = tuple(int(v) for v in flat[start : start + 3])
            pop = [seed_triple] + [tuple(v ^ (2 * ((i >> b) & 1)) for b, v in enumerate(seed_triple)) for i in range(1, aga.population_size)]
            best, _ = evolve(pop, fitness, AgaParams(**{**aga.__dict__, "seed": params.seed + 7919 * t_i + start}), kind=BIT_TRIPLE)
            if fitness(best) > fitness(seed_triple):
                flat[start : start + 3] = best
            lab = label_block(flat.reshape(BS, BS), params, masks)
            if lab.P_minus_S > lab.P_minus_R:
                break
        if not np.array_equal(flat.reshape(BS, BS), work[sl]):
            d1 = flat.reshape(BS, BS) - original
            sse = sse_rest + float((d1 * d1).sum())
            work[sl] = flat.reshape(BS, BS)
            adjusted += 1
        if (t_i + 1) % 16 == 0 or t_i == len(targets) - 1:
            if _satisfied(rs_statistics(work, CANONICAL_MASK, n), params.stop_ratio):
                break
    result = Image(np.clip(work, 0, 255).astype(np.uint8))
    if not oracle(result):
        # never hand back an image that lost its payload
        return ShieldResult(stego, before, before, 0, False)
    after = rs_statistics(result, CANONICAL_MASK, n)
    return ShieldResult(result, before, after, adjusted, _satisfied(after, params.stop_ratio))
