"""Per-block orientation choice (highest variance) and top-V coefficient selection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .drt import atom_labels, orientation_groups
from .iwt import IWT_ORIENTATIONS
from .pyramid import CoefficientPyramid


def population_variance(values) -> float:
    v = np.asarray(values, dtype=float)
    return float(np.mean((v - v.mean()) ** 2))


@dataclass
class SelectedCoeffs:
    theta: np.ndarray  # (blocks,)
    indices: np.ndarray  # (blocks, V) positions in the block coefficient vector
    R_blocks: np.ndarray  # (blocks, V) selected values, one column set per block

    @property
    def R(self) -> np.ndarray:
        """All blocks' selections concatenated into one vector."""
        return self.R_blocks.reshape(-1)


def _padded(groups):
    width = max(len(g) for g in groups)
    gidx = np.full((len(groups), width), -1, dtype=np.int64)
    for t, g in enumerate(groups):
        gidx[t, : len(g)] = g
    return gidx


def best_orientation(values: np.ndarray, groups) -> np.ndarray:
    """Argmax of population variance per block; ties go to the lowest index.

    Integer input is compared exactly as fractions cnt*sum(x^2) - sum(x)^2 over cnt^2.
    """
    values = np.asarray(values)
    exact = np.issubdtype(values.dtype, np.integer)
    best_num = best_den = None
    best = np.zeros(values.shape[0], dtype=np.int64)
    for t, g in enumerate(groups):
        v = values[:, g]
        cnt = len(g)
        if exact:
            v = v.astype(np.int64)
            num, den = cnt * (v * v).sum(1) - v.sum(1) ** 2, cnt * cnt
        else:
            num, den = v.var(1), 1
        if t == 0:
            best_num, best_den = num, np.full_like(num, den)
            continue
        better = num * best_den > best_num * den
        best = np.where(better, t, best)
        best_num = np.where(better, num, best_num)
        best_den = np.where(better, den, best_den)
    return best


def select_top(values: np.ndarray, groups, V: int, theta: np.ndarray | None = None):
    """Per block: the V largest-magnitude members of group theta, returned in
    increasing order of magnitude (ties by lower index)."""
    values = np.asarray(values)
    if V < 1 or V > min(len(g) for g in groups):
        raise ValueError(f"V={V} exceeds the smallest orientation group ({min(len(g) for g in groups)})")
    if theta is None:
        theta = best_orientation(values, groups)
    gidx = _padded(groups)
    cand = gidx[theta]  # (blocks, width)
    valid = cand >= 0
    mag = np.where(valid, np.abs(np.take_along_axis(values, np.where(valid, cand, 0), 1)), -1)
    if np.issubdtype(values.dtype, np.integer):
        mag = mag.astype(np.int64)
    top = np.argsort(-mag, axis=1, kind="stable")[:, :V]
    idx = np.take_along_axis(cand, top, 1)
    tmag = np.take_along_axis(mag, top, 1)
    order = np.lexsort((idx, tmag), axis=1)
    idx = np.take_along_axis(idx, order, 1)
    return theta, idx


def block_coefficients(pyr: CoefficientPyramid, block_size: int = 8):
    """(values per block, orientation groups) for a pyramid."""
    if pyr.kind == "DRT":
        coeffs = pyr.meta["coeffs"]
        return coeffs.reshape(-1, coeffs.shape[-1]), orientation_groups(pyr.meta["params"])
    q = block_size // 2
    parts = []
    for name in IWT_ORIENTATIONS:
        band = np.asarray(pyr.subbands[(1, name)])
        h, w = band.shape
        rows, cols = h // q, w // q
        parts.append(band[: rows * q, : cols * q].reshape(rows, q, cols, q).swapaxes(1, 2).reshape(rows * cols, q * q))
    values = np.concatenate(parts, axis=1)
    groups = [np.arange(q * q) + q * q * i for i in range(len(parts))]
    return values, groups


def select_orientation(pyr: CoefficientPyramid, block: int) -> int:
    values, groups = block_coefficients(pyr)
    if not 0 <= block < len(values):
        raise IndexError("block index out of range")
    return int(best_orientation(values[block : block + 1], groups)[0])


def build_selection(pyr: CoefficientPyramid, V: int) -> SelectedCoeffs:
    values, groups = block_coefficients(pyr)
    theta, idx = select_top(values, groups, V)
    return SelectedCoeffs(theta, idx, np.take_along_axis(values, idx, 1))


__all__ = [
    "SelectedCoeffs",
    "atom_labels",
    "best_orientation",
    "block_coefficients",
    "build_selection",
    "population_variance",
    "select_orientation",
    "select_top",
]
