"""Raster images, binary PGM/PPM codec, 8x8 tiling and reversible guard narrowing."""

from __future__ import annotations

import re
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np


class PnmError(ValueError):
    """Base class for netpbm parse failures."""


class MalformedHeader(PnmError):
    pass


class UnsupportedMaxval(PnmError):
    pass


class TruncatedData(PnmError):
    pass


@dataclass(frozen=True)
class Image:
    """8-bit raster. ``data`` has shape (height, width, channels)."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3 or arr.shape[2] not in (1, 3):
            raise ValueError(f"image must be HxW, HxWx1 or HxWx3, got {arr.shape}")
        if arr.size and (arr.min() < 0 or arr.max() > 255):
            raise ValueError("pixel values must lie in [0, 255]")
        arr = np.ascontiguousarray(arr, dtype=np.uint8)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def plane(self, c: int = 0) -> np.ndarray:
        return self.data[:, :, c]

    def __eq__(self, other):
        return isinstance(other, Image) and self.data.shape == other.data.shape and bool(
            np.array_equal(self.data, other.data)
        )

    __hash__ = None


_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def load_image(raw: bytes, fmt: str | None = None) -> Image:
    """Parse a binary PGM (P5) or PPM (P6) with maxval 255. Comments are skipped."""
    raw = bytes(raw)
    magic = raw[:2]
    if magic not in (b"P5", b"P6"):
        raise MalformedHeader(f"unknown magic {magic!r}")
    if fmt is not None and {"PGM": b"P5", "PPM": b"P6"}.get(fmt.upper()) != magic:
        raise MalformedHeader(f"expected {fmt}, found {magic.decode(errors='replace')}")
    pos = 2
    fields = []
    for _ in range(3):
        m = _TOKEN.match(raw, pos)
        if m is None or not m.group(1).isdigit():
            raise MalformedHeader("header fields must be decimal integers")
        fields.append(int(m.group(1)))
        pos = m.end()
    if pos >= len(raw) or raw[pos : pos + 1] not in (b" ", b"\t", b"\n", b"\r"):
        raise MalformedHeader("missing whitespace after maxval")
    pos += 1
    width, height, maxval = fields
    if width <= 0 or height <= 0:
        raise MalformedHeader("dimensions must be positive")
    if maxval != 255:
        raise UnsupportedMaxval(f"unsupported maxval {maxval}")
    channels = 1 if magic == b"P5" else 3
    need = width * height * channels
    body = raw[pos : pos + need]
    if len(body) < need:
        raise TruncatedData(f"expected {need} data bytes, got {len(body)}")
    arr = np.frombuffer(body, dtype=np.uint8).reshape(height, width, channels)
    return Image(arr)


def save_image(img: Image, fmt: str | None = None) -> bytes:
    """Serialize with a canonical single-space header (no comments)."""
    fmt = (fmt or ("PGM" if img.channels == 1 else "PPM")).upper()
    if fmt == "PGM" and img.channels != 1:
        raise ValueError("PGM requires a single-channel image")
    if fmt == "PPM" and img.channels != 3:
        raise ValueError("PPM requires a 3-channel image")
    if fmt not in ("PGM", "PPM"):
        raise ValueError(f"unknown format {fmt}")
    magic = "P5" if fmt == "PGM" else "P6"
    header = f"{magic} {img.width} {img.height} 255\n".encode()
    return header + img.data.tobytes()


def read_image_file(path) -> Image:
    with open(path, "rb") as fh:
        return load_image(fh.read())


def write_image_file(path, img: Image) -> None:
    with open(path, "wb") as fh:
        fh.write(save_image(img))


@dataclass
class BlockGrid:
    """Tiles of one or more channels in (channel, block row, block col) order."""

    blocks: np.ndarray  # (channels, rows, cols, bs, bs)
    block_size: int
    height: int
    width: int
    pad_right: int
    pad_bottom: int

    @property
    def count(self) -> int:
        return int(np.prod(self.blocks.shape[:3]))

    def flat(self) -> np.ndarray:
        bs = self.block_size
        return self.blocks.reshape(-1, bs, bs)


def split_blocks(img: Image | np.ndarray, block_size: int = 8) -> BlockGrid:
    if block_size < 2:
        raise ValueError("block_size must be at least 2")
    arr = img.data if isinstance(img, Image) else np.asarray(img)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    h, w, c = arr.shape
    rows, cols = -(-h // block_size), -(-w // block_size)
    pad_b, pad_r = rows * block_size - h, cols * block_size - w
    padded = np.pad(arr, ((0, pad_b), (0, pad_r), (0, 0)), mode="edge")
    tiles = padded.reshape(rows, block_size, cols, block_size, c).transpose(4, 0, 2, 1, 3)
    return BlockGrid(tiles.copy(), block_size, h, w, pad_r, pad_b)


def merge_blocks(grid: BlockGrid) -> Image:
    c, rows, cols, bs, bs2 = grid.blocks.shape
    if bs != grid.block_size or bs2 != bs:
        raise ValueError("block shape does not match block_size")
    if rows != -(-grid.height // bs) or cols != -(-grid.width // bs):
        raise ValueError("inconsistent block count for recorded dimensions")
    full = grid.blocks.transpose(1, 3, 2, 4, 0).reshape(rows * bs, cols * bs, c)
    return Image(full[: grid.height, : grid.width])


@dataclass
class HistogramMap:
    """Guard record: pixels clipped inward with their original values, plus
    whole 8x8 blocks moved by a constant (flat block id, delta)."""

    low_cut: int
    high_cut: int
    indices: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    values: np.ndarray = field(default_factory=lambda: np.zeros(0, np.uint8))
    shifts: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), np.int64))

    @property
    def relocated(self) -> list[tuple[int, int]]:
        return list(zip(self.indices.tolist(), self.values.tolist()))

    def __len__(self):
        """Number of pixels the guard moved."""
        return len(self.indices) + 64 * len(self.shifts)

    def to_bytes(self) -> bytes:
        """Packed location bitmap, values and block shifts, zlib-compressed."""
        n = len(self.indices)
        span = int(self.indices.max()) + 1 if n else 0
        bitmap = np.zeros(span, bool)
        bitmap[self.indices] = True
        sh = np.asarray(self.shifts, np.int64).reshape(-1, 2)
        body = struct.pack(">BBIII", self.low_cut, self.high_cut, n, span, len(sh))
        body += np.packbits(bitmap).tobytes() + self.values.astype(np.uint8).tobytes()
        body += sh[:, 0].astype(">u4").tobytes() + sh[:, 1].astype(np.int8).tobytes()
        return zlib.compress(body, 9)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "HistogramMap":
        body = zlib.decompress(blob)
        low, high, n, span, m = struct.unpack(">BBIII", body[:14])
        nb = (span + 7) // 8
        if len(body) != 14 + nb + n + 5 * m:
            raise ValueError("histogram map length mismatch")
        bits = np.unpackbits(np.frombuffer(body[14 : 14 + nb], np.uint8))[:span]
        indices = np.flatnonzero(bits).astype(np.int64)
        if len(indices) != n:
            raise ValueError("histogram map count mismatch")
        off = 14 + nb
        values = np.frombuffer(body[off : off + n], dtype=np.uint8).copy()
        off += n
        ids = np.frombuffer(body[off : off + 4 * m], dtype=">u4").astype(np.int64)
        deltas = np.frombuffer(body[off + 4 * m :], dtype=np.int8).astype(np.int64)
        return cls(low, high, indices, values, np.stack([ids, deltas], 1).reshape(-1, 2))


def histogram_modify(img: Image, guard: int, mask: np.ndarray | None = None):
    """Narrow intensities into [guard, 255 - guard].

    ``mask`` (same shape as ``img.data``) restricts which pixels may move.
    Indices in the map address ``img.data.ravel()``.
    """
    if not 0 < guard <= 16:
        raise ValueError("guard must satisfy 0 < G <= 16")
    flat = img.data.ravel()
    lo, hi = guard, 255 - guard
    hit = (flat < lo) | (flat > hi)
    if mask is not None:
        hit &= np.asarray(mask, bool).ravel()
    idx = np.flatnonzero(hit)
    out = flat.copy()
    out[idx] = np.clip(flat[idx], lo, hi)
    hmap = HistogramMap(lo, hi, idx.astype(np.int64), flat[idx].copy())
    return Image(out.reshape(img.data.shape)), hmap


def histogram_restore(img: Image, hmap: HistogramMap) -> Image:
    flat = img.data.ravel().copy()
    if len(hmap.indices) and (hmap.indices.min() < 0 or hmap.indices.max() >= flat.size):
        raise IndexError("histogram map index out of range")
    flat[hmap.indices] = hmap.values
    out = Image(flat.reshape(img.data.shape))
    if len(hmap.shifts):
        grid = split_blocks(out)
        tiles = grid.blocks.reshape(-1, grid.block_size, grid.block_size).astype(np.int64)
        ids, deltas = hmap.shifts[:, 0], hmap.shifts[:, 1]
        if ids.min() < 0 or ids.max() >= len(tiles):
            raise IndexError("histogram map block out of range")
        tiles[ids] -= deltas[:, None, None]
        grid.blocks = np.clip(tiles, 0, 255).astype(img.data.dtype).reshape(grid.blocks.shape)
        out = merge_blocks(grid)
    return out
