"""512x512 grayscale test images drawn from scikit-image's sample data (optional dependency)."""

from __future__ import annotations

import numpy as np

from .image_core import Image, write_image_file

SIZE = 512
STANDARD_8 = ("camera", "moon", "brick", "grass", "gravel", "astronaut", "immunohistochemistry", "cell")
EXTENDED_10 = STANDARD_8 + ("retina", "hubble_deep_field")


def _gray(arr: np.ndarray) -> np.ndarray:
    from skimage.color import rgb2gray

    if arr.ndim == 3:
        arr = rgb2gray(arr[..., :3])
    if arr.dtype != np.uint8:
        arr = np.round(np.asarray(arr, float) * (255.0 if arr.max() <= 1.0 else 1.0))
    return np.clip(arr, 0, 255).astype(np.uint8)


def _fit(arr: np.ndarray) -> np.ndarray:
    """Centre-crop to a square, then resize to 512x512 when needed."""
    from skimage.transform import resize

    h, w = arr.shape
    s = min(h, w)
    top, left = (h - s) // 2, (w - s) // 2
    arr = arr[top : top + s, left : left + s]
    if s >= SIZE:
        off = (s - SIZE) // 2
        return arr[off : off + SIZE, off : off + SIZE]
    out = resize(arr, (SIZE, SIZE), order=1, preserve_range=True, anti_aliasing=False)
    return np.clip(np.round(out), 0, 255).astype(np.uint8)


def load(name: str) -> Image:
    import skimage.data

    if name not in EXTENDED_10:
        raise KeyError(f"unknown corpus image {name!r}")
    raw = getattr(skimage.data, name)()
    return Image(_fit(_gray(raw)))


def standard(names=STANDARD_8) -> dict[str, Image]:
    return {n: load(n) for n in names}


def write_corpus(directory, names=STANDARD_8) -> list[str]:
    """Write the images as PGM files, returning their paths in order."""
    from pathlib import Path

    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = []
    for n in names:
        p = d / f"{n}.pgm"
        write_image_file(p, load(n))
        paths.append(str(p))
    return paths
