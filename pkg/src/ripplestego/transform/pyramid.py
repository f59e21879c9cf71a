"""Container for transform-domain coefficients."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np


@dataclass
class CoefficientPyramid:
    """Subbands keyed by (scale, orientation).

    For the block ripplet transform the key is (scale a, orientation index) and each
    value has shape (blocks, count). For the wavelet it is (level, band name).
    """

    kind: str
    subbands: dict
    shape: tuple
    quantized: bool = False
    meta: dict = field(default_factory=dict)

    def total_size(self) -> int:
        return int(sum(np.asarray(v).size for v in self.subbands.values()))

    def dump(self, directory) -> None:
        """Write one PGM magnitude image per subband plus a JSON manifest."""
        from ..image_core import Image, save_image

        os.makedirs(directory, exist_ok=True)
        manifest = []
        for (a, th), vals in sorted(self.subbands.items(), key=lambda kv: str(kv[0])):
            v = np.abs(np.asarray(vals, dtype=float))
            v2 = v.reshape(v.shape[0], -1) if v.ndim > 1 else v[None]
            peak = v2.max() or 1.0
            name = f"a{a}_t{th}.pgm"
            with open(os.path.join(directory, name), "wb") as fh:
                fh.write(save_image(Image(np.round(255 * v2 / peak).astype(np.uint8)), "PGM"))
            manifest.append({"scale": a, "theta": th, "dims": list(np.shape(vals)), "file": name})
        info = {"kind": self.kind, "quant_step": self.meta.get("quant_step"), "subbands": manifest}
        with open(os.path.join(directory, "manifest.json"), "w") as fh:
            json.dump(info, fh, indent=2, default=str)
