"""Counter-based random streams.

A stream is a Philox-4x64 key ``(seed, stream_id)``.  Draw number ``k`` of a
stream depends only on the key and ``k``, so any slice of a stream can be
regenerated independently (by any thread, on any host) without replaying
the draws before it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.random import Philox, SeedSequence
from scipy.special import ndtri

_MASK64 = (1 << 64) - 1
_BLOCK = 4  # uint64 outputs per Philox counter increment


@dataclass(frozen=True)
class RandomStream:
    seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            v = getattr(self, name)
            if int(v) != v or not 0 <= v <= _MASK64:
                raise ValueError(f"{name} must be an unsigned 64-bit integer, got {v!r}")

    def raw(self, n: int, offset: int = 0) -> np.ndarray:
        """``n`` uint64 draws starting at draw number ``offset``."""
        bg = Philox(key=np.array([int(self.seed), int(self.stream_id)], dtype=np.uint64))
        blocks, skip = divmod(int(offset), _BLOCK)
        if blocks:
            bg.advance(blocks)
        out = bg.random_raw(int(n) + skip)
        return out[skip:]

    def uniforms(self, n: int, offset: int = 0) -> np.ndarray:
        """Doubles in the open interval (0, 1): top 53 bits, shifted by half an ulp."""
        bits = self.raw(n, offset) >> np.uint64(11)
        return (bits.astype(np.float64) + 0.5) * 2.0 ** -53

    def normals(self, n: int, offset: int = 0) -> np.ndarray:
        """Standard normals by inverse-CDF transform (one uniform per variate)."""
        return ndtri(self.uniforms(n, offset))

    def derive(self, *labels: int) -> "RandomStream":
        """An independent stream keyed by this one plus integer labels."""
        ss = SeedSequence([int(self.seed), int(self.stream_id), *map(int, labels)])
        return RandomStream(int(self.seed), int(ss.generate_state(1, np.uint64)[0]))

    def to_dict(self) -> dict:
        return {"seed": int(self.seed), "stream_id": int(self.stream_id)}
