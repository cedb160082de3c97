"""Counter-based random number streams.

Streams are keyed by (master_seed, path): the 128-bit Philox key is a
hash of both, so distinct paths give statistically independent streams
and the same (seed, path) reproduces identical output on any schedule.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

__all__ = ["RngStream"]


@dataclass(frozen=True)
class RngStream:
    master_seed: int
    path: tuple = ()

    def child(self, *ids: int) -> "RngStream":
        """Substream identified by extending the path."""
        return RngStream(self.master_seed, self.path + tuple(int(i) for i in ids))

    def key(self) -> int:
        msg = repr((int(self.master_seed), self.path)).encode()
        return int.from_bytes(hashlib.sha256(msg).digest()[:16], "little")

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=self.key()))
