"""Reproducible random streams.

Every stream is a Philox4x64 counter-based generator keyed by a numpy
``SeedSequence`` built from ``(seed, spawn_key)``.  The raw 64-bit output
of Philox is fixed by its algorithm, so identical keys give identical
sequences on any platform.  Ensemble member ``i`` of a computation driven
by stream ``s`` always uses ``s.child(i)``; the assignment never depends
on block sizes or thread counts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ALGORITHM = "philox4x64-seedsequence"

_U64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream_index: int = 0
    parent: tuple[int, ...] = ()

    def __post_init__(self):
        if not 0 <= self.seed <= _U64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if not 0 <= self.stream_index <= _U64:
            raise ValueError("stream_index must be a 64-bit unsigned integer")

    @property
    def key(self) -> tuple[int, ...]:
        return self.parent + (self.stream_index,)

    def child(self, index: int) -> "RngStream":
        """Independent sub-stream number ``index`` of this stream."""
        return RngStream(self.seed, int(index), self.key)

    def bit_generator(self) -> np.random.Philox:
        return np.random.Philox(np.random.SeedSequence(self.seed, spawn_key=self.key))

    def generator(self) -> np.random.Generator:
        return np.random.Generator(self.bit_generator())

    def words(self, n: int) -> np.ndarray:
        """First ``n`` raw 64-bit outputs of the stream."""
        return np.asarray(self.bit_generator().random_raw(n), dtype=np.uint64)
