"""Seeded random streams.

Every trial draws from its own stream, identified by ``(master_seed,
stream_index)``.  The 64-bit generator seed is the first 8 bytes
(little-endian) of ``blake2b(master_seed || stream_index)`` where both
values are encoded as 8-byte little-endian unsigned integers.  The seed
feeds numpy's PCG64.

String labels (distribution names, grid coordinates) are folded into a
master seed with :func:`mix_seed`, so any cell of a sweep can be
regenerated on its own.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

MASK64 = (1 << 64) - 1


def _digest64(payload: bytes) -> int:
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")


def stream_seed(master_seed: int, stream_index: int) -> int:
    """The documented mixing function: 64-bit blake2b of the two words."""
    payload = struct.pack("<QQ", master_seed & MASK64, stream_index & MASK64)
    return _digest64(payload)


def mix_seed(master_seed: int, *labels: object) -> int:
    """Fold arbitrary labels into a new 64-bit master seed."""
    text = "\x1f".join(str(label) for label in labels).encode()
    return _digest64(struct.pack("<Q", master_seed & MASK64) + text)


class RngStream:
    """A reproducible random stream.

    Thin wrapper over ``numpy.random.Generator``; the generator state is
    the internal counter.
    """

    __slots__ = ("master_seed", "stream_index", "generator")

    def __init__(self, master_seed: int, stream_index: int = 0):
        self.master_seed = master_seed & MASK64
        self.stream_index = stream_index & MASK64
        seed = stream_seed(self.master_seed, self.stream_index)
        self.generator = np.random.Generator(np.random.PCG64(seed))

    def __repr__(self) -> str:
        return f"RngStream(master_seed={self.master_seed}, stream_index={self.stream_index})"

    def random(self, size=None):
        return self.generator.random(size)

    def uniform(self, lo: float, hi: float, size=None):
        return self.generator.uniform(lo, hi, size)

    def integers(self, lo: int, hi: int, size=None):
        return self.generator.integers(lo, hi, size)

    def next_u64(self) -> int:
        return int(self.generator.integers(0, 1 << 64, dtype=np.uint64))


def derive_trial_seed(master_seed: int, trial_index: int) -> RngStream:
    """Independent stream for trial ``trial_index`` under ``master_seed``."""
    return RngStream(master_seed, trial_index)


def as_generator(rng) -> np.random.Generator:
    """Accept an RngStream, a numpy Generator, or an int seed."""
    if isinstance(rng, RngStream):
        return rng.generator
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, (int, np.integer)):
        return RngStream(int(rng)).generator
    raise TypeError(f"not a random stream: {rng!r}")
