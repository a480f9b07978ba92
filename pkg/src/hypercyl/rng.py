"""Counter-based random streams keyed by (seed, replicate, tag).

Each stream is a Philox generator seeded from a ``SeedSequence`` whose spawn
key carries the replicate index and a CRC of the module tag, so replicates
are independent of each other and of execution order.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

SEED_MAX = 2**64 - 1


@dataclass(frozen=True)
class Seed:
    """A 64-bit seed plus replicate index."""

    value: int
    replicate: int = 0

    def __post_init__(self):
        if not 0 <= int(self.value) <= SEED_MAX:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if int(self.replicate) < 0:
            raise ValueError("replicate index must be nonnegative")

    def with_replicate(self, replicate):
        return Seed(self.value, replicate)


def as_seed(seed):
    if isinstance(seed, Seed):
        return seed
    return Seed(int(seed))


def stream(seed, tag):
    """Independent generator for ``(seed.value, seed.replicate, tag)``."""
    seed = as_seed(seed)
    key = (int(seed.replicate), zlib.crc32(tag.encode("utf-8")))
    ss = np.random.SeedSequence(int(seed.value), spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))


def uniform_sphere(rng, n, d):
    """``n`` points uniform on ``S^{d-1}``."""
    z = rng.standard_normal((n, d))
    nrm = np.linalg.norm(z, axis=1, keepdims=True)
    # a zero Gaussian vector has probability zero; redraw defensively
    while np.any(nrm == 0.0):
        bad = nrm[:, 0] == 0.0
        z[bad] = rng.standard_normal((int(bad.sum()), d))
        nrm = np.linalg.norm(z, axis=1, keepdims=True)
    return z / nrm
