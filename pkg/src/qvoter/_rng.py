"""Deterministic random-stream plumbing.

Two layers of randomness are used throughout:

* ``numpy.random.Generator`` (PCG64) at the Python level, for setup draws,
  Poisson event counts and anything outside hot loops.
* xoshiro256++ inside the numba kernels, carried as four uint64 scalars so
  the state lives in registers.  Kernel states are derived from the caller's
  Generator, so a single seed reproduces every byte of output.

Replica streams are derived with ``SeedSequence(master_seed, spawn_key=(i,))``,
which is the documented stable hash of (master_seed, i).  Streams for
different replicas are independent, so scheduling replicas across threads
cannot change any result.
"""

from __future__ import annotations

import numpy as np

__all__ = ["replica_rng", "as_rng", "kernel_state"]


def replica_rng(master_seed: int, replica: int) -> np.random.Generator:
    """Independent, reproducible stream for one replica of an ensemble."""
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(replica,))
    return np.random.Generator(np.random.PCG64(ss))


def as_rng(seed_or_rng) -> np.random.Generator:
    """Coerce an int seed (or an existing Generator) to a Generator."""
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


def kernel_state(rng: np.random.Generator) -> tuple[np.uint64, np.uint64, np.uint64, np.uint64]:
    """Draw a nonzero xoshiro256++ state from the given Generator."""
    while True:
        s = rng.integers(0, 2**64, size=4, dtype=np.uint64)
        if s.any():
            return np.uint64(s[0]), np.uint64(s[1]), np.uint64(s[2]), np.uint64(s[3])
