"""Counter-based random streams for reproducible Monte Carlo.

Every stream is a Philox4x64 generator addressed purely by
(master_seed, role, index):

  key     = (master_seed mod 2^64, role)
  counter = index * 2^128         (index sits in the third 64-bit word)

so the values drawn from a stream are a pure function of that address, not
of generation order, thread count, or how many other streams exist.  Role 0
holds Brownian-increment streams (one per particle), role 1 the initial
condition stream.  Each stream produces a single contiguous block of
standard normals (row-major), so a longer read extends a shorter one:
particle i keeps the same path when the particle count grows, which is what
makes synchronous coupling across ensemble sizes possible.

Bit-level reproducibility across machines holds for a fixed NumPy version
(Philox plus the Generator normal transform).
"""

from __future__ import annotations

import numpy as np

ROLE_INCREMENTS = 0
ROLE_INITIAL = 1

_MASK64 = (1 << 64) - 1


def normal_stream(master_seed: int, role: int, index: int) -> np.random.Generator:
    """Generator for the stream addressed by (master_seed, role, index)."""
    if index < 0:
        raise ValueError(f"stream index must be nonnegative, got {index}")
    key = np.array([master_seed & _MASK64, role & _MASK64], dtype=np.uint64)
    counter = np.array([0, 0, index & _MASK64, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(counter=counter, key=key))
