"""Counter-based random streams keyed by (seed, purpose, region).

Each stream is a Philox generator whose key is derived from the seed and a
tuple of small integers, so any stream can be recreated independently of
the order in which others were consumed.
"""

import numpy as np

from .errors import ArgumentError

# purposes
SAMPLE = 1
SPLIT = 2
BATCH = 3
REFERENCE = 4
BOOTSTRAP = 5
TILT = 6

# regions for split construction
PRIMARY = 0
SECONDARY = 1


def check_seed(seed):
    seed = int(seed)
    if seed < 0 or seed >= 1 << 64:
        raise ArgumentError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def point_seed(seed, k: int) -> int:
    """Seed for the ``k``-th point of a scan; wraps within the u64 range."""
    return (check_seed(seed) + int(k)) % (1 << 64)


def stream(seed, *key):
    """Independent generator for ``seed`` and the integer tuple ``key``."""
    ss = np.random.SeedSequence(check_seed(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))
