"""Counter-based random numbers: a pure hash of (seed, counters...).

Values depend only on their counter tuple, never on call order or on how
work is split across workers.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_INV_2_53 = 1.0 / float(1 << 53)


def _mix(z: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def hash_u64(seed, *counters) -> np.ndarray:
    """Chain every counter through the splitmix64 finalizer."""
    with np.errstate(over="ignore"):
        h = _mix(np.asarray(seed, dtype=np.int64).astype(np.uint64) + _GOLDEN)
        for c in counters:
            h = _mix(h ^ (np.asarray(c, dtype=np.int64).astype(np.uint64) + _GOLDEN))
    return h


def uniform(seed, *counters) -> np.ndarray:
    """Uniform doubles in [0, 1) keyed by ``(seed, *counters)``; counters broadcast."""
    h = hash_u64(seed, *counters)
    return (h >> np.uint64(11)).astype(np.float64) * _INV_2_53
