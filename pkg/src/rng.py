"""
Seed derivation. Every random stream in the package is keyed by the user seed plus
integer keys (run index, tree index, replicate index, ...), never by worker identity,
so results do not depend on how work is scheduled.
"""
import numpy as np

# Stage keys; fixed integers so derived streams never shift when stages are added.
STREAM_STABILITY = 1
STREAM_LASSO = 2
STREAM_FOREST_THRESHOLD = 3
STREAM_FOREST_INTERPRET = 4
STREAM_SIMULATION = 5
STREAM_BOOTSTRAP = 6
STREAM_BENCHMARK = 7


def derive_seed(seed: int, *keys: int) -> int:
    """Return a 32-bit integer seed derived from ``seed`` and ``keys``."""
    entropy = [int(seed) & 0xFFFFFFFF] + [int(k) & 0xFFFFFFFF for k in keys]
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


def derive_rng(seed: int, *keys: int) -> np.random.Generator:
    """Return a ``numpy`` Generator for the stream ``(seed, *keys)``."""
    return np.random.default_rng(derive_seed(seed, *keys))
