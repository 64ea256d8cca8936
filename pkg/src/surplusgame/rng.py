"""Counter-based random streams.

Every stochastic quantity is drawn from a Philox stream keyed by
(master seed, path index, stream tag), so results never depend on how
paths are batched, chunked, or scheduled across workers.
"""

import numpy as np

# Stream tags; values are part of the reproducibility contract.
CHAIN = 1
MARKET = 2
W1 = 3
GENERIC = 0

_MASK64 = (1 << 64) - 1


def stream_key(seed: int, path: int = 0, tag: int = GENERIC) -> int:
    """Pack (seed, path, tag) into a 128-bit Philox key."""
    if path < 0 or path >= (1 << 56):
        raise ValueError(f"path index out of range: {path}")
    if tag < 0 or tag >= (1 << 8):
        raise ValueError(f"stream tag out of range: {tag}")
    return ((int(seed) & _MASK64) << 64) | (path << 8) | tag


def stream_rng(seed: int, path: int = 0, tag: int = GENERIC) -> np.random.Generator:
    """Independent generator for one (seed, path, tag) triple."""
    return np.random.Generator(np.random.Philox(key=stream_key(seed, path, tag)))
