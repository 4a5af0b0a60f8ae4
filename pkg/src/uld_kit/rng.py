"""Deterministic random substreams.

Every stream is keyed by integers (grid index, chunk index, role, ...), never
by thread identity, so results do not depend on how work is scheduled.
"""

import numpy as np

NOISE = 0
MIDPOINT = 1


def substream(seed, *key):
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def stream_pair(seed, *key):
    """(Brownian stream, midpoint stream) for one unit of work."""
    return substream(seed, *key, NOISE), substream(seed, *key, MIDPOINT)
