import numpy as np

# Stream identifiers keep the random substreams of each pipeline stage apart.
EMISSION = 0
SURVIVAL = 1
DETECT = 2
PRESET = 3


def substream(seed, *key):
    """Independent generator for ``(seed, *key)``, stable across runs and platforms."""
    if seed is None:
        raise ValueError("an explicit integer seed is required")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))
