"""Counter-based random streams keyed by (seed, path index, substream)."""

import numpy as np

# substream identifiers; each path owns one independent stream per purpose
DRIVER = 0
DRIVER_SIGNS = 1
DRIVER_TIMES = 2
SMALL_JUMPS = 3
LIMIT_V = 10
LIMIT_MARKS = 11
# bases for whole driver families (base + DRIVER, base + DRIVER_SIGNS, ...)
LIMIT_DRIVER_BASE = 100
SELFCHECK_BASE = 200


def stream(seed, path_index, substream=DRIVER):
    """Philox generator for one (seed, path, substream) triple.

    Streams are independent of the order in which they are requested, so
    results do not depend on scheduling or thread count.
    """
    if seed is None:
        raise ValueError("an explicit seed is required")
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(path_index), int(substream)))
    return np.random.Generator(np.random.Philox(ss))
