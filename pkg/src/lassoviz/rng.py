"""Named random sub-streams derived from one integer seed."""
import zlib

import numpy as np


def substream(seed, name, *extra):
    """Independent generator for ``name`` (e.g. "train", "folds", "augment")."""
    key = [int(seed), zlib.crc32(name.encode("utf-8"))] + [int(e) for e in extra]
    return np.random.default_rng(np.random.SeedSequence(key))
