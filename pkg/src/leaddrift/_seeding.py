import zlib

import numpy as np


def derive_seed(seed: int, *keys) -> int:
    """Derive a stage-specific 32-bit seed from the global seed.

    String keys are hashed with CRC32 so the derivation is stable across runs
    and platforms. The mixing is numpy's ``SeedSequence``.
    """
    entropy = [int(seed)]
    for k in keys:
        entropy.append(zlib.crc32(k.encode()) if isinstance(k, str) else int(k))
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


def make_rng(seed: int, *keys) -> np.random.Generator:
    # PCG64: documented, portable bit generator.
    return np.random.Generator(np.random.PCG64(derive_seed(seed, *keys)))
