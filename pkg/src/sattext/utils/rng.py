import zlib

import numpy as np


def derive_seed(seed: int, stream: str) -> int:
    """Independent 32-bit seed for a named RNG stream of one run."""
    ss = np.random.SeedSequence([int(seed), zlib.crc32(stream.encode("utf-8"))])
    return int(ss.generate_state(1)[0])


def make_rng(seed: int, stream: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, stream))
