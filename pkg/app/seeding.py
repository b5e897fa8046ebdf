"""Named random sub-streams derived from one root seed.

A component asks for ``rng_for(root, "image-aug", epoch, step, i)`` and
gets the same stream regardless of what other components consumed, so a
config change in one place does not shift randomness elsewhere.
"""

import hashlib
from typing import Union

import numpy as np

Key = Union[str, int]


def derive_seed(root: int, *names: Key) -> int:
    payload = "/".join([str(int(root))] + [str(n) for n in names]).encode("utf-8")
    return int.from_bytes(hashlib.sha256(payload).digest()[:8], "little") & (2**63 - 1)


def rng_for(root: int, *names: Key) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root, *names))
