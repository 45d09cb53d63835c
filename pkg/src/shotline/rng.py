"""Deterministic random streams derived from one root seed.

Every consumer of randomness names its purpose, so adding or reordering
parallel work never changes what any single stream produces.
"""
from __future__ import annotations

from hashlib import blake2b

import numpy as np


def derive_seed(root_seed: int, purpose: str, ordinal: int = 0) -> int:
    key = f"{root_seed}\x1f{purpose}\x1f{ordinal}".encode("utf-8")
    return int.from_bytes(blake2b(key, digest_size=8).digest(), "little")


def derive_rng(root_seed: int, purpose: str, ordinal: int = 0) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root_seed, purpose, ordinal))
