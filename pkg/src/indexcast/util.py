"""Small shared helpers: deterministic seed derivation and sign conventions."""

import hashlib

import numpy as np


def derived_seed(*parts) -> int:
    """Stable 32-bit seed from arbitrary string-able parts.

    Independent of execution order, process, and platform, so parallel
    workers can seed their own RNGs without coordinating.
    """
    key = "|".join(str(p) for p in parts)
    digest = hashlib.blake2b(key.encode("utf-8"), digest_size=4).digest()
    return int.from_bytes(digest, "big")


def rng_for(*parts) -> np.random.Generator:
    return np.random.default_rng(derived_seed(*parts))


def sign_label(x: float) -> int:
    """Movement sign with the global tie rule: zero maps to +1."""
    return 1 if x >= 0 else -1
