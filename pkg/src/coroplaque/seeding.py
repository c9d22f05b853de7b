"""Stable seed derivation.

Every random stream in the package is derived from one master seed and a
tuple of keys, e.g. ``derive_seed(42, "patient", 7)``. The hash is
SHA-256 over the ``repr`` of the keys, so it does not depend on Python's
per-process hash randomization.
"""

import hashlib

import numpy as np


def derive_seed(master: int, *keys) -> int:
    payload = repr((int(master),) + tuple(keys)).encode("utf-8")
    return int.from_bytes(hashlib.sha256(payload).digest()[:8], "little")


def rng_for(master: int, *keys) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master, *keys))
