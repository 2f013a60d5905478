"""Seed derivation for reproducible, order-independent random streams."""

import zlib

import numpy as np


def _key_to_int(key):
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError(f"negative stream key {key}")
        return int(key)
    return zlib.crc32(str(key).encode("utf-8"))


def derive_rng(seed, *keys):
    """Return a generator for the stream identified by ``(seed, *keys)``.

    Keys may be non-negative integers or strings. The stream depends only on
    the key tuple, so e.g. per-event streams are identical no matter the order
    in which events are generated. A tuple seed is shorthand for its keys:
    ``derive_rng((1, "a"))`` equals ``derive_rng(1, "a")``.
    """
    if isinstance(seed, np.random.Generator):
        if keys:
            raise ValueError("cannot derive keyed streams from a Generator")
        return seed
    if isinstance(seed, (tuple, list)):
        if not seed:
            raise ValueError("empty seed tuple")
        return derive_rng(seed[0], *seed[1:], *keys)
    entropy = [_key_to_int(seed)] + [_key_to_int(k) for k in keys]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
