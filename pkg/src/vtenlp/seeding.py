"""Deterministic seed derivation so each stage gets an independent stream."""

import hashlib


def derive_seed(seed, *scope):
    """Mix a base seed with scope keys into a stable 64-bit sub-seed.

    Stable across processes and platforms (unlike ``hash``), so any stage
    keyed by (seed, name, index) reproduces exactly.
    """
    key = ":".join([str(int(seed))] + [str(part) for part in scope])
    digest = hashlib.blake2b(key.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")
