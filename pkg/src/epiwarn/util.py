"""Small shared helpers: deterministic seeds, stable float text, file digests."""

from __future__ import annotations

import hashlib
import math

import numpy as np

_SEP = b"\x1f"


def derive_seed(*parts) -> int:
    """Derive a 64-bit seed from a tuple of ints/strings.

    Stable across processes and platforms (unlike builtin ``hash``), so
    worker pools and re-runs see identical streams for identical contexts.
    """
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        if isinstance(part, (np.integer, bool)):
            part = int(part)
        if not isinstance(part, (int, str)):
            raise TypeError(f"seed context parts must be int or str, got {type(part)!r}")
        h.update(repr(part).encode())
        h.update(_SEP)
    return int.from_bytes(h.digest(), "big")


def derive_rng(*parts) -> np.random.Generator:
    return np.random.default_rng(derive_seed(*parts))


def fmt_float(x) -> str:
    """Shortest round-trip decimal text for a float; deterministic."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    return repr(x)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()
