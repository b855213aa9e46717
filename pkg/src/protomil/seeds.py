"""Deterministic seed derivation.

All randomness in the package flows from explicit integer seeds through
PCG64 generators.  Sub-seeds (per bag, per epoch, per fold, ...) are derived
by the mixing function

    derive_seed(*parts) = first 8 bytes, little-endian, of
                          BLAKE2b(canonical encoding of parts)

where integers are encoded as tagged 16-byte two's complement and everything
else as tagged length-prefixed UTF-8 of ``str(part)``.  This is stable across
platforms and Python processes (never uses the salted builtin ``hash``).
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(*parts) -> int:
    """Mix the given parts into a 64-bit unsigned seed."""
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        if isinstance(part, (bool, np.bool_)):
            part = int(part)
        if isinstance(part, (int, np.integer)):
            h.update(b"i" + int(part).to_bytes(16, "little", signed=True))
        else:
            data = str(part).encode("utf-8")
            h.update(b"s" + len(data).to_bytes(4, "little") + data)
    return int.from_bytes(h.digest(), "little")


def make_rng(*parts) -> np.random.Generator:
    """A PCG64 generator seeded by ``derive_seed(*parts)``.

    A single integer part seeds the generator with that integer directly, so
    ``make_rng(seed)`` matches ``np.random.Generator(np.random.PCG64(seed))``.
    """
    if len(parts) == 1 and isinstance(parts[0], (int, np.integer)):
        seed = int(parts[0])
    else:
        seed = derive_seed(*parts)
    return np.random.Generator(np.random.PCG64(seed))
