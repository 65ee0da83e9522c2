"""Deterministic derivation of independent random streams.

Every run owns a handful of RNG streams (topology, protocol decisions,
disturbances) that must stay independent of each other and reproducible
across processes. Deriving each stream seed from a hash of its labels
keeps the streams decoupled: adding a consumer to one stream never
shifts the draws of another.
"""

from __future__ import annotations

import hashlib
from random import Random


def derive_seed(*parts: object) -> int:
    """Hash an arbitrary label tuple down to a 64-bit seed."""
    text = ":".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def stream(*parts: object) -> Random:
    """A fresh ``random.Random`` seeded from the given labels."""
    return Random(derive_seed(*parts))
