"""Shared plumbing: error types, seed derivation, deterministic rounding."""
from __future__ import annotations

import hashlib
import math


class NumericError(ArithmeticError):
    """A computation produced a non-finite intermediate value."""


def subseed(root: int, *names: object) -> int:
    """Derive a stable 64-bit sub-seed from a root seed and a name path.

    Every source of randomness in a run (init, shuffle, dropout, mixup,
    noise, ...) draws from its own named stream so that experiments can vary
    one source while freezing the rest. Stable across platforms and runs.
    """
    tag = ":".join(str(n) for n in names)
    digest = hashlib.blake2b(f"{root}:{tag}".encode("utf-8"), digest_size=8)
    return int.from_bytes(digest.digest(), "little")


def round_half_up(x: float) -> int:
    """round() with deterministic half-up ties, used for exact flip counts."""
    return int(math.floor(x + 0.5))
