"""Seed derivation and portable random generators.

Every stochastic operation in the package draws from numpy's Philox bit
generator (counter-based, platform-independent) seeded through the
splitmix64 derivation below. A given (seed, label, ...) path therefore
maps to exactly one stream, on any machine.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1
_DOMAIN = 0x8E3C5D1F2A7B9C41


def splitmix64(state: int) -> tuple[int, int]:
    """Advance a splitmix64 state once; returns (next_state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def _to_int(part: int | str) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part) & _MASK64
    if isinstance(part, str):
        # blake2b rather than hash(): stable across processes and platforms
        digest = hashlib.blake2b(part.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "little")
    raise TypeError(f"cannot derive a seed from {type(part).__name__}")


def derive_seed(*parts: int | str) -> int:
    """Fold integers and strings into one 64-bit sub-seed."""
    state = _DOMAIN
    for part in parts:
        state, out = splitmix64(state ^ _to_int(part))
        state ^= out
    _, out = splitmix64(state)
    return out


def generator(*parts: int | str) -> np.random.Generator:
    """Philox generator keyed by the derived sub-seed for ``parts``."""
    return np.random.Generator(np.random.Philox(key=derive_seed(*parts)))
