"""Pinned PRNG and content-hashing helpers shared across the pipeline.

Sampling must be reproducible across runs and implementations, so the
generator is fully specified here rather than delegated to a library:

* State setup: one SplitMix64 round over the 64-bit user seed. This
  decorrelates consecutive seeds and guarantees a non-zero state.
* Stream: xorshift64* with shift triple (12, 25, 27) and output
  multiplier 0x2545F4914F6CDD1D. Each call advances the state once and
  returns ``(state * multiplier) mod 2**64``.
* Bounded draws use plain modulo reduction. The bias is below 2**-50 for
  any bound this pipeline uses and keeping the reduction trivial makes
  the algorithm easy to reproduce elsewhere.
"""

from __future__ import annotations

import hashlib

_MASK64 = (1 << 64) - 1
_SPLITMIX_GAMMA = 0x9E3779B97F4A7C15
_XORSHIFT_MULT = 0x2545F4914F6CDD1D


def splitmix64(value: int) -> int:
    """One SplitMix64 scrambling round over a 64-bit integer."""
    z = (value + _SPLITMIX_GAMMA) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


class XorShift64Star:
    """Seeded xorshift64* stream; see the module docstring for the spec."""

    def __init__(self, seed: int):
        state = splitmix64(seed & _MASK64)
        # xorshift state must never be zero; the gamma is an arbitrary
        # fixed non-zero fallback.
        self._state = state if state != 0 else _SPLITMIX_GAMMA

    def next_u64(self) -> int:
        s = self._state
        s ^= s >> 12
        s = (s ^ (s << 25)) & _MASK64
        s ^= s >> 27
        self._state = s
        return (s * _XORSHIFT_MULT) & _MASK64

    def next_float(self) -> float:
        """Uniform draw in [0, 1)."""
        return self.next_u64() / 2.0**64

    def randint_below(self, bound: int) -> int:
        """Uniform integer in [0, bound)."""
        if bound <= 0:
            raise ValueError(f"bound must be positive, got {bound}")
        return self.next_u64() % bound


def digest64(data: bytes) -> int:
    """Stable 64-bit content digest (blake2b truncation)."""
    return int.from_bytes(hashlib.blake2b(data, digest_size=8).digest(), "big")


def content_digest(data: bytes) -> str:
    """Stable hex content digest used to key fixtures and caches."""
    return hashlib.blake2b(data, digest_size=16).hexdigest()


def mix_seed(seed: int, *parts: int) -> int:
    """Fold extra integers into a seed, one SplitMix64 round per part."""
    mixed = seed & _MASK64
    for part in parts:
        mixed = splitmix64(mixed ^ (part & _MASK64))
    return mixed
