"""Binary dropout masks and the primitives that act on them.

A mask is a fixed-length vector of keep/drop bits (1 = keep, 0 = drop).
Everything here is a pure function on immutable values; the stateful
mask *generators* live in :mod:`rotodrop.generators`.

Probability convention: ``p`` is always the keep probability.  Hardware
comparators are usually described in terms of the drop ratio instead;
the mapping is ``drop_ratio = 1 - p``.
"""

from __future__ import annotations

import math

import numpy as np


class BitMask:
    """Immutable fixed-length vector of 0/1 keep bits.

    The text literal form is a string of '0'/'1' characters with the
    leftmost character at index 0, e.g. ``BitMask.from_literal("1010")``.
    """

    __slots__ = ("_bits",)

    def __init__(self, bits):
        arr = np.asarray(bits, dtype=np.uint8)
        if arr.ndim != 1:
            raise ValueError(f"mask must be one-dimensional, got shape {arr.shape}")
        if arr.size == 0:
            raise ValueError("mask length must be >= 1")
        if not np.all((arr == 0) | (arr == 1)):
            raise ValueError("mask elements must be 0 or 1")
        arr = arr.copy()
        arr.setflags(write=False)
        self._bits = arr

    @classmethod
    def from_literal(cls, literal: str) -> "BitMask":
        if not literal or any(c not in "01" for c in literal):
            raise ValueError(f"mask literal must be a nonempty string of 0/1, got {literal!r}")
        return cls([int(c) for c in literal])

    def to_literal(self) -> str:
        return "".join("1" if b else "0" for b in self._bits)

    @property
    def bits(self) -> np.ndarray:
        """Read-only uint8 view of the bit vector."""
        return self._bits

    def __len__(self) -> int:
        return self._bits.size

    def __getitem__(self, i):
        return int(self._bits[i])

    def __iter__(self):
        return iter(int(b) for b in self._bits)

    def __eq__(self, other):
        if not isinstance(other, BitMask):
            return NotImplemented
        return self._bits.shape == other._bits.shape and bool(
            np.all(self._bits == other._bits)
        )

    def __hash__(self):
        return hash(self._bits.tobytes())

    def __repr__(self):
        return f"BitMask('{self.to_literal()}')"


def _check_length(n: int) -> None:
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ValueError(f"mask length must be an integer >= 1, got {n!r}")


def _check_probability(p: float) -> None:
    if not (0.0 <= p <= 1.0):
        raise ValueError(f"keep probability must be in [0, 1], got {p!r}")


def round_half_up(x: float) -> int:
    """round(x) with ties going up: round_half_up(2.5) == 3."""
    return int(math.floor(x + 0.5))


def make_bernoulli_mask(n: int, p: float, rng: np.random.Generator) -> BitMask:
    """Draw an n-bit mask with each bit independently 1 with probability p.

    Consumes exactly n uniform draws from ``rng``; bit i is 1 iff the
    i-th draw is < p.
    """
    _check_length(n)
    _check_probability(p)
    draws = rng.random(n)
    return BitMask((draws < p).astype(np.uint8))


def make_exact_mask(n: int, p: float, rng: np.random.Generator) -> BitMask:
    """Draw an n-bit mask with exactly round_half_up(p*n) ones.

    Positions of the ones are a seeded uniform shuffle of range(n).
    Used as the default predefined mask of the rotation generator, where
    a single mask's realized keep ratio is frozen for the whole run.
    """
    _check_length(n)
    _check_probability(p)
    k = round_half_up(p * n)
    bits = np.zeros(n, dtype=np.uint8)
    bits[rng.permutation(n)[:k]] = 1
    return BitMask(bits)


def rotate(mask: BitMask, r: int) -> BitMask:
    """Circular left rotation by r mod len(mask) positions.

    Output bit i is input bit (i + r) mod n; length and popcount are
    preserved for every r.
    """
    if r < 0:
        raise ValueError(f"rotate amount must be non-negative, got {r}")
    n = len(mask)
    return BitMask(np.roll(mask.bits, -(r % n)))


def popcount(mask: BitMask) -> int:
    """Number of 1-bits (kept positions)."""
    return int(mask.bits.sum())


def apply_mask(mask: BitMask, x) -> np.ndarray:
    """Elementwise product mask * x for a vector x of matching length.

    Dropped positions become exactly 0.0; kept positions are unchanged.
    Train-time 1/p rescaling is the training harness's job, not this
    function's.
    """
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1 or arr.shape[0] != len(mask):
        raise ValueError(
            f"mask length {len(mask)} does not match vector shape {arr.shape}"
        )
    return arr * mask.bits
