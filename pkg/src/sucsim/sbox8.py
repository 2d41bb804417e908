"""Involutive 8-bit S-boxes from 4-bit round functions.

The construction is a balanced Feistel network over nibbles with an odd
number of rounds r and a palindromic round-function sequence: the free
choices S_0 .. S_{(r-1)/2} are mirrored so round k and round r-1-k use
the same 4-bit table. Rounds alternate which half they modify and never
swap halves:

    round k even:  L ^= S_k(R)
    round k odd:   R ^= S_k(L)

with L the high nibble. Each round is then its own inverse, and running
the palindrome backwards is the same as running it forwards, so the
resulting byte permutation is an involution for any choice of round
functions. No swap after the last round.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .sbox4 import check_table4


@dataclass(frozen=True)
class FeistelSpec:
    """r odd rounds; free holds the (r+1)/2 selectable round functions."""

    r: int
    free: tuple

    def __post_init__(self):
        if self.r < 1 or self.r % 2 == 0:
            raise ValueError(f"r must be odd and >= 1, got {self.r}")
        free = tuple(check_table4(t) for t in self.free)
        if len(free) != (self.r + 1) // 2:
            raise ValueError(
                f"free list must have {(self.r + 1) // 2} entries for r={self.r}, "
                f"got {len(free)}"
            )
        object.__setattr__(self, "free", free)


@dataclass(frozen=True)
class SBox8:
    """256-entry byte substitution with optional construction provenance."""

    table: tuple
    feistel_r: int | None = None
    free: tuple | None = None

    def __post_init__(self):
        t = tuple(int(v) for v in self.table)
        if len(t) != 256 or any(v < 0 or v > 255 for v in t):
            raise ValueError("table must be 256 values in [0, 255]")
        object.__setattr__(self, "table", t)

    def is_involution(self) -> bool:
        t = self.table
        return all(t[t[x]] == x for x in range(256))

    def to_bytes(self) -> bytes:
        return bytes(self.table)

    @classmethod
    def from_bytes(cls, data: bytes) -> "SBox8":
        if len(data) != 256:
            raise ValueError("expected 256 bytes")
        return cls(table=tuple(data))


def feistel8(spec: FeistelSpec) -> SBox8:
    """Build the involutive byte substitution described by spec."""
    seq = [spec.free[min(k, spec.r - 1 - k)] for k in range(spec.r)]
    table = []
    for x in range(256):
        left, right = x >> 4, x & 0x0F
        for k, s in enumerate(seq):
            if k % 2 == 0:
                left ^= s[right]
            else:
                right ^= s[left]
        table.append((left << 4) | right)
    return SBox8(table=tuple(table), feistel_r=spec.r, free=spec.free)


@dataclass(frozen=True)
class SBoxProfile8:
    """Exhaustive profile of a byte substitution.

    lin and diff are raw table maxima (Walsh sum over b != 0, difference
    count over a != 0). The probability views divide out the domain:
    max_diff_prob = diff/256 and max_lin_prob = (lin/256)^2, comparable
    against the 4-bit class bound p^2 = 2^-4.
    """

    bijective: bool
    involutive: bool
    lin: int
    diff: int
    branch_min: int

    @property
    def max_diff_prob(self) -> float:
        return self.diff / 256.0

    @property
    def max_lin_prob(self) -> float:
        return (self.lin / 256.0) ** 2


_BIT_PARITY = None


def _parity_table() -> np.ndarray:
    global _BIT_PARITY
    if _BIT_PARITY is None:
        v = np.arange(256, dtype=np.uint16)
        p = v.copy()
        for shift in (4, 2, 1):
            p ^= p >> shift
        _BIT_PARITY = (p & 1).astype(np.int8)
    return _BIT_PARITY


def profile8(sbox) -> SBoxProfile8:
    """Full 256x256 DDT and 256x255 Walsh scan of an 8-bit table."""
    table = sbox.table if isinstance(sbox, SBox8) else tuple(sbox)
    if len(table) != 256:
        raise ValueError("expected a 256-entry table")
    t = np.array(table, dtype=np.int64)
    x = np.arange(256, dtype=np.int64)

    bijective = len(set(table)) == 256
    involutive = bool(np.all(t[t] == x))

    # DDT row per nonzero input difference
    diff = 0
    for a in range(1, 256):
        row = np.bincount(t[x] ^ t[x ^ a], minlength=256)
        m = int(row.max())
        if m > diff:
            diff = m

    # Walsh spectrum: per output mask b, signs (-1)^{b.S(x)} transformed
    # over x by a fast Walsh-Hadamard pass evaluates all input masks a.
    parity = _parity_table()
    b = np.arange(1, 256, dtype=np.int64)
    signs = 1 - 2 * parity[(b[:, None] & t[None, :])].astype(np.int64)
    w = signs
    h = 1
    while h < 256:
        w = w.reshape(255, -1, 2, h)
        top = w[:, :, 0, :] + w[:, :, 1, :]
        bot = w[:, :, 0, :] - w[:, :, 1, :]
        w = np.stack((top, bot), axis=2)
        h *= 2
    w = w.reshape(255, 256)
    lin = int(np.abs(w).max())

    hw = np.unpackbits(np.arange(256, dtype=np.uint8)[:, None], axis=1).sum(axis=1)
    branch_min = int(
        min(hw[t[x] ^ t[x ^ (1 << j)]].min() for j in range(8))
    )
    return SBoxProfile8(
        bijective=bijective,
        involutive=involutive,
        lin=lin,
        diff=diff,
        branch_min=branch_min,
    )


def class_log2_cardinality(r: int, set_size: int) -> float:
    """log2 of the number of distinct free-choice selections: ((r+1)/2) * log2(|S|)."""
    if r < 1 or r % 2 == 0:
        raise ValueError(f"r must be odd and >= 1, got {r}")
    if set_size < 1:
        raise ValueError("set_size must be >= 1")
    return ((r + 1) // 2) * math.log2(set_size)


def table8_to_hex(sbox) -> str:
    table = sbox.table if isinstance(sbox, SBox8) else tuple(sbox)
    return bytes(table).hex()


def table8_from_hex(s: str) -> SBox8:
    s = s.strip().lower()
    if len(s) != 512:
        raise ValueError("expected exactly 512 hex digits")
    return SBox8.from_bytes(bytes.fromhex(s))
