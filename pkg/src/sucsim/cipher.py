"""The 64-bit involutive SPN.

A cipher instance is eight involutive byte substitutions plus a fixed
bit permutation, iterated R rounds with the permutation omitted after
the last substitution layer:

    y = S o (P o S)^(R-1) (x)

P is the 8x8 bit-matrix transpose: global bit position p = 8i + j of
the block (byte i, bit j, LSB first) moves to 8j + i. P is self-inverse
and the layer sequence reads the same forwards and backwards, so with
involutive S-boxes the whole cipher is an involution: applying it twice
restores the input, and encryption equals decryption.

Blocks are 8 bytes; hex encoding is byte 0 first. A numpy batch path
processes (N, 8) arrays for the statistical harness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .entropy import EntropySource
from .sbox4 import SBoxPool
from .sbox8 import FeistelSpec, SBox8, feistel8

BLOCK_BYTES = 8


def check_block(block: bytes) -> bytes:
    b = bytes(block)
    if len(b) != BLOCK_BYTES:
        raise ValueError(f"block must be 8 bytes, got {len(b)}")
    return b


def block_to_hex(block: bytes) -> str:
    return check_block(block).hex()


def block_from_hex(s: str) -> bytes:
    s = s.strip().lower()
    if len(s) != 16:
        raise ValueError("expected exactly 16 hex digits")
    return bytes.fromhex(s)


@dataclass(frozen=True)
class SucParams:
    rounds: int = 15
    feistel_r: int = 3
    pool_digest: bytes = b""

    def __post_init__(self):
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if self.feistel_r < 1 or self.feistel_r % 2 == 0:
            raise ValueError("feistel_r must be odd and >= 1")


# 8x8 bit transpose on a 64-bit word via three delta swaps; byte i of the
# little-endian word is row i, bit j is column j, so bit 8i+j <-> 8j+i.
def _transpose64(x: int) -> int:
    t = (x ^ (x >> 7)) & 0x00AA00AA00AA00AA
    x ^= t ^ (t << 7)
    t = (x ^ (x >> 14)) & 0x0000CCCC0000CCCC
    x ^= t ^ (t << 14)
    t = (x ^ (x >> 28)) & 0x00000000F0F0F0F0
    x ^= t ^ (t << 28)
    return x


def p_layer(block: bytes) -> bytes:
    """Move bit 8i+j to bit 8j+i; self-inverse."""
    x = int.from_bytes(check_block(block), "little")
    return _transpose64(x).to_bytes(8, "little")


def s_layer(block: bytes, sboxes) -> bytes:
    """Substitute byte i through table i."""
    b = check_block(block)
    return bytes(sboxes[i].table[b[i]] for i in range(8))


@dataclass(frozen=True)
class SucInstance:
    """Eight involutive byte tables plus round parameters; immutable."""

    sboxes: tuple
    params: SucParams
    _tables: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.sboxes) != 8:
            raise ValueError("an instance needs exactly 8 S-boxes")
        for i, s in enumerate(self.sboxes):
            if not isinstance(s, SBox8):
                raise TypeError("sboxes must be SBox8 values")
            if not s.is_involution():
                raise ValueError(f"S-box {i} is not an involution")
        arr = np.array([s.table for s in self.sboxes], dtype=np.uint8)
        arr.setflags(write=False)
        object.__setattr__(self, "_tables", arr)

    def tables_blob(self) -> bytes:
        """The 2048-byte concatenation sealed into device storage."""
        return b"".join(s.to_bytes() for s in self.sboxes)


def apply(suc: SucInstance, block: bytes) -> bytes:
    """Run the cipher; its own inverse."""
    b = check_block(block)
    for _ in range(suc.params.rounds - 1):
        b = p_layer(s_layer(b, suc.sboxes))
    return s_layer(b, suc.sboxes)


def apply_batch(suc: SucInstance, blocks: np.ndarray) -> np.ndarray:
    """Vectorized apply over an (N, 8) uint8 array."""
    b = np.asarray(blocks, dtype=np.uint8)
    if b.ndim != 2 or b.shape[1] != 8:
        raise ValueError("blocks must have shape (N, 8)")
    tables = suc._tables
    cols = np.arange(8)[None, :]
    n = b.shape[0]
    for _ in range(suc.params.rounds - 1):
        b = tables[cols, b]
        bits = np.unpackbits(b, axis=1, bitorder="little")
        bits = bits.reshape(n, 8, 8).transpose(0, 2, 1).reshape(n, 64)
        b = np.packbits(bits, axis=1, bitorder="little")
    return tables[cols, b]


def draw_instance(
    pool: SBoxPool,
    params: SucParams,
    entropy: EntropySource,
    replicate_single: bool = False,
) -> SucInstance:
    """Assemble an instance by drawing free-choice indices from a pool.

    Default draws 8 x (r+1)/2 indices (one Feistel spec per S-box
    position, box-major order). replicate_single draws one spec and uses
    the same byte table in all eight positions.
    """
    per_box = (params.feistel_r + 1) // 2
    if replicate_single:
        free = tuple(pool.entries[entropy.draw_index(pool.count)] for _ in range(per_box))
        box = feistel8(FeistelSpec(r=params.feistel_r, free=free))
        sboxes = (box,) * 8
    else:
        sboxes = tuple(
            feistel8(
                FeistelSpec(
                    r=params.feistel_r,
                    free=tuple(
                        pool.entries[entropy.draw_index(pool.count)]
                        for _ in range(per_box)
                    ),
                )
            )
            for _ in range(8)
        )
    return SucInstance(sboxes=sboxes, params=params)


def suc_log2_cardinality(r: int, set_size: int) -> float:
    """log2 of the number of distinct instances: 8 * ((r+1)/2) * log2(|S|)."""
    if r < 1 or r % 2 == 0:
        raise ValueError(f"r must be odd and >= 1, got {r}")
    if set_size < 1:
        raise ValueError("set_size must be >= 1")
    return 8 * ((r + 1) // 2) * math.log2(set_size)
