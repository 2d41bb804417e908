"""Entropy sources with consumption accounting.

Every randomized operation in the package pulls from an EntropySource
instead of a global RNG. Production code uses SystemEntropy; tests and
reproducible experiments use SeededEntropy (infinite, keyed hash counter)
or RecordedEntropy (bounded replay).

Index draws use rejection sampling on ceil(log2(n))-bit values so the
consumed-entropy accounting is exact: drawing from a 256-element pool
costs precisely 8 bits, and a draw from a non-power-of-two range costs
an expected < 2 attempts. Bits are taken from the byte stream through a
little-endian reservoir (each byte appended above the remaining bits).
"""

from __future__ import annotations

import hashlib
import os

from .errors import EntropyExhausted


def _bit_length_ceil(n: int) -> int:
    # ceil(log2(n)) for n >= 1; the number of bits needed to index n items
    return (n - 1).bit_length()


class EntropySource:
    """Byte stream with bit-level draws and consumption counters.

    Subclasses implement _generate(n) returning exactly n bytes or raising
    EntropyExhausted. Counters:

      bytes_consumed  bytes pulled out of the underlying stream
      bits_consumed   bits handed out via take_bits
      index_draws     successful draw_index calls
      rejections      draw attempts discarded by rejection sampling
    """

    def __init__(self) -> None:
        self.bytes_consumed = 0
        self.bits_consumed = 0
        self.index_draws = 0
        self.rejections = 0
        self._reservoir = 0
        self._reservoir_bits = 0

    def _generate(self, n: int) -> bytes:
        raise NotImplementedError

    def read(self, n: int) -> bytes:
        """Return exactly n raw bytes."""
        if n < 0:
            raise ValueError("negative read")
        data = self._generate(n)
        self.bytes_consumed += n
        return data

    def take_bits(self, k: int) -> int:
        """Return a k-bit unsigned integer, consuming k bits of entropy."""
        if k < 0:
            raise ValueError("negative bit count")
        while self._reservoir_bits < k:
            byte = self.read(1)[0]
            self._reservoir |= byte << self._reservoir_bits
            self._reservoir_bits += 8
        value = self._reservoir & ((1 << k) - 1)
        self._reservoir >>= k
        self._reservoir_bits -= k
        self.bits_consumed += k
        return value

    def draw_index(self, n: int) -> int:
        """Uniform draw from range(n) via rejection on ceil(log2(n))-bit values."""
        if n < 1:
            raise ValueError("empty range")
        k = _bit_length_ceil(n)
        while True:
            value = self.take_bits(k)
            if value < n:
                self.index_draws += 1
                return value
            self.rejections += 1

    def shuffled(self, items) -> list:
        """Fisher-Yates shuffle driven by draw_index; returns a new list."""
        out = list(items)
        for i in range(len(out) - 1, 0, -1):
            j = self.draw_index(i + 1)
            out[i], out[j] = out[j], out[i]
        return out


class SystemEntropy(EntropySource):
    """OS randomness (os.urandom)."""

    def _generate(self, n: int) -> bytes:
        return os.urandom(n)


class SeededEntropy(EntropySource):
    """Deterministic infinite stream: SHA-256 over a seed-keyed counter.

    The same seed always replays the identical byte sequence, independent
    of platform and process. Accepts an int or a bytes seed.
    """

    def __init__(self, seed) -> None:
        super().__init__()
        if isinstance(seed, int):
            seed = seed.to_bytes(16, "big", signed=False)
        self._key = bytes(seed)
        self._counter = 0
        self._buffer = b""

    def _generate(self, n: int) -> bytes:
        while len(self._buffer) < n:
            block = hashlib.sha256(
                self._key + self._counter.to_bytes(8, "big")
            ).digest()
            self._counter += 1
            self._buffer += block
        out, self._buffer = self._buffer[:n], self._buffer[n:]
        return out


class RecordedEntropy(EntropySource):
    """Bounded replay of a fixed byte string; raises when it runs dry."""

    def __init__(self, data: bytes) -> None:
        super().__init__()
        self._data = bytes(data)
        self._pos = 0

    @property
    def remaining(self) -> int:
        return len(self._data) - self._pos

    def _generate(self, n: int) -> bytes:
        if self._pos + n > len(self._data):
            raise EntropyExhausted(
                f"recorded entropy exhausted: wanted {n} bytes, "
                f"{self.remaining} left"
            )
        out = self._data[self._pos : self._pos + n]
        self._pos += n
        return out
