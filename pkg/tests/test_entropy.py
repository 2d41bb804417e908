"""Entropy source contracts: determinism, bit accounting, rejection draws.

The consumption counters back the personalization cost accounting, so
their exact values are part of the contract, not an implementation
detail.
"""

import pytest
from hypothesis import given, strategies as st

from sucsim.entropy import RecordedEntropy, SeededEntropy, SystemEntropy
from sucsim.errors import EntropyExhausted


def test_seeded_streams_replay():
    a = SeededEntropy(42)
    b = SeededEntropy(42)
    assert a.read(100) == b.read(100)


def test_seeded_int_seed_matches_bytes_seed():
    a = SeededEntropy(5)
    b = SeededEntropy((5).to_bytes(16, "big"))
    assert a.read(64) == b.read(64)


def test_seeded_streams_differ_across_seeds():
    assert SeededEntropy(1).read(32) != SeededEntropy(2).read(32)


def test_seeded_read_is_a_stream():
    a = SeededEntropy(9)
    b = SeededEntropy(9)
    assert a.read(10) + a.read(10) + a.read(12) == b.read(32)


def test_read_counts_bytes():
    e = SeededEntropy(0)
    e.read(5)
    e.read(0)
    e.read(7)
    assert e.bytes_consumed == 12


def test_take_bits_is_little_endian_within_the_reservoir():
    # 0xb4 = 1011_0100: the low nibble comes out first
    e = RecordedEntropy(b"\xb4")
    assert e.take_bits(4) == 0x4
    assert e.take_bits(4) == 0xB
    assert e.bits_consumed == 8
    assert e.bytes_consumed == 1


def test_take_bits_zero_is_free():
    e = RecordedEntropy(b"")
    assert e.take_bits(0) == 0
    assert e.bits_consumed == 0
    assert e.bytes_consumed == 0


@given(st.integers(0, 2**64 - 1), st.integers(1, 64))
def test_take_bits_stays_in_range(seed, k):
    v = SeededEntropy(seed).take_bits(k)
    assert 0 <= v < 2**k


def test_draw_index_power_of_two_has_exact_cost():
    e = SeededEntropy(3)
    for _ in range(10):
        v = e.draw_index(256)
        assert 0 <= v < 256
    assert e.index_draws == 10
    assert e.rejections == 0
    assert e.bits_consumed == 80
    assert e.bytes_consumed == 10


def test_draw_index_rejection_path():
    # n=200 needs 8-bit attempts; 0xff is rejected, 0x10 accepted
    e = RecordedEntropy(b"\xff\x10")
    assert e.draw_index(200) == 0x10
    assert e.rejections == 1
    assert e.index_draws == 1
    assert e.bits_consumed == 16


def test_draw_index_singleton_consumes_nothing():
    e = RecordedEntropy(b"")
    assert e.draw_index(1) == 0
    assert e.bits_consumed == 0


def test_draw_index_rejects_empty_range():
    with pytest.raises(ValueError):
        SeededEntropy(0).draw_index(0)


@given(st.integers(0, 2**32), st.integers(1, 300))
def test_draw_index_in_range(seed, n):
    assert 0 <= SeededEntropy(seed).draw_index(n) < n


def test_draw_index_covers_the_range():
    e = SeededEntropy(11)
    seen = {e.draw_index(7) for _ in range(500)}
    assert seen == set(range(7))


@given(st.lists(st.integers(), max_size=40), st.integers(0, 2**32))
def test_shuffled_is_a_permutation(items, seed):
    out = SeededEntropy(seed).shuffled(items)
    assert sorted(out) == sorted(items)


def test_shuffled_deterministic_per_seed():
    items = list(range(20))
    assert SeededEntropy(4).shuffled(items) == SeededEntropy(4).shuffled(items)
    assert SeededEntropy(4).shuffled(items) != SeededEntropy(5).shuffled(items)


def test_recorded_replays_and_exhausts():
    e = RecordedEntropy(b"abcdef")
    assert e.read(4) == b"abcd"
    assert e.remaining == 2
    with pytest.raises(EntropyExhausted):
        e.read(3)
    assert e.read(2) == b"ef"
    assert e.remaining == 0


def test_system_entropy_produces_bytes():
    e = SystemEntropy()
    data = e.read(16)
    assert len(data) == 16
    assert e.bytes_consumed == 16


def test_negative_read_rejected():
    with pytest.raises(ValueError):
        SeededEntropy(0).read(-1)
    with pytest.raises(ValueError):
        SeededEntropy(0).take_bits(-1)
