import numpy as np
import pytest

from fsqkd.hamming import (
    bits_to_syndrome,
    block_syndrome,
    decode_flip_position,
    syndrome_order,
    syndrome_to_bits,
)


def brute_force_single_error(a_block, b_block):
    """Oracle: the unique differing position, if exactly one exists."""
    diffs = np.nonzero(a_block != b_block)[0]
    return int(diffs[0]) if len(diffs) == 1 else None


class TestSyndromeOrder:
    @pytest.mark.parametrize("length,order", [
        (1, 1), (3, 2), (4, 3), (7, 3), (8, 4), (15, 4), (16, 5),
        (31, 5), (24, 5), (48, 6), (73, 7), (4096, 13),
    ])
    def test_smallest_covering_order(self, length, order):
        assert syndrome_order(length) == order
        assert (1 << order) - 1 >= length

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            syndrome_order(0)


class TestSingleErrorDecoding:
    def test_seven_bit_block_exhaustive(self):
        # every single-bit error in a 7-bit block is pinned by one 3-bit
        # syndrome difference
        rng = np.random.default_rng(5)
        base = rng.integers(0, 2, 7).astype(np.uint8)
        assert syndrome_order(7) == 3
        for position in range(7):
            other = base.copy()
            other[position] ^= 1
            diff = block_syndrome(base) ^ block_syndrome(other)
            decoded = decode_flip_position(diff, 7)
            assert decoded == brute_force_single_error(base, other) == position

    @pytest.mark.parametrize("length", [5, 12, 24, 63, 100])
    def test_random_blocks_single_errors(self, length):
        rng = np.random.default_rng(length)
        for _ in range(50):
            base = rng.integers(0, 2, length).astype(np.uint8)
            position = int(rng.integers(0, length))
            other = base.copy()
            other[position] ^= 1
            diff = block_syndrome(base) ^ block_syndrome(other)
            assert decode_flip_position(diff, length) == position

    def test_equal_blocks_have_zero_difference(self):
        block = np.random.default_rng(9).integers(0, 2, 24).astype(np.uint8)
        assert block_syndrome(block) ^ block_syndrome(block.copy()) == 0
        assert decode_flip_position(0, 24) is None

    def test_pad_positions_rejected(self):
        # a syndrome pointing into the public zero padding cannot be a
        # real error; the decoder must refuse to flip
        assert decode_flip_position(25, 24) is None
        assert decode_flip_position(31, 24) is None
        assert decode_flip_position(24, 24) == 23


class TestSyndromeBits:
    def test_bit_vector_round_trip(self):
        for value in (0, 1, 5, 12, 31):
            bits = syndrome_to_bits(value, 5)
            assert len(bits) == 5
            assert bits_to_syndrome(bits) == value

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            syndrome_to_bits(32, 5)
