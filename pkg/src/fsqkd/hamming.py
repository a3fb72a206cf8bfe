"""Hamming syndrome arithmetic on bit-vector blocks.

A block of k bits is treated as the first k positions of a Hamming code of
length 2^r - 1, where r is the smallest order covering k; the remaining
positions are publicly known zeros.  The parity-check column of position p
is the binary representation of p + 1, so the syndrome of a single error
at p is exactly p + 1 and the syndrome of the XOR of two blocks decodes
the (unique) differing position when the blocks differ in one place.
"""

from __future__ import annotations

import numpy as np


def syndrome_order(block_len: int) -> int:
    """Smallest r with 2^r - 1 >= block_len."""
    if block_len < 1:
        raise ValueError("block length must be positive")
    r = int(block_len).bit_length()
    if (1 << r) - 1 < block_len:
        r += 1
    return r


def block_syndrome(bits: np.ndarray) -> int:
    """Syndrome of a block read as a (padded) corrupted codeword."""
    positions = np.nonzero(np.asarray(bits, dtype=np.uint8))[0]
    if len(positions) == 0:
        return 0
    return int(np.bitwise_xor.reduce(positions.astype(np.int64) + 1))


def syndrome_to_bits(syndrome: int, order: int) -> np.ndarray:
    """Big-endian bit vector of a syndrome value."""
    if syndrome >> order:
        raise ValueError("syndrome out of range for order")
    return np.array([(syndrome >> (order - 1 - i)) & 1 for i in range(order)],
                    dtype=np.uint8)


def bits_to_syndrome(bits: np.ndarray) -> int:
    value = 0
    for bit in np.asarray(bits, dtype=np.uint8):
        value = (value << 1) | int(bit)
    return value


def decode_flip_position(syndrome_diff: int, block_len: int) -> int | None:
    """Position to flip given the syndrome of the A-B difference.

    Returns None when no single in-range position explains the syndrome
    (zero syndrome, or a pad position outside the block): the true error
    pattern then has weight >= 3 and is left for another pass.
    """
    if syndrome_diff == 0:
        return None
    position = syndrome_diff - 1
    if position >= block_len:
        return None
    return position
