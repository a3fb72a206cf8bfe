"""Shared domain types: polarization states, key buffers, key comparison.

The protocol uses two non-orthogonal preparation states (+45deg for 0,
vertical for 1) and two analyzers (horizontal reveals 0, -45deg reveals 1).
A conclusive firing of an analyzer excludes the orthogonal preparation, so
the assigned bit is certain absent noise.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np


class Polarization(enum.Enum):
    """The four linear polarization states used by the two-state protocol.

    Values are angles in degrees measured from horizontal.
    """

    V = 90.0
    P45 = 45.0
    H = 0.0
    M45 = -45.0

    @property
    def angle_deg(self) -> float:
        return self.value


def overlap_probability(sent: Polarization, analyzer: Polarization) -> float:
    """Probability that ``sent`` passes a polarizer aligned with ``analyzer``.

    Equals cos^2 of the angle between the two states.  Multiples of 45 deg
    are resolved exactly so orthogonal pairs give 0.0, not a rounding dust.
    """
    diff = abs(sent.angle_deg - analyzer.angle_deg) % 180.0
    exact = {0.0: 1.0, 45.0: 0.5, 90.0: 0.0, 135.0: 0.5}
    if diff in exact:
        return exact[diff]
    return math.cos(math.radians(diff)) ** 2


# B92 mapping: Alice's bit -> prepared state; Bob's analyzer -> revealed bit.
BIT_TO_STATE = {0: Polarization.P45, 1: Polarization.V}
ANALYZER_FOR_BIT = {0: Polarization.H, 1: Polarization.M45}


class Stage(enum.Enum):
    """Provenance stage of a key buffer."""

    RAW = "raw"
    SIFTED = "sifted"
    CORRECTED = "corrected"
    SECRET = "secret"


@dataclass
class KeyBuffer:
    """An indexed bit sequence plus a ledger of publicly disclosed bits.

    ``indices`` carries the clock tick of each bit for sifted keys and is
    None otherwise.  ``leaked_bits`` counts bits of key-correlated
    information disclosed on the public channel about this buffer; it only
    grows as the key moves through reconciliation.
    """

    stage: Stage
    bits: np.ndarray
    indices: np.ndarray | None = None
    leaked_bits: int = 0

    def __post_init__(self) -> None:
        self.bits = np.ascontiguousarray(self.bits, dtype=np.uint8)
        if self.indices is not None:
            self.indices = np.ascontiguousarray(self.indices, dtype=np.int64)
        self.validate()

    def validate(self) -> None:
        if self.bits.ndim != 1:
            raise ValueError("bits must be one-dimensional")
        if np.any(self.bits > 1):
            raise ValueError("bits must be 0/1")
        if self.leaked_bits < 0:
            raise ValueError("leaked_bits must be non-negative")
        if self.stage is Stage.SIFTED:
            if self.indices is None:
                raise ValueError("sifted keys carry tick indices")
            if len(self.indices) != len(self.bits):
                raise ValueError("indices and bits must have equal length")
            if len(self.indices) > 1 and np.any(np.diff(self.indices) <= 0):
                raise ValueError("indices must be strictly increasing")

    def __len__(self) -> int:
        return len(self.bits)

    def with_stage(self, stage: Stage, bits: np.ndarray | None = None,
                   indices: np.ndarray | None = None,
                   leaked_bits: int | None = None) -> "KeyBuffer":
        return KeyBuffer(
            stage=stage,
            bits=self.bits if bits is None else bits,
            indices=indices,
            leaked_bits=self.leaked_bits if leaked_bits is None else leaked_bits,
        )


def compare_keys(a: KeyBuffer, b: KeyBuffer) -> tuple[int, float]:
    """Hamming distance and bit error ratio between two equal-length keys."""
    if a.stage is not b.stage:
        raise ValueError(f"stage mismatch: {a.stage} vs {b.stage}")
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    if len(a) == 0:
        return 0, 0.0
    errors = int(np.count_nonzero(a.bits != b.bits))
    return errors, errors / len(a)
