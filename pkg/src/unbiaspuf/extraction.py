"""Response bits from difference-register values via an inspection bit.

Choosing bit i of a W-bit register splits the value range into bins of width
2**i; a value's response is the parity of its bin index on the unsigned
2's-complement image.  For i = W-1 this reduces to the sign bit.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from unbiaspuf.errors import ContractError


@dataclass(frozen=True)
class DifferenceValue:
    value: int
    width: int

    def __post_init__(self):
        if not 2 <= self.width <= 63:
            raise ContractError(f"register width must be in [2, 63], got {self.width}")
        lo, hi = -(1 << (self.width - 1)), (1 << (self.width - 1)) - 1
        if not lo <= self.value <= hi:
            raise ContractError(f"{self.value} is not representable in {self.width}-bit 2's complement")

    @property
    def unsigned(self):
        return self.value & ((1 << self.width) - 1)


@dataclass(frozen=True)
class InspectionBit:
    index: int

    def __post_init__(self):
        if self.index < 0:
            raise ContractError(f"inspection bit index must be >= 0, got {self.index}")

    @property
    def bin_width(self):
        return 1 << self.index

    def check(self, width):
        if self.index >= width:
            raise ContractError(f"inspection bit {self.index} outside a {width}-bit register")


class Reducer(str, Enum):
    FIRST_REPEAT = "FirstRepeat"
    MAJORITY_VOTE = "MajorityVote"


def bin_index(v: DifferenceValue, ins: InspectionBit) -> int:
    ins.check(v.width)
    return v.unsigned >> ins.index


def extract_bit(v: DifferenceValue, ins: InspectionBit) -> int:
    return bin_index(v, ins) & 1


def extract_bits(values, width, index):
    """Vectorised ``extract_bit`` over an integer array of signed values."""
    InspectionBit(index).check(width)
    u = np.asarray(values, dtype=np.int64) & np.int64((1 << width) - 1)
    return ((u >> index) & 1).astype(np.uint8)


@dataclass(frozen=True, eq=False)
class ResponseMatrix:
    """Reference bits (chips x challenges) plus the per-repeat bits they came from."""

    bits: np.ndarray
    per_repeat: np.ndarray
    inspection_bit: int
    reducer: Reducer

    @property
    def num_chips(self):
        return self.bits.shape[0]

    @property
    def num_challenges(self):
        return self.bits.shape[1]


def reduce_repeats(per_repeat, reducer=Reducer.MAJORITY_VOTE):
    reducer = Reducer(reducer)
    if reducer is Reducer.FIRST_REPEAT:
        return per_repeat[..., 0].astype(np.uint8)
    t = per_repeat.shape[-1]
    ones = per_repeat.sum(axis=-1, dtype=np.int64)
    # even-t ties go to 0
    return (2 * ones > t).astype(np.uint8)


def extract_matrix(tensor, ins: InspectionBit, reducer=Reducer.MAJORITY_VOTE) -> ResponseMatrix:
    ins.check(tensor.width)
    per_repeat = extract_bits(tensor.values, tensor.width, ins.index)
    reducer = Reducer(reducer)
    return ResponseMatrix(reduce_repeats(per_repeat, reducer), per_repeat, ins.index, reducer)
