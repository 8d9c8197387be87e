"""Ternary weights, TCiM bitcell encodings and absmean quantization.

A ternary bitcell holds two binary memory elements ``(m1, m2)`` and is read
as ``m1 - m2``.  The fourth state ``(1, 1)`` is unused by the standard
encoding and decodes to zero as well, which is what zero-fix exploits.

Tile-level code works on bit arrays of shape ``(rows, cols, 2)`` where the
last axis is ``(m1, m2)``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

DEFAULT_EPSILON = 1e-6

TERNARY_VALUES = (-1, 0, 1)


class DimensionError(ValueError):
    """Shapes of two collaborating objects disagree."""


def check_ternary(value: int) -> int:
    if isinstance(value, bool) or int(value) != value or value not in TERNARY_VALUES:
        raise ValueError(f"ternary weight must be one of -1, 0, +1, got {value!r}")
    return int(value)


class BitPair(NamedTuple):
    m1: int
    m2: int

    @classmethod
    def of(cls, m1: int, m2: int) -> "BitPair":
        if m1 not in (0, 1) or m2 not in (0, 1):
            raise ValueError(f"bits must be 0 or 1, got ({m1!r}, {m2!r})")
        return cls(int(m1), int(m2))

    def __str__(self) -> str:
        return f"{self.m1}{self.m2}"


class ZeroVariant(enum.Enum):
    ZERO_00 = "00"
    ZERO_11 = "11"


def encode(w: int, zero_variant: ZeroVariant = ZeroVariant.ZERO_00) -> BitPair:
    """Map a ternary weight to the bit pair written into the cell."""
    w = check_ternary(w)
    if w == 1:
        return BitPair(1, 0)
    if w == -1:
        return BitPair(0, 1)
    if zero_variant is ZeroVariant.ZERO_11:
        return BitPair(1, 1)
    return BitPair(0, 0)


def decode(b: BitPair) -> int:
    return b[0] - b[1]


@dataclass(frozen=True, eq=False)
class TernaryMatrix:
    """Dense, read-only matrix of weights in {-1, 0, +1}."""

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.data)
        if arr.ndim != 2:
            raise DimensionError(f"ternary matrix must be 2-D, got shape {arr.shape}")
        if arr.size and not np.isin(arr, TERNARY_VALUES).all():
            bad = arr[~np.isin(arr, TERNARY_VALUES)].flat[0]
            raise ValueError(f"ternary matrix holds non-ternary value {bad!r}")
        arr = arr.astype(np.int8, copy=True)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_rows(cls, rows) -> "TernaryMatrix":
        if len(rows) == 0:
            return cls(np.zeros((0, 0), dtype=np.int8))
        return cls(np.array(rows, dtype=np.int64))

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def sparsity(self) -> float:
        if self.data.size == 0:
            return 0.0
        return float(np.count_nonzero(self.data == 0)) / self.data.size

    def __getitem__(self, idx):
        return self.data[idx]

    def __eq__(self, other) -> bool:
        if not isinstance(other, TernaryMatrix):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.data, other.data))

    def __hash__(self) -> int:
        return hash((self.shape, self.data.tobytes()))

    def __repr__(self) -> str:
        return f"TernaryMatrix({self.rows}x{self.cols}, sparsity={self.sparsity:.4f})"


@dataclass(frozen=True, eq=False)
class QuantizationResult:
    ternary: TernaryMatrix
    gamma: float
    epsilon: float


def round_half_away(x):
    """Round to nearest integer, ties away from zero (scalar or array)."""
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def round_clip(x: float, a: float, b: float) -> int:
    if a > b:
        raise ValueError(f"round_clip needs a <= b, got a={a}, b={b}")
    if not math.isfinite(x):
        raise ValueError(f"round_clip is undefined for non-finite input {x!r}")
    return int(max(a, min(b, round_half_away(x))))


def quantize_absmean(W, epsilon: float = DEFAULT_EPSILON) -> QuantizationResult:
    """Per-tensor absmean ternarization: RoundClip(W / (gamma + eps), -1, 1)."""
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon!r}")
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2 or W.size == 0:
        raise DimensionError(f"quantize_absmean needs a nonempty 2-D matrix, got shape {W.shape}")
    if not np.isfinite(W).all():
        raise ValueError("weight matrix contains non-finite values")
    gamma = float(np.mean(np.abs(W)))
    scaled = W / (gamma + epsilon)
    q = np.clip(round_half_away(scaled), -1, 1)
    return QuantizationResult(TernaryMatrix(q.astype(np.int8)), gamma, float(epsilon))


# -- array forms used by the tile simulator ---------------------------------

def encode_array(weights: np.ndarray, zero11: np.ndarray | None = None) -> np.ndarray:
    """Encode a ternary array into bits of shape ``weights.shape + (2,)``.

    ``zero11`` marks zero cells stored as (1, 1); it is ignored where the
    weight is nonzero.
    """
    w = np.asarray(weights)
    bits = np.empty(w.shape + (2,), dtype=np.uint8)
    bits[..., 0] = w == 1
    bits[..., 1] = w == -1
    if zero11 is not None:
        z = np.asarray(zero11, dtype=bool) & (w == 0)
        bits[z] = 1
    return bits


def decode_array(bits: np.ndarray) -> np.ndarray:
    bits = np.asarray(bits)
    return bits[..., 0].astype(np.int8) - bits[..., 1].astype(np.int8)
