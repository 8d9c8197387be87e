"""Stuck-at fault maps: generation, application and masked/unmasked counting."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .ternary import BitPair, DimensionError


class FaultState(enum.IntEnum):
    NONE = 0
    SA0 = 1
    SA1 = 2


@dataclass(frozen=True)
class FaultInjectionConfig:
    rate: float
    sa1_fraction: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.rate <= 1.0:
            raise ValueError(f"fault rate must be in [0, 1], got {self.rate!r}")
        if not 0.0 <= self.sa1_fraction <= 1.0:
            raise ValueError(f"sa1_fraction must be in [0, 1], got {self.sa1_fraction!r}")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")


@dataclass(frozen=True, eq=False)
class FaultMap:
    """Fault state of every memory element of a tile.

    ``faults`` has shape ``(rows, cols, 2)``; the last axis is (m1, m2) and
    holds :class:`FaultState` codes.
    """

    faults: np.ndarray

    def __post_init__(self) -> None:
        f = np.asarray(self.faults)
        if f.ndim != 3 or f.shape[2] != 2:
            raise DimensionError(f"fault array must have shape (rows, cols, 2), got {f.shape}")
        if f.size and (f.min() < 0 or f.max() > 2):
            raise ValueError("fault codes must be 0 (none), 1 (SA0) or 2 (SA1)")
        f = f.astype(np.uint8, copy=True)
        f.setflags(write=False)
        object.__setattr__(self, "faults", f)

    @classmethod
    def empty(cls, rows: int, cols: int) -> "FaultMap":
        return cls(np.zeros((rows, cols, 2), dtype=np.uint8))

    @property
    def rows(self) -> int:
        return self.faults.shape[0]

    @property
    def cols(self) -> int:
        return self.faults.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.faults.shape[:2]

    @property
    def fault_count(self) -> int:
        return int(np.count_nonzero(self.faults))

    @property
    def sa1_count(self) -> int:
        return int(np.count_nonzero(self.faults == FaultState.SA1))

    def cell(self, row: int, col: int) -> tuple[FaultState, FaultState]:
        a, b = self.faults[row, col]
        return FaultState(int(a)), FaultState(int(b))

    def window(self, row: int, col: int, rows: int, cols: int) -> "FaultMap":
        sub = self.faults[row:row + rows, col:col + cols]
        if sub.shape[:2] != (rows, cols):
            raise DimensionError(
                f"window {rows}x{cols} at ({row},{col}) exceeds fault map {self.rows}x{self.cols}")
        return FaultMap(sub)

    def __eq__(self, other) -> bool:
        if not isinstance(other, FaultMap):
            return NotImplemented
        return self.faults.shape == other.faults.shape and bool(np.array_equal(self.faults, other.faults))

    def __hash__(self) -> int:
        return hash((self.faults.shape, self.faults.tobytes()))

    def __repr__(self) -> str:
        return f"FaultMap({self.rows}x{self.cols}, faults={self.fault_count})"


def inject_faults(rows: int, cols: int, cfg: FaultInjectionConfig, tile_id: int = 0) -> FaultMap:
    """Draw an i.i.d. stuck-at fault map for a ``rows x cols`` tile.

    Randomness comes from a Philox counter-based generator keyed by
    ``(seed, tile_id)``, so a tile's map depends only on its own key and
    never on how many other tiles were generated before it.
    """
    rng = np.random.Generator(np.random.Philox(key=[cfg.seed, tile_id]))
    faulty = rng.random((rows, cols, 2)) < cfg.rate
    sa1 = rng.random((rows, cols, 2)) < cfg.sa1_fraction
    faults = np.where(faulty, np.where(sa1, FaultState.SA1, FaultState.SA0), FaultState.NONE)
    return FaultMap(faults.astype(np.uint8))


def apply_faults(programmed: BitPair, fault: tuple[FaultState, FaultState]) -> BitPair:
    """Bits actually held by one cell after stuck-at overrides."""
    out = []
    for bit, f in zip(programmed, fault):
        if f == FaultState.SA0:
            out.append(0)
        elif f == FaultState.SA1:
            out.append(1)
        else:
            out.append(bit)
    return BitPair(*out)


def apply_fault_array(bits: np.ndarray, faults: np.ndarray) -> np.ndarray:
    bits = np.asarray(bits)
    faults = np.asarray(faults)
    if bits.shape != faults.shape:
        raise DimensionError(f"bit array {bits.shape} does not match fault array {faults.shape}")
    out = np.where(faults == FaultState.SA0, 0, bits)
    out = np.where(faults == FaultState.SA1, 1, out)
    return out.astype(np.uint8)


def classify_faults(bits: np.ndarray, fault_map: FaultMap) -> tuple[int, int]:
    """Return ``(masked, unmasked)`` counts for programmed ``bits``.

    A fault is unmasked when its forced value differs from the bit that was
    programmed into the element.
    """
    bits = np.asarray(bits)
    if bits.shape != fault_map.faults.shape:
        raise DimensionError(
            f"programmed bits {bits.shape[:2]} do not match fault map {fault_map.shape}")
    f = fault_map.faults
    faulty = f != FaultState.NONE
    forced = (f == FaultState.SA1).astype(np.uint8)
    unmasked = int(np.count_nonzero(faulty & (forced != bits)))
    return int(np.count_nonzero(faulty)) - unmasked, unmasked


def diagnose(fault_map: FaultMap) -> FaultMap:
    # Perfect diagnosis; replace to model test escapes.
    return fault_map
