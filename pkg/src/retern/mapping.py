"""Fault-aware weight mapping: FAST column flips, zero-fix and their composition.

FAST chooses per physical tile column whether to store ``W`` or ``-W``,
whichever leaves fewer weight errors under the diagnosed faults.  Zero-fix
re-encodes faulty zero cells as (1, 1) when that hides the fault.  The two
touch disjoint weights, so applying them in either order gives one plan.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .array_sim import effective_weights, program_tile, store_tile
from .faults import FaultMap, apply_fault_array
from .ternary import DimensionError, TernaryMatrix, ZeroVariant, decode_array, encode_array


class RepairMode(enum.Enum):
    BASELINE = "baseline"
    ZERO_FIX_ONLY = "zero_fix"
    FAST_ONLY = "fast"
    RETERN = "retern"

    @classmethod
    def parse(cls, text: str) -> "RepairMode":
        key = text.strip().lower().replace("-", "_")
        aliases = {"zero_fix_only": "zero_fix", "fast_only": "fast", "tfix": "zero_fix"}
        key = aliases.get(key, key)
        for m in cls:
            if m.value == key:
                return m
        raise ValueError(f"unknown repair mode {text!r}; expected one of {[m.value for m in cls]}")

    @property
    def uses_fast(self) -> bool:
        return self in (RepairMode.FAST_ONLY, RepairMode.RETERN)

    @property
    def uses_zero_fix(self) -> bool:
        return self in (RepairMode.ZERO_FIX_ONLY, RepairMode.RETERN)


@dataclass(frozen=True)
class ColumnDecision:
    err_standard: int
    err_flipped: int

    @property
    def flip(self) -> int:
        return int(self.err_flipped < self.err_standard)


@dataclass(frozen=True, eq=False)
class MappingPlan:
    """Per-tile mapping decisions.

    ``zeros`` marks where the ideal weight is 0 (the cells that carry a zero
    variant); ``zero11`` is the subset stored as (1, 1).
    """

    mode: RepairMode
    col_flip: np.ndarray
    zeros: np.ndarray
    zero11: np.ndarray

    def __post_init__(self) -> None:
        flip = np.array(self.col_flip, dtype=np.uint8)
        zeros = np.array(self.zeros, dtype=bool)
        zero11 = np.array(self.zero11, dtype=bool)
        if zeros.shape != zero11.shape or zeros.ndim != 2:
            raise DimensionError(f"zero masks disagree: {zeros.shape} vs {zero11.shape}")
        if flip.shape != (zeros.shape[1],):
            raise DimensionError(f"col_flip length {flip.shape} does not match {zeros.shape[1]} columns")
        if (zero11 & ~zeros).any():
            raise ValueError("zero11 cells must be zero-weight cells")
        for name, arr in (("col_flip", flip), ("zeros", zeros), ("zero11", zero11)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def shape(self) -> tuple[int, int]:
        return self.zeros.shape

    @property
    def flipped_columns(self) -> int:
        return int(self.col_flip.sum())

    @property
    def zero11_cells(self) -> int:
        return int(self.zero11.sum())

    def zero_variants(self) -> dict[tuple[int, int], ZeroVariant]:
        return {(int(r), int(c)): ZeroVariant.ZERO_11 if self.zero11[r, c] else ZeroVariant.ZERO_00
                for r, c in zip(*np.nonzero(self.zeros))}

    def __eq__(self, other) -> bool:
        if not isinstance(other, MappingPlan):
            return NotImplemented
        return (self.mode is other.mode
                and self.shape == other.shape
                and bool(np.array_equal(self.col_flip, other.col_flip))
                and bool(np.array_equal(self.zeros, other.zeros))
                and bool(np.array_equal(self.zero11, other.zero11)))

    __hash__ = None


def _check(w_ideal: TernaryMatrix, fault_map: FaultMap) -> None:
    if w_ideal.shape != fault_map.shape:
        raise DimensionError(f"weights {w_ideal.shape} do not match fault map {fault_map.shape}")


def _column_error_arrays(w: np.ndarray, faults: np.ndarray, zero11=None) -> tuple[np.ndarray, np.ndarray]:
    w = w.astype(np.int16)
    hw = decode_array(apply_fault_array(encode_array(w, zero11), faults)).astype(np.int16)
    hw_flipped = decode_array(apply_fault_array(encode_array(-w, zero11), faults)).astype(np.int16)
    err_standard = np.abs(hw - w).sum(axis=0)
    err_flipped = np.abs(hw_flipped + w).sum(axis=0)
    return err_standard.astype(np.int64), err_flipped.astype(np.int64)


def column_errors(w_ideal_col, faults_col, zero11_col=None) -> tuple[int, int]:
    """``(err_standard, err_flipped)`` for one column.

    ``faults_col`` has shape ``(rows, 2)``.  Zeros are programmed as (0, 0)
    unless ``zero11_col`` says otherwise.
    """
    w = np.asarray(w_ideal_col)
    f = np.asarray(faults_col)
    if w.ndim != 1 or f.shape != (w.shape[0], 2):
        raise DimensionError(f"column of {w.shape} weights does not match fault column {f.shape}")
    z = None if zero11_col is None else np.asarray(zero11_col, dtype=bool)[:, None]
    es, ef = _column_error_arrays(w[:, None], f[:, None, :], z)
    return int(es[0]), int(ef[0])


def column_decisions(w_ideal: TernaryMatrix, fault_map: FaultMap, zero11=None) -> list[ColumnDecision]:
    _check(w_ideal, fault_map)
    es, ef = _column_error_arrays(w_ideal.data, fault_map.faults, zero11)
    return [ColumnDecision(int(a), int(b)) for a, b in zip(es, ef)]


def fast(w_ideal: TernaryMatrix, fault_map: FaultMap, zero11=None) -> np.ndarray:
    """col_flip vector: 1 where the flipped column has strictly less error."""
    _check(w_ideal, fault_map)
    es, ef = _column_error_arrays(w_ideal.data, fault_map.faults, zero11)
    return (ef < es).astype(np.uint8)


def zero_fix(w_ideal: TernaryMatrix, fault_map: FaultMap, col_flip=None) -> np.ndarray:
    """Boolean mask of zero cells to store as (1, 1).

    A cell moves to (1, 1) only when (0, 0) reads back nonzero and (1, 1)
    reads back zero; otherwise it keeps (0, 0).  col_flip never matters
    because -0 = 0, but its length is checked.
    """
    _check(w_ideal, fault_map)
    if col_flip is not None and np.asarray(col_flip).shape != (w_ideal.cols,):
        raise DimensionError(f"col_flip length {np.asarray(col_flip).shape} does not match {w_ideal.cols} columns")
    f = fault_map.faults
    as00 = decode_array(apply_fault_array(np.zeros_like(f), f))
    as11 = decode_array(apply_fault_array(np.ones_like(f), f))
    return (w_ideal.data == 0) & (as00 != 0) & (as11 == 0)


def plan_mapping(w_ideal: TernaryMatrix, fault_map: FaultMap, mode: RepairMode,
                 zero_fix_first: bool = False) -> MappingPlan:
    _check(w_ideal, fault_map)
    zeros = w_ideal.data == 0
    col_flip = np.zeros(w_ideal.cols, dtype=np.uint8)
    zero11 = np.zeros(w_ideal.shape, dtype=bool)
    if zero_fix_first:
        if mode.uses_zero_fix:
            zero11 = zero_fix(w_ideal, fault_map, col_flip)
        if mode.uses_fast:
            col_flip = fast(w_ideal, fault_map, zero11)
    else:
        if mode.uses_fast:
            col_flip = fast(w_ideal, fault_map)
        if mode.uses_zero_fix:
            zero11 = zero_fix(w_ideal, fault_map, col_flip)
    return MappingPlan(mode, col_flip, zeros, zero11)


def realize(w_ideal: TernaryMatrix, plan: MappingPlan, fault_map: FaultMap):
    """Program ``plan`` and overlay faults; returns ``(programmed, stored)``."""
    _check(w_ideal, fault_map)
    if plan.shape != w_ideal.shape:
        raise DimensionError(f"plan {plan.shape} does not match weights {w_ideal.shape}")
    if not np.array_equal(plan.zeros, w_ideal.data == 0):
        raise ValueError("plan zero positions do not match the zero weights")
    programmed = program_tile(w_ideal, plan.zero11, plan.col_flip)
    return programmed, store_tile(programmed, fault_map)


def mapping_error(w_ideal: TernaryMatrix, plan: MappingPlan, fault_map: FaultMap) -> int:
    """L1 distance between the effective hardware weights and ``w_ideal``."""
    _, stored = realize(w_ideal, plan, fault_map)
    diff = effective_weights(stored).data.astype(np.int16) - w_ideal.data
    return int(np.abs(diff).sum())
