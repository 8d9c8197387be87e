"""TCiM tile model: programming, fault overlay and the col_flip-aware MVM.

The MVM is integer-exact.  Each column produces ``x = sum(I * m1)`` and
``y = sum(I * m2)`` and the periphery outputs ``x - y`` for a standard
column or ``y - x`` for a flipped one.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .faults import FaultMap, apply_fault_array
from .ternary import DimensionError, TernaryMatrix, decode_array, encode_array

ACT_MIN, ACT_MAX = -128, 127


def _frozen(arr: np.ndarray, dtype) -> np.ndarray:
    arr = np.array(arr, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def _check_col_flip(col_flip, cols: int) -> np.ndarray:
    flip = np.asarray(col_flip)
    if flip.shape != (cols,):
        raise DimensionError(f"col_flip length {flip.shape} does not match {cols} columns")
    if flip.size and not np.isin(flip, (0, 1)).all():
        raise ValueError("col_flip entries must be 0 or 1")
    return flip.astype(np.uint8)


@dataclass(frozen=True, eq=False)
class ProgrammedTile:
    bits: np.ndarray
    col_flip: np.ndarray

    def __post_init__(self) -> None:
        bits = np.asarray(self.bits)
        if bits.ndim != 3 or bits.shape[2] != 2:
            raise DimensionError(f"tile bits must have shape (rows, cols, 2), got {bits.shape}")
        if bits.size and not np.isin(bits, (0, 1)).all():
            raise ValueError("tile bits must be 0 or 1")
        object.__setattr__(self, "bits", _frozen(bits, np.uint8))
        object.__setattr__(self, "col_flip", _frozen(_check_col_flip(self.col_flip, bits.shape[1]), np.uint8))

    @property
    def rows(self) -> int:
        return self.bits.shape[0]

    @property
    def cols(self) -> int:
        return self.bits.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape[:2]

    def __eq__(self, other) -> bool:
        if type(other) is not type(self):
            return NotImplemented
        return (self.bits.shape == other.bits.shape
                and bool(np.array_equal(self.bits, other.bits))
                and bool(np.array_equal(self.col_flip, other.col_flip)))

    __hash__ = None


class StoredTile(ProgrammedTile):
    """Bits the array actually holds once stuck-at faults override programming."""


@dataclass(frozen=True)
class TilePlacement:
    row: int
    col: int
    rows: int
    cols: int

    def slices(self) -> tuple[slice, slice]:
        return slice(self.row, self.row + self.rows), slice(self.col, self.col + self.cols)


def program_tile(weights: TernaryMatrix, zero11=None, col_flip=None) -> ProgrammedTile:
    """Write ``weights`` into a tile, negating every column with ``col_flip = 1``.

    ``zero11`` is a boolean mask selecting which zero weights use the (1, 1)
    encoding; it must be False wherever the weight is nonzero.
    """
    w = weights.data
    if col_flip is None:
        col_flip = np.zeros(weights.cols, dtype=np.uint8)
    flip = _check_col_flip(col_flip, weights.cols)
    if zero11 is not None:
        zero11 = np.asarray(zero11, dtype=bool)
        if zero11.shape != w.shape:
            raise DimensionError(f"zero variant mask {zero11.shape} does not match weights {w.shape}")
        if (zero11 & (w != 0)).any():
            raise ValueError("zero variants may only be given for zero weights")
    signed = np.where(flip.astype(bool)[None, :], -w, w)
    return ProgrammedTile(encode_array(signed, zero11), flip)


def store_tile(programmed: ProgrammedTile, fault_map: FaultMap) -> StoredTile:
    if programmed.shape != fault_map.shape:
        raise DimensionError(f"tile {programmed.shape} does not match fault map {fault_map.shape}")
    return StoredTile(apply_fault_array(programmed.bits, fault_map.faults), programmed.col_flip)


def column_signs(col_flip: np.ndarray) -> np.ndarray:
    return np.where(np.asarray(col_flip) == 1, -1, 1).astype(np.int8)


def effective_weights(stored: ProgrammedTile) -> TernaryMatrix:
    """Weights the accelerator applies after output negation of flipped columns."""
    return TernaryMatrix(decode_array(stored.bits) * column_signs(stored.col_flip)[None, :])


def _check_activations(activations, rows: int) -> np.ndarray:
    act = np.asarray(activations)
    if act.ndim not in (1, 2) or act.shape[-1] != rows:
        raise DimensionError(f"activation shape {act.shape} does not match {rows} tile rows")
    if act.size:
        if not np.issubdtype(act.dtype, np.integer):
            if not np.array_equal(act, np.round(act)):
                raise ValueError("activations must be integers")
        if act.min() < ACT_MIN or act.max() > ACT_MAX:
            raise ValueError("activations must be signed 8-bit integers")
    return act.astype(np.int64)


def tile_mvm(stored: ProgrammedTile, activations) -> np.ndarray:
    """Integer MVM of one tile; ``activations`` may be a vector or a batch (probes x rows)."""
    act = _check_activations(activations, stored.rows)
    m1 = stored.bits[..., 0].astype(np.int64)
    m2 = stored.bits[..., 1].astype(np.int64)
    x = act @ m1
    y = act @ m2
    return np.where(stored.col_flip.astype(bool), y - x, x - y)


def tile_placements(rows: int, cols: int, tile_rows: int, tile_cols: int) -> list[TilePlacement]:
    if tile_rows < 1 or tile_cols < 1:
        raise ValueError(f"tile dimensions must be >= 1, got {tile_rows}x{tile_cols}")
    return [TilePlacement(r, c, min(tile_rows, rows - r), min(tile_cols, cols - c))
            for r in range(0, rows, tile_rows)
            for c in range(0, cols, tile_cols)]


def tile_matrix(weights: TernaryMatrix, tile_rows: int, tile_cols: int) -> list[tuple[TernaryMatrix, TilePlacement]]:
    """Row-major, non-overlapping tiling; edge tiles are truncated, never padded."""
    return [(TernaryMatrix(weights.data[p.slices()]), p)
            for p in tile_placements(weights.rows, weights.cols, tile_rows, tile_cols)]


def check_partition(placements: Iterable[TilePlacement], shape: tuple[int, int] | None = None) -> tuple[int, int]:
    """Verify placements tile a rectangle exactly once; returns its shape."""
    placements = list(placements)
    if not placements:
        raise DimensionError("no tiles given")
    rows = max(p.row + p.rows for p in placements)
    cols = max(p.col + p.cols for p in placements)
    if shape is not None and (rows, cols) != tuple(shape):
        raise DimensionError(f"tiles cover {rows}x{cols}, expected {shape[0]}x{shape[1]}")
    cover = np.zeros((rows, cols), dtype=np.int32)
    for p in placements:
        if p.row < 0 or p.col < 0 or p.rows < 1 or p.cols < 1:
            raise DimensionError(f"invalid placement {p}")
        cover[p.slices()] += 1
    if not (cover == 1).all():
        raise DimensionError("tile placements overlap or leave gaps")
    return rows, cols


def full_mvm(tiles: Sequence[tuple[ProgrammedTile, TilePlacement]], activations) -> np.ndarray:
    """Accumulate tile partial sums into the full output vector (or batch)."""
    rows, cols = check_partition(p for _, p in tiles)
    act = _check_activations(activations, rows)
    out = np.zeros(act.shape[:-1] + (cols,), dtype=np.int64)
    for tile, p in tiles:
        if tile.shape != (p.rows, p.cols):
            raise DimensionError(f"tile {tile.shape} does not match its placement {p}")
        rs, cs = p.slices()
        out[..., cs] += tile_mvm(tile, act[..., rs])
    return out
