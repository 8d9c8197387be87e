"""Readers and writers for every on-disk artifact.

Text formats (blank lines and ``#`` comments are ignored on read):

* real matrix:      ``real <rows> <cols>`` then one row of decimals per line
* ternary matrix:   ``ternary <rows> <cols>`` then rows of -1/0/1
* fault map:        ``faultmap <rows> <cols>`` then ``<row> <col> <m1|m2> <sa0|sa1>``
* programming image, one block per tile:
  ``tile <rows> <cols> <origin_row> <origin_col>``, ``colflip <0/1 string>``,
  then rows of ``m1m2`` tokens such as ``10 01 00 11``
* mapping plan:     ``plan <mode> <rows> <cols> <tile_rows> <tile_cols>``, then
  per tile ``tile <rows> <cols> <origin_row> <origin_col>``, ``colflip <bits>``
  and ``zero <row> <col> <00|11>`` for every zero weight (tile-local indices)

Packed ternary matrices start with a 16-byte header of four little-endian
uint32 (magic ``TERN``, version, rows, cols) followed by 2-bit codes, four
weights per byte, first weight in the low bits: 00 = 0, 01 = +1, 10 = -1.
"""
from __future__ import annotations

import csv
import io
import os
import struct
import tempfile
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .array_sim import ProgrammedTile, TilePlacement, check_partition
from .faults import FaultMap, FaultState
from .harness import TRIAL_COLUMNS, SummaryStats, TrialStats
from .mapping import MappingPlan, RepairMode
from .ternary import TernaryMatrix

PACKED_MAGIC = b"TERN"
PACKED_VERSION = 1
_HEADER = struct.Struct("<4sIII")


class FormatError(ValueError):
    def __init__(self, message: str, path=None, line: int | None = None):
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)
        self.line = line


def atomic_write(path, data: str | bytes) -> None:
    """Write via a temp file in the same directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"newline": "", "encoding": "utf-8"})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def fmt_float(x: float) -> str:
    return repr(float(x))


class _Lines:
    """Numbered, comment-stripped token lines with one-line lookahead."""

    def __init__(self, text: str, source=None):
        self.source = source
        self._items = [(n, line.split("#", 1)[0].split())
                       for n, line in enumerate(text.splitlines(), start=1)]
        self._items = [(n, toks) for n, toks in self._items if toks]
        self._pos = 0

    def error(self, message: str, line: int | None = None) -> FormatError:
        return FormatError(message, self.source, line)

    def peek(self):
        return self._items[self._pos] if self._pos < len(self._items) else None

    def next(self, what: str):
        item = self.peek()
        if item is None:
            last = self._items[-1][0] if self._items else 1
            raise self.error(f"unexpected end of file, expected {what}", last)
        self._pos += 1
        return item

    def __iter__(self) -> Iterator:
        while self.peek() is not None:
            yield self.next("")


def _ints(toks: Sequence[str], lines: _Lines, n: int, what: str) -> list[int]:
    try:
        return [int(t) for t in toks]
    except ValueError:
        raise lines.error(f"expected integers in {what}, got {' '.join(toks)!r}", n) from None


def _header(lines: _Lines, keyword: str, count: int) -> tuple[int, list[str]]:
    n, toks = lines.next(f"'{keyword}' header")
    if toks[0] != keyword or len(toks) != count + 1:
        raise lines.error(f"expected header '{keyword}' with {count} fields, got {' '.join(toks)!r}", n)
    return n, toks[1:]


def _dims(lines: _Lines, n: int, toks: Sequence[str]) -> tuple[int, int]:
    rows, cols = _ints(toks, lines, n, "header")
    if rows < 0 or cols < 0:
        raise lines.error("dimensions must be nonnegative", n)
    return rows, cols


# -- real and ternary matrices ----------------------------------------------

def read_real_matrix(text: str, source=None) -> np.ndarray:
    lines = _Lines(text, source)
    n, toks = _header(lines, "real", 2)
    rows, cols = _dims(lines, n, toks)
    out = np.empty((rows, cols), dtype=np.float64)
    for r in range(rows if cols else 0):
        n, toks = lines.next(f"row {r}")
        if len(toks) != cols:
            raise lines.error(f"expected {cols} values, got {len(toks)}", n)
        try:
            out[r] = [float(t) for t in toks]
        except ValueError:
            raise lines.error(f"non-numeric value in {' '.join(toks)!r}", n) from None
        if not np.isfinite(out[r]).all():
            raise lines.error("non-finite value", n)
    extra = lines.peek()
    if extra is not None:
        raise lines.error("trailing data after matrix", extra[0])
    return out


def write_real_matrix(W) -> str:
    W = np.asarray(W, dtype=np.float64)
    body = "".join(" ".join(fmt_float(x) for x in row) + "\n" for row in W) if W.shape[1] else ""
    return f"real {W.shape[0]} {W.shape[1]}\n{body}"


def write_ternary_text(m: TernaryMatrix) -> str:
    body = "".join(" ".join(str(int(x)) for x in row) + "\n" for row in m.data) if m.cols else ""
    return f"ternary {m.rows} {m.cols}\n{body}"


def read_ternary_text(text: str, source=None) -> TernaryMatrix:
    lines = _Lines(text, source)
    n, toks = _header(lines, "ternary", 2)
    rows, cols = _dims(lines, n, toks)
    out = np.empty((rows, cols), dtype=np.int8)
    for r in range(rows if cols else 0):
        n, toks = lines.next(f"row {r}")
        vals = _ints(toks, lines, n, f"row {r}")
        if len(vals) != cols:
            raise lines.error(f"expected {cols} values, got {len(vals)}", n)
        if any(v not in (-1, 0, 1) for v in vals):
            raise lines.error("values must be -1, 0 or 1", n)
        out[r] = vals
    extra = lines.peek()
    if extra is not None:
        raise lines.error("trailing data after matrix", extra[0])
    return TernaryMatrix(out)


def pack_ternary(m: TernaryMatrix) -> bytes:
    codes = np.zeros(m.data.size, dtype=np.uint8)
    flat = m.data.ravel()
    codes[flat == 1] = 1
    codes[flat == -1] = 2
    pad = (-codes.size) % 4
    codes = np.concatenate([codes, np.zeros(pad, dtype=np.uint8)]).reshape(-1, 4)
    packed = codes[:, 0] | (codes[:, 1] << 2) | (codes[:, 2] << 4) | (codes[:, 3] << 6)
    return _HEADER.pack(PACKED_MAGIC, PACKED_VERSION, m.rows, m.cols) + packed.astype(np.uint8).tobytes()


def unpack_ternary(data: bytes, source=None) -> TernaryMatrix:
    if len(data) < _HEADER.size:
        raise FormatError("packed ternary file shorter than its header", source)
    magic, version, rows, cols = _HEADER.unpack_from(data)
    if magic != PACKED_MAGIC:
        raise FormatError(f"bad magic {magic!r}", source)
    if version != PACKED_VERSION:
        raise FormatError(f"unsupported packed version {version}", source)
    count = rows * cols
    nbytes = (count + 3) // 4
    body = np.frombuffer(data, dtype=np.uint8, offset=_HEADER.size)
    if body.size != nbytes:
        raise FormatError(f"expected {nbytes} payload bytes, found {body.size}", source)
    codes = np.stack([(body >> s) & 3 for s in (0, 2, 4, 6)], axis=1).ravel()
    if (codes[count:] != 0).any():
        raise FormatError("nonzero padding bits", source)
    codes = codes[:count]
    if (codes == 3).any():
        raise FormatError(f"reserved code 11 at weight index {int(np.argmax(codes == 3))}", source)
    w = np.zeros(count, dtype=np.int8)
    w[codes == 1] = 1
    w[codes == 2] = -1
    return TernaryMatrix(w.reshape(rows, cols))


def load_ternary(path) -> TernaryMatrix:
    """Read a ternary matrix in either text or packed form (detected by magic)."""
    data = Path(path).read_bytes()
    if data[:4] == PACKED_MAGIC:
        return unpack_ternary(data, path)
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError:
        raise FormatError("not a text or packed ternary matrix", path) from None
    return read_ternary_text(text, path)


def save_ternary(path, m: TernaryMatrix, fmt: str = "text") -> None:
    if fmt == "binary":
        atomic_write(path, pack_ternary(m))
    elif fmt == "text":
        atomic_write(path, write_ternary_text(m))
    else:
        raise ValueError(f"unknown format {fmt!r}")


# -- fault maps ----------------------------------------------------------------

_ELEMENTS = ("m1", "m2")
_FAULT_NAMES = {FaultState.SA0: "sa0", FaultState.SA1: "sa1"}
_FAULT_CODES = {v: k for k, v in _FAULT_NAMES.items()}


def write_fault_map(fm: FaultMap) -> str:
    out = [f"faultmap {fm.rows} {fm.cols}\n"]
    for r, c, e in zip(*np.nonzero(fm.faults)):
        out.append(f"{r} {c} {_ELEMENTS[e]} {_FAULT_NAMES[FaultState(int(fm.faults[r, c, e]))]}\n")
    return "".join(out)


def read_fault_map(text: str, source=None) -> FaultMap:
    lines = _Lines(text, source)
    n, toks = _header(lines, "faultmap", 2)
    rows, cols = _dims(lines, n, toks)
    faults = np.zeros((rows, cols, 2), dtype=np.uint8)
    for n, toks in lines:
        if len(toks) != 4:
            raise lines.error(f"expected 'row col element fault', got {' '.join(toks)!r}", n)
        r, c = _ints(toks[:2], lines, n, "fault entry")
        if not (0 <= r < rows and 0 <= c < cols):
            raise lines.error(f"cell ({r},{c}) outside {rows}x{cols} map", n)
        if toks[2] not in _ELEMENTS:
            raise lines.error(f"element must be m1 or m2, got {toks[2]!r}", n)
        if toks[3] not in _FAULT_CODES:
            raise lines.error(f"fault must be sa0 or sa1, got {toks[3]!r}", n)
        e = _ELEMENTS.index(toks[2])
        if faults[r, c, e]:
            raise lines.error(f"duplicate entry for ({r},{c}).{toks[2]}", n)
        faults[r, c, e] = _FAULT_CODES[toks[3]]
    return FaultMap(faults)


# -- programming image -------------------------------------------------------

def _bitstring(bits) -> str:
    return "".join(str(int(b)) for b in bits)


def _parse_bitstring(tok: str, length: int, lines: _Lines, n: int) -> np.ndarray:
    if len(tok) != length or set(tok) - {"0", "1"}:
        raise lines.error(f"expected a {length}-character 0/1 string, got {tok!r}", n)
    return np.array([int(ch) for ch in tok], dtype=np.uint8)


def _tile_header(lines: _Lines) -> TilePlacement:
    n, toks = _header(lines, "tile", 4)
    rows, cols, r0, c0 = _ints(toks, lines, n, "tile header")
    if rows < 1 or cols < 1 or r0 < 0 or c0 < 0:
        raise lines.error("invalid tile geometry", n)
    return TilePlacement(r0, c0, rows, cols)


def _colflip(lines: _Lines, cols: int) -> np.ndarray:
    n, toks = _header(lines, "colflip", 1)
    return _parse_bitstring(toks[0], cols, lines, n)


def write_program_image(tiles: Iterable[tuple[ProgrammedTile, TilePlacement]]) -> str:
    out = []
    for tile, p in tiles:
        out.append(f"tile {p.rows} {p.cols} {p.row} {p.col}\n")
        out.append(f"colflip {_bitstring(tile.col_flip)}\n")
        for row in tile.bits:
            out.append(" ".join(f"{a}{b}" for a, b in row) + "\n")
    return "".join(out)


def read_program_image(text: str, source=None) -> list[tuple[ProgrammedTile, TilePlacement]]:
    lines = _Lines(text, source)
    tiles = []
    while lines.peek() is not None:
        p = _tile_header(lines)
        flip = _colflip(lines, p.cols)
        bits = np.empty((p.rows, p.cols, 2), dtype=np.uint8)
        for r in range(p.rows):
            n, toks = lines.next(f"tile row {r}")
            if len(toks) != p.cols:
                raise lines.error(f"expected {p.cols} bit pairs, got {len(toks)}", n)
            for c, tok in enumerate(toks):
                bits[r, c] = _parse_bitstring(tok, 2, lines, n)
        tiles.append((ProgrammedTile(bits, flip), p))
    if not tiles:
        raise lines.error("programming image holds no tiles", 1)
    check_partition(p for _, p in tiles)
    return tiles


# -- mapping plans -------------------------------------------------------------

def write_plan(plans: Sequence[tuple[MappingPlan, TilePlacement]], mode: RepairMode,
               shape: tuple[int, int], tile_rows: int, tile_cols: int) -> str:
    out = [f"plan {mode.value} {shape[0]} {shape[1]} {tile_rows} {tile_cols}\n"]
    for plan, p in plans:
        out.append(f"tile {p.rows} {p.cols} {p.row} {p.col}\n")
        out.append(f"colflip {_bitstring(plan.col_flip)}\n")
        for r, c in zip(*np.nonzero(plan.zeros)):
            out.append(f"zero {r} {c} {'11' if plan.zero11[r, c] else '00'}\n")
    return "".join(out)


def read_plan(text: str, source=None):
    """Returns ``(mode, shape, tile_rows, tile_cols, [(MappingPlan, TilePlacement), ...])``."""
    lines = _Lines(text, source)
    n, toks = _header(lines, "plan", 5)
    try:
        mode = RepairMode.parse(toks[0])
    except ValueError as exc:
        raise lines.error(str(exc), n) from None
    rows, cols, tile_rows, tile_cols = _ints(toks[1:], lines, n, "plan header")
    plans = []
    while lines.peek() is not None:
        p = _tile_header(lines)
        flip = _colflip(lines, p.cols)
        zeros = np.zeros((p.rows, p.cols), dtype=bool)
        zero11 = np.zeros((p.rows, p.cols), dtype=bool)
        while lines.peek() is not None and lines.peek()[1][0] == "zero":
            n, toks = lines.next("zero entry")
            if len(toks) != 4 or toks[3] not in ("00", "11"):
                raise lines.error(f"expected 'zero <row> <col> <00|11>', got {' '.join(toks)!r}", n)
            r, c = _ints(toks[1:3], lines, n, "zero entry")
            if not (0 <= r < p.rows and 0 <= c < p.cols):
                raise lines.error(f"zero cell ({r},{c}) outside {p.rows}x{p.cols} tile", n)
            if zeros[r, c]:
                raise lines.error(f"duplicate zero entry ({r},{c})", n)
            zeros[r, c] = True
            zero11[r, c] = toks[3] == "11"
        plans.append((MappingPlan(mode, flip, zeros, zero11), p))
    if plans:
        check_partition((p for _, p in plans), (rows, cols))
    elif rows * cols:
        raise lines.error("plan holds no tiles", n)
    return mode, (rows, cols), tile_rows, tile_cols, plans


# -- result tables -----------------------------------------------------------

def _table(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def trial_row(t: TrialStats) -> list[str]:
    return [t.mode.value, fmt_float(t.rate), str(t.seed), str(t.weight_l1_error), str(t.weights_total),
            str(t.masked), str(t.unmasked), fmt_float(t.mvm_rel_error), str(t.flipped_columns),
            str(t.zero11_cells)]


def write_trials(trials: Iterable[TrialStats]) -> str:
    return _table(TRIAL_COLUMNS, (trial_row(t) for t in trials))


def read_trials(text: str) -> list[TrialStats]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(header) != TRIAL_COLUMNS:
        raise FormatError(f"trial table header must be {','.join(TRIAL_COLUMNS)}")
    out = []
    for n, row in enumerate(reader, start=2):
        if len(row) != len(TRIAL_COLUMNS):
            raise FormatError(f"expected {len(TRIAL_COLUMNS)} fields", line=n)
        out.append(TrialStats(RepairMode.parse(row[0]), float(row[1]), int(row[2]), int(row[3]), int(row[4]),
                              int(row[5]), int(row[6]), float(row[7]), int(row[8]), int(row[9])))
    return out


SUMMARY_COLUMNS = ("mode", "rate", "trials", "metric", "min", "q1", "median", "q3", "max", "mean")


def write_summary(summary: Iterable[SummaryStats]) -> str:
    rows = []
    for s in summary:
        for name, b in s.metrics.items():
            rows.append([s.mode.value, fmt_float(s.rate), str(s.trials), name,
                         *(fmt_float(v) for v in (b.min, b.q1, b.median, b.q3, b.max, b.mean))])
    return _table(SUMMARY_COLUMNS, rows)
