"""Scalar brute-force references.  They only use the per-cell encode /
apply_faults / decode functions, never the vectorized tile paths under test."""
import itertools

from retern.faults import FaultState, apply_faults
from retern.ternary import ZeroVariant, decode, encode

FAULT_PAIRS = list(itertools.product(FaultState, repeat=2))


def cell_error(w, sign, fault, variant=ZeroVariant.ZERO_00):
    stored = apply_faults(encode(sign * w, variant), fault)
    return abs(sign * decode(stored) - w)


def column_errors(ws, faults):
    return (sum(cell_error(w, 1, f) for w, f in zip(ws, faults)),
            sum(cell_error(w, -1, f) for w, f in zip(ws, faults)))


def best_tile_error(w, faults):
    """Minimum L1 error over every sign choice per column and every zero encoding."""
    rows, cols = w.shape
    total = 0
    for c in range(cols):
        options = []
        for sign in (1, -1):
            err = 0
            for r in range(rows):
                f = (FaultState(int(faults[r, c, 0])), FaultState(int(faults[r, c, 1])))
                err += min(cell_error(int(w[r, c]), sign, f, v) for v in ZeroVariant)
            options.append(err)
        total += min(options)
    return total


def fault_tuple(arr):
    return FaultState(int(arr[0])), FaultState(int(arr[1]))
