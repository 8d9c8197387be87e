import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp
from scipy.stats import binom

from retern.faults import (
    FaultInjectionConfig,
    FaultMap,
    FaultState,
    apply_fault_array,
    apply_faults,
    classify_faults,
    diagnose,
    inject_faults,
)
from retern.ternary import BitPair, DimensionError, ZeroVariant, decode, encode, encode_array

NONE, SA0, SA1 = FaultState.NONE, FaultState.SA0, FaultState.SA1

fault_arrays = lambda shape: hnp.arrays(np.uint8, shape, elements=st.integers(0, 2))


def test_rate_zero_is_empty():
    fm = inject_faults(64, 64, FaultInjectionConfig(0.0, 0.5, 9))
    assert fm.fault_count == 0
    assert fm == FaultMap.empty(64, 64)


def test_rate_one_all_sa1():
    fm = inject_faults(8, 5, FaultInjectionConfig(1.0, 1.0, 3))
    assert (fm.faults == SA1).all()


@pytest.mark.parametrize("frac,state", [(0.0, SA0), (1.0, SA1)])
def test_sa1_fraction_extremes(frac, state):
    fm = inject_faults(32, 32, FaultInjectionConfig(0.3, frac, 11))
    faulty = fm.faults[fm.faults != NONE]
    assert faulty.size > 0 and (faulty == state).all()


def test_fault_count_binomial():
    n = 2 * 64 * 64
    lo, hi = binom.interval(0.999, n, 0.1)
    counts = [inject_faults(64, 64, FaultInjectionConfig(0.1, 0.5, s)).fault_count for s in range(200)]
    assert all(lo <= c <= hi for c in counts)
    assert abs(np.mean(counts) - 0.1 * n) < 4 * np.sqrt(n * 0.09 / len(counts))


def test_injection_reproducible_and_seed_sensitive():
    cfg = FaultInjectionConfig(0.1, 0.5, 42)
    assert inject_faults(64, 64, cfg) == inject_faults(64, 64, cfg)
    assert inject_faults(64, 64, cfg) != inject_faults(64, 64, FaultInjectionConfig(0.1, 0.5, 43))
    assert inject_faults(64, 64, cfg, tile_id=0) != inject_faults(64, 64, cfg, tile_id=1)


def test_config_validation():
    for bad in [dict(rate=-0.1), dict(rate=1.1), dict(rate=0.1, sa1_fraction=2.0), dict(rate=0.1, seed=-1)]:
        with pytest.raises(ValueError):
            FaultInjectionConfig(**bad)


@pytest.mark.parametrize("programmed,fault,expected", [
    ((1, 0), (SA0, NONE), (0, 0)),
    ((0, 0), (SA0, NONE), (0, 0)),
    ((0, 0), (NONE, SA1), (0, 1)),
    ((1, 1), (SA1, SA0), (1, 0)),
])
def test_apply_faults(programmed, fault, expected):
    assert apply_faults(BitPair(*programmed), fault) == expected


def test_apply_idempotent_exhaustive():
    for bits in itertools.product((0, 1), repeat=2):
        for fault in itertools.product(FaultState, repeat=2):
            once = apply_faults(BitPair(*bits), fault)
            assert apply_faults(once, fault) == once


@given(hnp.arrays(np.uint8, (6, 4, 2), elements=st.integers(0, 1)), fault_arrays((6, 4, 2)))
def test_apply_array_idempotent_and_matches_scalar(bits, faults):
    once = apply_fault_array(bits, faults)
    assert np.array_equal(apply_fault_array(once, faults), once)
    for r, c in itertools.product(range(6), range(4)):
        f = (FaultState(int(faults[r, c, 0])), FaultState(int(faults[r, c, 1])))
        assert tuple(once[r, c]) == apply_faults(BitPair(*bits[r, c]), f)


def test_masked_fault_never_changes_weight():
    for w in (-1, 0, 1):
        for v in ZeroVariant:
            prog = encode(w, v)
            for e in (0, 1):
                forced = SA1 if prog[e] else SA0
                fault = [NONE, NONE]
                fault[e] = forced
                assert decode(apply_faults(prog, tuple(fault))) == w


def test_classify_examples():
    assert classify_faults(np.zeros((3, 3, 2), np.uint8), FaultMap.empty(3, 3)) == (0, 0)
    all_sa0 = FaultMap(np.full((3, 3, 2), SA0, np.uint8))
    assert classify_faults(np.zeros((3, 3, 2), np.uint8), all_sa0) == (18, 0)
    one = FaultMap(np.array([[[SA0, SA1]]], np.uint8))
    assert classify_faults(np.array([[[1, 0]]], np.uint8), one) == (0, 2)


@given(hnp.arrays(np.int8, (5, 5), elements=st.sampled_from([-1, 0, 1])), fault_arrays((5, 5, 2)))
def test_classify_totals(w, faults):
    fm = FaultMap(faults)
    masked, unmasked = classify_faults(encode_array(w), fm)
    assert masked + unmasked == fm.fault_count
    stored = apply_fault_array(encode_array(w), faults)
    assert unmasked == int(np.count_nonzero(stored != encode_array(w)))


def test_classify_dimension_mismatch():
    with pytest.raises(DimensionError):
        classify_faults(np.zeros((2, 2, 2), np.uint8), FaultMap.empty(3, 2))


def test_diagnose_identity():
    faults = np.zeros((8, 8, 2), np.uint8)
    faults[3, 5, 1] = SA1
    fm = FaultMap(faults)
    assert diagnose(fm) == fm
    assert diagnose(FaultMap.empty(0, 0)) == FaultMap.empty(0, 0)
    rnd = inject_faults(16, 16, FaultInjectionConfig(0.2, 0.5, 1))
    assert diagnose(rnd) == rnd


def test_window():
    fm = inject_faults(10, 12, FaultInjectionConfig(0.3, 0.5, 5))
    sub = fm.window(2, 3, 4, 5)
    assert np.array_equal(sub.faults, fm.faults[2:6, 3:8])
    with pytest.raises(DimensionError):
        fm.window(8, 0, 4, 4)


@settings(max_examples=25)
@given(st.integers(1, 20), st.integers(1, 20), st.floats(0, 1), st.floats(0, 1), st.integers(0, 2**64 - 1))
def test_injection_shape_and_determinism(rows, cols, rate, frac, seed):
    cfg = FaultInjectionConfig(rate, frac, seed)
    fm = inject_faults(rows, cols, cfg)
    assert fm.shape == (rows, cols)
    assert fm == inject_faults(rows, cols, cfg)
