"""Seeded Monte Carlo fault-injection trials, sweeps and closed-form oracles."""
from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Sequence

import numpy as np

from .array_sim import TilePlacement, effective_weights, full_mvm, tile_matrix, tile_placements
from .faults import FaultInjectionConfig, FaultMap, classify_faults, diagnose, inject_faults
from .mapping import MappingPlan, RepairMode, plan_mapping, realize
from .ternary import DimensionError, TernaryMatrix

MASK64 = (1 << 64) - 1
PROBE_STREAM = 0x50524F4245
SYNTH_STREAM = 0x53594E5448

ALL_MODES = (RepairMode.BASELINE, RepairMode.ZERO_FIX_ONLY, RepairMode.FAST_ONLY, RepairMode.RETERN)


def _splitmix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def mix64(*words: int) -> int:
    """Fold integers into one 64-bit seed with the SplitMix64 finalizer."""
    h = 0
    for w in words:
        h = _splitmix64(h ^ (w & MASK64))
    return h


def trial_seed(base_seed: int, rate_index: int, trial_index: int) -> int:
    return mix64(base_seed, rate_index, trial_index)


def generate_probes(seed: int, count: int, length: int) -> np.ndarray:
    """Activation probes uniform over the signed 8-bit range."""
    rng = np.random.Generator(np.random.Philox(key=[seed & MASK64, PROBE_STREAM]))
    return rng.integers(-128, 128, size=(count, length), dtype=np.int64)


def generate_synthetic_weights(rows: int, cols: int, sparsity: float, seed: int) -> TernaryMatrix:
    """I.i.d. ternary matrix: 0 with probability ``sparsity``, else +-1 evenly."""
    if not 0.0 <= sparsity <= 1.0:
        raise ValueError(f"sparsity must be in [0, 1], got {sparsity!r}")
    rng = np.random.Generator(np.random.Philox(key=[seed & MASK64, SYNTH_STREAM]))
    zero = rng.random((rows, cols)) < sparsity
    sign = np.where(rng.random((rows, cols)) < 0.5, -1, 1)
    return TernaryMatrix(np.where(zero, 0, sign).astype(np.int8))


def inject_tiled_faults(rows: int, cols: int, cfg: FaultInjectionConfig,
                        tile_rows: int = 64, tile_cols: int = 64) -> FaultMap:
    """Matrix-wide fault map assembled from per-tile draws (tile id = row-major index)."""
    faults = np.zeros((rows, cols, 2), dtype=np.uint8)
    for tile_id, p in enumerate(tile_placements(rows, cols, tile_rows, tile_cols)):
        faults[p.slices()] = inject_faults(p.rows, p.cols, cfg, tile_id).faults
    return FaultMap(faults)


def analytic_expected_error(rate: float, sparsity: float, mode: RepairMode,
                            sa1_fraction: float = 0.5) -> float:
    """Expected per-weight L1 decode error under i.i.d. element faults.

    With p0 = rate * (1 - sa1_fraction) and p1 = rate * sa1_fraction, a +-1
    cell errs by one per unmasked element, so its mean error is p0 + p1.
    A (0, 0) zero errs when exactly one element is SA1.  With zero-fix only
    the two contradictory double faults (SA1, SA0) and (SA0, SA1) remain.
    """
    if not 0.0 <= rate <= 1.0 or not 0.0 <= sparsity <= 1.0:
        raise ValueError("rate and sparsity must lie in [0, 1]")
    p1 = rate * sa1_fraction
    p0 = rate - p1
    nonzero = p0 + p1
    if mode is RepairMode.BASELINE:
        zero = 2.0 * p1 * (1.0 - p1)
    elif mode is RepairMode.ZERO_FIX_ONLY:
        zero = 2.0 * p0 * p1
    else:
        raise ValueError(f"no closed form for mode {mode.value!r}")
    return sparsity * zero + (1.0 - sparsity) * nonzero


@dataclass(frozen=True)
class ExperimentConfig:
    rates: tuple[float, ...] = (0.05, 0.10)
    trials: int = 20
    modes: tuple[RepairMode, ...] = ALL_MODES
    tile_rows: int = 64
    tile_cols: int = 64
    sa1_fraction: float = 0.5
    base_seed: int = 0
    probe_count: int = 16

    def __post_init__(self) -> None:
        object.__setattr__(self, "rates", tuple(float(r) for r in self.rates))
        object.__setattr__(self, "modes", tuple(self.modes))
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if not self.rates:
            raise ValueError("at least one fault rate is required")
        if any(not 0.0 <= r <= 1.0 for r in self.rates):
            raise ValueError(f"fault rates must lie in [0, 1], got {self.rates}")
        if not self.modes:
            raise ValueError("at least one repair mode is required")
        if self.tile_rows < 1 or self.tile_cols < 1:
            raise ValueError("tile dimensions must be >= 1")
        if not 0.0 <= self.sa1_fraction <= 1.0:
            raise ValueError("sa1_fraction must lie in [0, 1]")
        if not 0 <= self.base_seed < 2**64:
            raise ValueError("base_seed must be a 64-bit unsigned integer")
        if self.probe_count < 0:
            raise ValueError("probe_count must be >= 0")


@dataclass(frozen=True)
class TrialStats:
    mode: RepairMode
    rate: float
    seed: int
    weight_l1_error: int
    weights_total: int
    masked: int
    unmasked: int
    mvm_rel_error: float
    flipped_columns: int
    zero11_cells: int

    @property
    def per_weight_error(self) -> float:
        return self.weight_l1_error / self.weights_total if self.weights_total else 0.0

    @property
    def fault_total(self) -> int:
        return self.masked + self.unmasked


TRIAL_COLUMNS = tuple(f.name for f in fields(TrialStats))
SUMMARY_METRICS = ("weight_l1_error", "per_weight_error", "masked", "unmasked",
                   "mvm_rel_error", "flipped_columns", "zero11_cells")


@dataclass(frozen=True)
class BoxStats:
    min: float
    q1: float
    median: float
    q3: float
    max: float
    mean: float


@dataclass(frozen=True)
class SummaryStats:
    mode: RepairMode
    rate: float
    trials: int
    metrics: dict[str, BoxStats] = field(default_factory=dict)


@dataclass(frozen=True)
class SweepResult:
    trials: list[TrialStats]
    summary: list[SummaryStats]

    def mean(self, mode: RepairMode, rate: float, metric: str = "per_weight_error") -> float:
        for s in self.summary:
            if s.mode is mode and s.rate == rate:
                return s.metrics[metric].mean
        raise KeyError((mode, rate))

    def reduction(self, mode: RepairMode, rate: float) -> float:
        """Relative cut in mean weight error versus BASELINE at ``rate``."""
        base = self.mean(RepairMode.BASELINE, rate)
        return 0.0 if base == 0 else 1.0 - self.mean(mode, rate) / base


def _median(xs: Sequence[float]) -> float:
    n = len(xs)
    mid = n // 2
    return float(xs[mid]) if n % 2 else (xs[mid - 1] + xs[mid]) / 2.0


def box_stats(values: Sequence[float]) -> BoxStats:
    """Five-number summary; quartiles are medians of the halves, excluding the
    middle element when the count is odd."""
    xs = sorted(float(v) for v in values)
    if not xs:
        raise ValueError("box_stats needs at least one value")
    n = len(xs)
    if n == 1:
        q1 = q3 = xs[0]
    else:
        q1 = _median(xs[:n // 2])
        q3 = _median(xs[(n + 1) // 2:])
    return BoxStats(xs[0], q1, _median(xs), q3, xs[-1], float(np.mean(xs)))


@dataclass(frozen=True)
class TileJob:
    weights: TernaryMatrix
    placement: TilePlacement
    fault_map: FaultMap
    plan: MappingPlan


def evaluate_tiles(jobs: Sequence[TileJob], probes: np.ndarray, *, mode: RepairMode,
                   rate: float, seed: int) -> TrialStats:
    """Score already-planned tiles: weight error, fault classes and probe MVM error."""
    l1 = total = masked = unmasked = flipped = z11 = 0
    stored_tiles = []
    for job in jobs:
        programmed, stored = realize(job.weights, job.plan, job.fault_map)
        diff = effective_weights(stored).data.astype(np.int16) - job.weights.data
        l1 += int(np.abs(diff).sum())
        m, u = classify_faults(programmed.bits, job.fault_map)
        masked += m
        unmasked += u
        total += job.weights.data.size
        flipped += job.plan.flipped_columns
        z11 += job.plan.zero11_cells
        stored_tiles.append((stored, job.placement))

    rel = 0.0
    probes = np.asarray(probes, dtype=np.int64)
    if probes.size and stored_tiles:
        rows = max(p.row + p.rows for _, p in stored_tiles)
        cols = max(p.col + p.cols for _, p in stored_tiles)
        ideal_w = np.zeros((rows, cols), dtype=np.int64)
        for job in jobs:
            ideal_w[job.placement.slices()] = job.weights.data
        ideal = probes @ ideal_w
        faulty = full_mvm(stored_tiles, probes)
        num = np.abs(faulty - ideal).sum(axis=-1)
        den = np.maximum(1, np.abs(ideal).sum(axis=-1))
        rel = float(np.mean(num / den))
    return TrialStats(mode, float(rate), int(seed), l1, total, masked, unmasked, rel, flipped, z11)


def plan_tiles(w_ideal: TernaryMatrix, fault_maps: Sequence[FaultMap], mode: RepairMode,
               tile_rows: int, tile_cols: int) -> list[TileJob]:
    tiles = tile_matrix(w_ideal, tile_rows, tile_cols)
    if len(tiles) != len(fault_maps):
        raise DimensionError(f"{len(fault_maps)} fault maps for {len(tiles)} tiles")
    jobs = []
    for (w, p), fm in zip(tiles, fault_maps):
        fm = diagnose(fm)
        jobs.append(TileJob(w, p, fm, plan_mapping(w, fm, mode)))
    return jobs


def run_trial(w_ideal: TernaryMatrix, rate: float, mode: RepairMode, seed: int,
              probes: np.ndarray | None = None, *, tile_rows: int = 64, tile_cols: int = 64,
              sa1_fraction: float = 0.5, probe_count: int = 16) -> TrialStats:
    """One Monte Carlo trial.  Every tile gets faults keyed by ``(seed, tile_id)``."""
    cfg = FaultInjectionConfig(rate, sa1_fraction, seed)
    placements = tile_placements(w_ideal.rows, w_ideal.cols, tile_rows, tile_cols)
    fault_maps = [inject_faults(p.rows, p.cols, cfg, i) for i, p in enumerate(placements)]
    if probes is None:
        probes = generate_probes(seed, probe_count, w_ideal.rows)
    jobs = plan_tiles(w_ideal, fault_maps, mode, tile_rows, tile_cols)
    return evaluate_tiles(jobs, probes, mode=mode, rate=rate, seed=seed)


def summarize(trials: Sequence[TrialStats]) -> list[SummaryStats]:
    groups: dict[tuple[float, RepairMode], list[TrialStats]] = {}
    for t in trials:
        groups.setdefault((t.rate, t.mode), []).append(t)
    out = []
    for (rate, mode), rows in groups.items():
        metrics = {m: box_stats([getattr(t, m) for t in rows]) for m in SUMMARY_METRICS}
        out.append(SummaryStats(mode, rate, len(rows), metrics))
    return out


def sweep(w_ideal: TernaryMatrix, cfg: ExperimentConfig) -> SweepResult:
    """rates x modes x trials.  Modes share each trial's seed, hence its fault maps."""
    trials = []
    for ri, rate in enumerate(cfg.rates):
        seeds = [trial_seed(cfg.base_seed, ri, ti) for ti in range(cfg.trials)]
        for mode in cfg.modes:
            for seed in seeds:
                trials.append(run_trial(
                    w_ideal, rate, mode, seed,
                    tile_rows=cfg.tile_rows, tile_cols=cfg.tile_cols,
                    sa1_fraction=cfg.sa1_fraction, probe_count=cfg.probe_count))
    return SweepResult(trials, summarize(trials))
