"""``retern`` command line: one subcommand per pipeline stage, composed via files."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .array_sim import program_tile, tile_matrix
from .faults import FaultInjectionConfig, diagnose
from .formats import (
    FormatError,
    atomic_write,
    load_ternary,
    read_fault_map,
    read_plan,
    read_real_matrix,
    save_ternary,
    trial_row,
    write_fault_map,
    write_plan,
    write_program_image,
    write_summary,
    write_trials,
)
from .harness import (
    TRIAL_COLUMNS,
    TileJob,
    evaluate_tiles,
    generate_probes,
    inject_tiled_faults,
    sweep,
)
from .mapping import RepairMode, mapping_error, plan_mapping
from .runconfig import (
    ConfigError,
    build_manifest,
    load_sweep_config,
    manifest_json,
    spec_from_manifest,
    with_overrides,
)
from .ternary import DEFAULT_EPSILON, DimensionError, quantize_absmean


def _unit_interval(text: str) -> float:
    try:
        x = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 <= x <= 1.0:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1], got {text}")
    return x


def _u64(text: str) -> int:
    try:
        x = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= x < 2**64:
        raise argparse.ArgumentTypeError("must be a 64-bit unsigned integer")
    return x


def _positive(text: str) -> int:
    try:
        x = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if x < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return x


def _mode(text: str) -> RepairMode:
    try:
        return RepairMode.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _load_faults(path):
    return read_fault_map(Path(path).read_text(), path)


def _shape(shape) -> str:
    return f"{shape[0]}x{shape[1]}"


def cmd_quantize(args) -> int:
    W = read_real_matrix(Path(args.input).read_text(), args.input)
    res = quantize_absmean(W, args.epsilon)
    save_ternary(args.out, res.ternary, args.format)
    print(f"gamma: {res.gamma!r}")
    print(f"sparsity: {res.ternary.sparsity!r}")
    return 0


def cmd_inject(args) -> int:
    if args.weights is not None:
        rows, cols = load_ternary(args.weights).shape
    else:
        rows, cols = args.shape
    cfg = FaultInjectionConfig(args.rate, args.sa1_fraction, args.seed)
    fm = inject_tiled_faults(rows, cols, cfg, args.tile_rows, args.tile_cols)
    atomic_write(args.out, write_fault_map(fm))
    total = fm.fault_count
    share = fm.sa1_count / total if total else 0.0
    print(f"faults: {total} of {2 * rows * cols} elements")
    print(f"sa1 share: {share!r}")
    return 0


def _check_same_shape(weights, fm, wpath, fpath) -> None:
    if weights.shape != fm.shape:
        raise DimensionError(f"weights {wpath} are {_shape(weights.shape)} but fault map {fpath} "
                             f"is {_shape(fm.shape)}")


def cmd_map(args) -> int:
    weights = load_ternary(args.weights)
    fm = _load_faults(args.faults)
    _check_same_shape(weights, fm, args.weights, args.faults)
    plans, images = [], []
    standard = achieved = 0
    for w, p in tile_matrix(weights, args.tile_rows, args.tile_cols):
        tile_faults = diagnose(fm.window(p.row, p.col, p.rows, p.cols))
        plan = plan_mapping(w, tile_faults, args.mode)
        plans.append((plan, p))
        images.append((program_tile(w, plan.zero11, plan.col_flip), p))
        standard += mapping_error(w, plan_mapping(w, tile_faults, RepairMode.BASELINE), tile_faults)
        achieved += mapping_error(w, plan, tile_faults)
    atomic_write(args.out, write_plan(plans, args.mode, weights.shape, args.tile_rows, args.tile_cols))
    if args.image is not None:
        atomic_write(args.image, write_program_image(images))
    print(f"mode: {args.mode.value}")
    print(f"tiles: {len(plans)}")
    print(f"standard error: {standard}")
    print(f"achieved error: {achieved}")
    print(f"flipped columns: {sum(pl.flipped_columns for pl, _ in plans)}")
    print(f"zero-fix cells: {sum(pl.zero11_cells for pl, _ in plans)}")
    return 0


def cmd_evaluate(args) -> int:
    weights = load_ternary(args.weights)
    mode, shape, tile_rows, tile_cols, plans = read_plan(Path(args.plan).read_text(), args.plan)
    fm = _load_faults(args.faults)
    _check_same_shape(weights, fm, args.weights, args.faults)
    if shape != weights.shape:
        raise DimensionError(f"plan {args.plan} is {_shape(shape)} but weights are {_shape(weights.shape)}")
    tiles = tile_matrix(weights, tile_rows, tile_cols)
    if [p for _, p in tiles] != [p for _, p in plans]:
        raise DimensionError(f"plan tiles do not match a {tile_rows}x{tile_cols} tiling of the weights")
    jobs = []
    for (w, p), (plan, _) in zip(tiles, plans):
        if not np.array_equal(plan.zeros, w.data == 0):
            raise ValueError(f"plan zero cells disagree with the weights in tile at ({p.row},{p.col})")
        jobs.append(TileJob(w, p, diagnose(fm.window(p.row, p.col, p.rows, p.cols)), plan))
    rate = args.rate
    if rate is None:
        rate = fm.fault_count / (2 * weights.data.size) if weights.data.size else 0.0
    probes = generate_probes(args.seed, args.probes, weights.rows)
    stats = evaluate_tiles(jobs, probes, mode=mode, rate=rate, seed=args.seed)
    print(",".join(TRIAL_COLUMNS))
    print(",".join(trial_row(stats)))
    return 0


def cmd_sweep(args) -> int:
    if args.manifest is not None:
        spec = spec_from_manifest(json.loads(Path(args.manifest).read_text()))
    else:
        spec = load_sweep_config(args.config)
    spec = with_overrides(spec, base_seed=args.seed, trials=args.trials)
    weights = spec.weights.load()
    result = sweep(weights, spec.experiment)
    out = Path(args.out)
    trials_text = write_trials(result.trials)
    summary_text = write_summary(result.summary)
    atomic_write(out / "trials.csv", trials_text)
    atomic_write(out / "summary.csv", summary_text)
    atomic_write(out / "manifest.json", manifest_json(build_manifest(spec)))
    print(f"{'mode':<10} {'rate':>6} {'mean err/weight':>16} {'median':>10} {'reduction':>10}")
    for s in result.summary:
        m = s.metrics["per_weight_error"]
        print(f"{s.mode.value:<10} {s.rate:>6.3f} {m.mean:>16.6f} {m.median:>10.6f} "
              f"{_reduction(result, s):>10}")
    print(f"wrote {len(result.trials)} trials to {out}")
    return 0


def _reduction(result, s) -> str:
    try:
        return f"{result.reduction(s.mode, s.rate):.2%}"
    except KeyError:
        return "-"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="retern", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def tiles(p):
        p.add_argument("--tile-rows", type=_positive, default=64)
        p.add_argument("--tile-cols", type=_positive, default=64)

    p = sub.add_parser("quantize", help="absmean-quantize a real matrix to ternary")
    p.add_argument("input", help="real matrix text file")
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("text", "binary"), default="text")
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("inject", help="draw a random stuck-at fault map")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--shape", type=_positive, nargs=2, metavar=("ROWS", "COLS"))
    src.add_argument("--weights", help="take the shape from a ternary matrix file")
    p.add_argument("--rate", type=_unit_interval, required=True)
    p.add_argument("--sa1-fraction", type=_unit_interval, default=0.5)
    p.add_argument("--seed", type=_u64, default=0)
    p.add_argument("--out", required=True)
    tiles(p)
    p.set_defaults(func=cmd_inject)

    p = sub.add_parser("map", help="plan a fault-aware mapping and emit the programming image")
    p.add_argument("weights")
    p.add_argument("--faults", required=True)
    p.add_argument("--mode", type=_mode, default=RepairMode.RETERN,
                   help="baseline, zero_fix, fast or retern")
    p.add_argument("--out", required=True, help="mapping plan file")
    p.add_argument("--image", help="programming image file")
    tiles(p)
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("evaluate", help="score a plan against a fault map")
    p.add_argument("weights")
    p.add_argument("--plan", required=True)
    p.add_argument("--faults", required=True)
    p.add_argument("--seed", type=_u64, default=0, help="activation probe seed")
    p.add_argument("--probes", type=int, default=16)
    p.add_argument("--rate", type=_unit_interval, help="rate to report (default: observed fault density)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="run a Monte Carlo sweep")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="INI sweep config")
    src.add_argument("--manifest", help="rerun from a manifest.json")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=_u64, help="override base_seed")
    p.add_argument("--trials", type=int, help="override trials")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (FormatError, ConfigError, DimensionError, ValueError, OSError) as exc:
        print(f"retern {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
