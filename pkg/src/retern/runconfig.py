"""Sweep configuration files and run manifests.

A sweep config is an INI file with two sections::

    [sweep]
    rates = 0.05, 0.10
    trials = 20
    modes = baseline, zero_fix, fast, retern
    tile_rows = 64
    tile_cols = 64
    sa1_fraction = 0.5
    base_seed = 0
    probe_count = 16

    [weights]
    # either a ternary matrix file (text or packed), relative to this config
    file = weights.txt
    # or a synthetic matrix
    rows = 512
    cols = 512
    sparsity = 0.375
    seed = 1

Every key is optional except the weights source.  Unknown sections and keys
are errors.
"""
from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import dataclass, replace
from pathlib import Path

from . import __version__
from .harness import ExperimentConfig, generate_synthetic_weights
from .mapping import RepairMode
from .formats import load_ternary
from .ternary import TernaryMatrix

SWEEP_KEYS = ("rates", "trials", "modes", "tile_rows", "tile_cols", "sa1_fraction", "base_seed", "probe_count")
WEIGHT_FILE_KEYS = ("file",)
WEIGHT_SYNTH_KEYS = ("rows", "cols", "sparsity", "seed")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class WeightsSource:
    file: str | None = None
    rows: int | None = None
    cols: int | None = None
    sparsity: float | None = None
    seed: int | None = None

    def load(self) -> TernaryMatrix:
        if self.file is not None:
            return load_ternary(self.file)
        return generate_synthetic_weights(self.rows, self.cols, self.sparsity, self.seed)

    def to_dict(self) -> dict:
        if self.file is not None:
            return {"file": self.file}
        return {"rows": self.rows, "cols": self.cols, "sparsity": self.sparsity, "seed": self.seed}


@dataclass(frozen=True)
class SweepSpec:
    experiment: ExperimentConfig
    weights: WeightsSource


def _convert(key: str, raw: str):
    try:
        if key == "rates":
            return tuple(float(x) for x in raw.split(",") if x.strip())
        if key == "modes":
            return tuple(RepairMode.parse(x) for x in raw.split(",") if x.strip())
        if key in ("sa1_fraction", "sparsity"):
            return float(raw)
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {raw!r} ({exc})") from None


def _build(sweep: dict, weights: dict, base_dir: Path | None) -> SweepSpec:
    unknown = set(sweep) - set(SWEEP_KEYS)
    if unknown:
        raise ConfigError(f"unknown [sweep] keys: {', '.join(sorted(unknown))}")
    unknown = set(weights) - set(WEIGHT_FILE_KEYS) - set(WEIGHT_SYNTH_KEYS)
    if unknown:
        raise ConfigError(f"unknown [weights] keys: {', '.join(sorted(unknown))}")
    try:
        experiment = ExperimentConfig(**sweep)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None

    if "file" in weights:
        if set(weights) != {"file"}:
            raise ConfigError("[weights] takes either 'file' or rows/cols/sparsity/seed, not both")
        path = Path(weights["file"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        source = WeightsSource(file=str(path))
    else:
        missing = set(WEIGHT_SYNTH_KEYS) - set(weights)
        if missing:
            raise ConfigError(f"[weights] is missing {', '.join(sorted(missing))}")
        if weights["rows"] < 1 or weights["cols"] < 1:
            raise ConfigError("synthetic weights need rows, cols >= 1")
        if not 0.0 <= weights["sparsity"] <= 1.0:
            raise ConfigError("sparsity must lie in [0, 1]")
        source = WeightsSource(**weights)
    return SweepSpec(experiment, source)


def parse_sweep_config(text: str, base_dir: Path | None = None) -> SweepSpec:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc).replace("\n", " ")) from None
    unknown = set(cp.sections()) - {"sweep", "weights"}
    if unknown:
        raise ConfigError(f"unknown sections: {', '.join(sorted(unknown))}")
    if not cp.has_section("weights"):
        raise ConfigError("missing [weights] section")
    sweep = {k: _convert(k, v) for k, v in cp.items("sweep")} if cp.has_section("sweep") else {}
    weights = {k: (v if k == "file" else _convert(k, v)) for k, v in cp.items("weights")}
    return _build(sweep, weights, base_dir)


def load_sweep_config(path) -> SweepSpec:
    path = Path(path)
    return parse_sweep_config(path.read_text(), path.parent)


def with_overrides(spec: SweepSpec, **overrides) -> SweepSpec:
    """Apply command-line values, which win over the config file."""
    given = {k: v for k, v in overrides.items() if v is not None}
    if not given:
        return spec
    try:
        return replace(spec, experiment=replace(spec.experiment, **given))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def experiment_to_dict(cfg: ExperimentConfig) -> dict:
    return {
        "rates": list(cfg.rates),
        "trials": cfg.trials,
        "modes": [m.value for m in cfg.modes],
        "tile_rows": cfg.tile_rows,
        "tile_cols": cfg.tile_cols,
        "sa1_fraction": cfg.sa1_fraction,
        "base_seed": cfg.base_seed,
        "probe_count": cfg.probe_count,
    }


def build_manifest(spec: SweepSpec) -> dict:
    digests = {}
    if spec.weights.file is not None:
        digests["weights"] = sha256_file(spec.weights.file)
    return {
        "tool": "retern",
        "version": __version__,
        "config": {"sweep": experiment_to_dict(spec.experiment), "weights": spec.weights.to_dict()},
        "input_digests": digests,
        "base_seed": spec.experiment.base_seed,
    }


def manifest_json(manifest: dict) -> str:
    return json.dumps(manifest, indent=2, sort_keys=True) + "\n"


def spec_from_manifest(manifest: dict) -> SweepSpec:
    """Rebuild the resolved sweep from a manifest, refusing changed inputs."""
    try:
        cfg = manifest["config"]
        sweep = dict(cfg["sweep"])
        weights = dict(cfg["weights"])
    except (KeyError, TypeError):
        raise ConfigError("manifest lacks a 'config' with 'sweep' and 'weights'") from None
    if "rates" in sweep:
        sweep["rates"] = tuple(sweep["rates"])
    if "modes" in sweep:
        sweep["modes"] = tuple(RepairMode.parse(m) for m in sweep["modes"])
    spec = _build(sweep, weights, None)
    expected = manifest.get("input_digests", {}).get("weights")
    if spec.weights.file is not None and expected is not None:
        actual = sha256_file(spec.weights.file)
        if actual != expected:
            raise ConfigError(f"weights file {spec.weights.file} changed since the manifest was written")
    return spec
