import re

import numpy as np
import pytest

from retern.cli import main
from retern.formats import load_ternary, read_fault_map, read_plan, write_ternary_text, write_fault_map
from retern.faults import FaultMap, FaultState
from retern.harness import generate_synthetic_weights
from retern.ternary import TernaryMatrix
from scipy.stats import binom


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def weights_file(tmp_path):
    path = tmp_path / "w.txt"
    path.write_text(write_ternary_text(generate_synthetic_weights(130, 70, 0.375, 3)))
    return path


def test_quantize_example(tmp_path, capsys):
    src = tmp_path / "real.txt"
    src.write_text("real 2 2\n0.6 -1.5\n0.05 0.9\n")
    code, out, _ = run(capsys, "quantize", src, "--out", tmp_path / "t.txt")
    assert code == 0
    assert (tmp_path / "t.txt").read_text() == "ternary 2 2\n1 -1\n0 1\n"
    assert "sparsity: 0.25" in out and "gamma: 0.7625" in out
    code, _, _ = run(capsys, "quantize", src, "--out", tmp_path / "t.bin", "--format", "binary")
    assert code == 0 and load_ternary(tmp_path / "t.bin") == TernaryMatrix.from_rows([[1, -1], [0, 1]])


def test_quantize_zeros_and_errors(tmp_path, capsys):
    src = tmp_path / "z.txt"
    src.write_text("real 2 3\n0 0 0\n0 0 0\n")
    code, out, _ = run(capsys, "quantize", src, "--out", tmp_path / "t.txt")
    assert code == 0 and "sparsity: 1.0" in out
    assert not load_ternary(tmp_path / "t.txt").data.any()
    empty = tmp_path / "empty.txt"
    empty.write_text("")
    code, _, err = run(capsys, "quantize", empty, "--out", tmp_path / "o.txt")
    assert code != 0 and "end of file" in err
    bad = tmp_path / "bad.txt"
    bad.write_text("real 1 2\n1.0 x\n")
    code, _, err = run(capsys, "quantize", bad, "--out", tmp_path / "o.txt")
    assert code != 0 and ":2:" in err


def test_inject(tmp_path, capsys):
    code, out, _ = run(capsys, "inject", "--shape", 64, 64, "--rate", 0, "--out", tmp_path / "f0.txt")
    assert code == 0 and (tmp_path / "f0.txt").read_text() == "faultmap 64 64\n"
    for name in ("a", "b"):
        run(capsys, "inject", "--shape", 64, 64, "--rate", 0.1, "--seed", 5, "--out", tmp_path / name)
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()
    lo, hi = binom.interval(0.999, 8192, 0.1)
    count = read_fault_map((tmp_path / "a").read_text()).fault_count
    assert lo <= count <= hi
    with pytest.raises(SystemExit) as exc:
        main(["inject", "--shape", "4", "4", "--rate", "1.5", "--out", str(tmp_path / "x")])
    assert exc.value.code == 2


def test_map_fault_free(tmp_path, capsys, weights_file):
    run(capsys, "inject", "--weights", weights_file, "--rate", 0, "--out", tmp_path / "f.txt")
    code, out, _ = run(capsys, "map", weights_file, "--faults", tmp_path / "f.txt", "--mode", "retern",
                       "--out", tmp_path / "plan.txt", "--image", tmp_path / "img.txt")
    assert code == 0
    assert "achieved error: 0" in out and "flipped columns: 0" in out and "zero-fix cells: 0" in out
    text = (tmp_path / "plan.txt").read_text()
    assert " 11\n" not in text and not re.search(r"colflip \d*1", text)


def test_map_fig4_column(tmp_path, capsys):
    w = tmp_path / "w.txt"
    w.write_text("ternary 3 1\n1\n1\n0\n")
    faults = np.zeros((3, 1, 2), np.uint8)
    faults[0, 0, 0] = faults[1, 0, 0] = FaultState.SA0
    (tmp_path / "f.txt").write_text(write_fault_map(FaultMap(faults)))
    code, out, _ = run(capsys, "map", w, "--faults", tmp_path / "f.txt", "--out", tmp_path / "p.txt")
    assert code == 0 and "flipped columns: 1" in out
    assert "standard error: 2" in out and "achieved error: 0" in out


def test_map_baseline_and_mismatch(tmp_path, capsys, weights_file):
    run(capsys, "inject", "--weights", weights_file, "--rate", 0.1, "--out", tmp_path / "f.txt")
    code, _, _ = run(capsys, "map", weights_file, "--faults", tmp_path / "f.txt", "--mode", "baseline",
                     "--out", tmp_path / "plan.txt")
    assert code == 0
    _, _, _, _, plans = read_plan((tmp_path / "plan.txt").read_text())
    assert all(p.flipped_columns == 0 and p.zero11_cells == 0 for p, _ in plans)
    run(capsys, "inject", "--shape", 10, 10, "--rate", 0.1, "--out", tmp_path / "small.txt")
    code, _, err = run(capsys, "map", weights_file, "--faults", tmp_path / "small.txt", "--out", tmp_path / "p")
    assert code != 0 and "130x70" in err and "10x10" in err


def _row(out):
    header, row = out.strip().splitlines()
    return dict(zip(header.split(","), row.split(",")))


def test_evaluate(tmp_path, capsys, weights_file):
    run(capsys, "inject", "--weights", weights_file, "--rate", 0, "--out", tmp_path / "f0.txt")
    run(capsys, "map", weights_file, "--faults", tmp_path / "f0.txt", "--out", tmp_path / "p0.txt")
    code, out, _ = run(capsys, "evaluate", weights_file, "--plan", tmp_path / "p0.txt", "--faults", tmp_path / "f0.txt")
    assert code == 0
    row = _row(out)
    assert row["weight_l1_error"] == "0" and float(row["mvm_rel_error"]) == 0.0

    run(capsys, "inject", "--weights", weights_file, "--rate", 0.1, "--seed", 1, "--out", tmp_path / "f.txt")
    rows = {}
    for mode in ("baseline", "retern"):
        run(capsys, "map", weights_file, "--faults", tmp_path / "f.txt", "--mode", mode, "--out", tmp_path / f"{mode}.txt")
        code, out, _ = run(capsys, "evaluate", weights_file, "--plan", tmp_path / f"{mode}.txt",
                           "--faults", tmp_path / "f.txt", "--seed", 4)
        assert code == 0
        rows[mode] = _row(out)
    assert int(rows["retern"]["weight_l1_error"]) <= int(rows["baseline"]["weight_l1_error"])
    assert float(rows["retern"]["mvm_rel_error"]) <= float(rows["baseline"]["mvm_rel_error"])

    code, _, err = run(capsys, "evaluate", weights_file, "--plan", tmp_path / "missing.txt", "--faults", tmp_path / "f.txt")
    assert code != 0 and "No such file" in err


SWEEP_CFG = """\
[sweep]
rates = 0.05, 0.10
trials = 3
modes = baseline, zero_fix, fast, retern
base_seed = 11

[weights]
rows = 100
cols = 80
sparsity = 0.375
seed = 2
"""


def test_sweep_and_manifest(tmp_path, capsys):
    cfg = tmp_path / "s.ini"
    cfg.write_text(SWEEP_CFG)
    code, out, _ = run(capsys, "sweep", "--config", cfg, "--out", tmp_path / "r1")
    assert code == 0 and "retern" in out
    assert len((tmp_path / "r1" / "trials.csv").read_text().splitlines()) == 1 + 24
    code, _, _ = run(capsys, "sweep", "--manifest", tmp_path / "r1" / "manifest.json", "--out", tmp_path / "r2")
    assert code == 0
    for name in ("trials.csv", "summary.csv", "manifest.json"):
        assert (tmp_path / "r1" / name).read_bytes() == (tmp_path / "r2" / name).read_bytes()
    code, _, _ = run(capsys, "sweep", "--config", cfg, "--out", tmp_path / "r3", "--seed", 12, "--trials", 2)
    assert code == 0
    assert len((tmp_path / "r3" / "trials.csv").read_text().splitlines()) == 1 + 16
    assert '"base_seed": 12' in (tmp_path / "r3" / "manifest.json").read_text()


def test_sweep_with_weights_file(tmp_path, capsys, weights_file):
    cfg = tmp_path / "s.ini"
    cfg.write_text(f"[sweep]\ntrials = 2\nrates = 0.1\n[weights]\nfile = {weights_file.name}\n")
    code, _, _ = run(capsys, "sweep", "--config", cfg, "--out", tmp_path / "r")
    assert code == 0
    manifest = (tmp_path / "r" / "manifest.json").read_text()
    assert '"weights": "' in manifest
    weights_file.write_text(write_ternary_text(generate_synthetic_weights(130, 70, 0.375, 4)))
    code, _, err = run(capsys, "sweep", "--manifest", tmp_path / "r" / "manifest.json", "--out", tmp_path / "r2")
    assert code != 0 and "changed" in err


@pytest.mark.parametrize("text,msg", [
    (SWEEP_CFG.replace("trials = 3", "trials = 0"), "trials"),
    (SWEEP_CFG.replace("trials = 3", "trails = 3"), "unknown"),
    (SWEEP_CFG + "[extra]\nx = 1\n", "unknown sections"),
    (SWEEP_CFG.replace("rates = 0.05, 0.10", "rates = 0.05, 1.5"), "rates"),
    (SWEEP_CFG.replace("modes = baseline", "modes = basline"), "mode"),
    ("[sweep]\ntrials = 2\n", "weights"),
])
def test_sweep_config_errors(tmp_path, capsys, text, msg):
    cfg = tmp_path / "bad.ini"
    cfg.write_text(text)
    code, _, err = run(capsys, "sweep", "--config", cfg, "--out", tmp_path / "r")
    assert code != 0 and msg in err


def test_help_for_every_command(capsys):
    for cmd in ("quantize", "inject", "map", "evaluate", "sweep"):
        with pytest.raises(SystemExit) as exc:
            main([cmd, "--help"])
        assert exc.value.code == 0
        assert "usage: retern " + cmd in capsys.readouterr().out
