"""Secondary acceptance: render every figure kind from real CLI outputs."""
import math
import subprocess
import sys

import pytest

from elodyn_figures import FigureSpec, kscan_reference, read_table, render


def _cli(*args):
    proc = subprocess.run([sys.executable, "-m", "elodyn.cli", *args],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    return proc


@pytest.fixture(scope="module")
def artifacts(tmp_path_factory):
    out = tmp_path_factory.mktemp("artifacts")
    _cli("density-rho", "--m", "2000", "--t-star", "100",
         "--out-dir", str(out))
    _cli("density-k", "--m", "2000", "--t-star", "100",
         "--out-dir", str(out))
    _cli("bias-scan", "--m", "500", "--points", "11", "--t-star", "100",
         "--out-dir", str(out))
    _cli("k-scan", "--m", "500", "--points", "6", "--out-dir", str(out))
    return out


def test_all_four_kinds_render(artifacts, tmp_path):
    density_rho = sorted(artifacts.glob("density_rho_*.csv"))
    density_k = sorted(artifacts.glob("density_k_*.csv"))
    assert len(density_rho) == 5 and len(density_k) == 5
    jobs = [
        ("density_rho", density_rho),
        ("density_k", density_k),
        ("bias", [artifacts / "bias_scan.csv"]),
        ("kscan", [artifacts / "k_scan.csv"]),
    ]
    for kind, inputs in jobs:
        out = render(FigureSpec.create(kind, inputs, tmp_path / f"{kind}.png"))
        assert out.exists() and out.stat().st_size > 1000
        print(f"[ACCEPT] figure {kind}: PASS ({out.name})")


def test_kscan_reference_hits_first_point(artifacts):
    table = read_table(artifacts / "k_scan.csv")
    k = table.column("K")
    dev = table.column("mean_abs_dev")
    c, ref = kscan_reference(k, dev)
    assert ref[0] == dev[0]                     # exact, by construction
    assert c == dev[0] / math.sqrt(k[0])
    print(f"[ACCEPT] kscan reference anchor: PASS (C={c:.6g})")
