import csv
import math

import pytest

from snsplot.cli import main


def write_conv(path, ks):
    header = ["k", "q", "E_u_q", "E_energy", "E_P_q", "order_u", "order_P"]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for k in ks:
            w.writerow([k, 2, math.sqrt(k), math.sqrt(k), math.sqrt(k), "", ""])
    return path


def test_cli_renders(tmp_path):
    src = write_conv(tmp_path / "c.csv", [0.25, 0.125, 0.0625])
    out = tmp_path / "c.png"
    assert main(["--in", str(src), "--kind", "convergence", "--out", str(out)]) == 0
    assert out.exists() and out.stat().st_size > 0


def test_cli_schema_mismatch_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("x,y\n1,2\n")
    assert main(["--in", str(bad), "--kind", "convergence",
                 "--out", str(tmp_path / "x.png")]) == 1
    assert "error" in capsys.readouterr().err


def test_cli_missing_file_exit_3(tmp_path, capsys):
    assert main(["--in", str(tmp_path / "none.csv"), "--kind", "qsweep",
                 "--out", str(tmp_path / "x.png")]) == 3
    assert "i/o" in capsys.readouterr().err


def test_harness_csv_roundtrip(tmp_path):
    """A real report from the producing harness renders without error
    and the annotated orders agree with its order columns."""
    snsmc_experiments = pytest.importorskip("snsmc.experiments")
    cfg = snsmc_experiments.StudyConfig(
        master_seed=5, n_paths=2, n=2, T=1.0, k0=1.0 / 16,
        k_list=(1.0 / 2, 1.0 / 4, 1.0 / 8), q_list=(2, 4),
    )
    report = snsmc_experiments.run_convergence_study(cfg, workers=1)
    src = tmp_path / "convergence.csv"
    with src.open("w", newline="") as fh:
        report.write_convergence_csv(fh)
    out = tmp_path / "convergence.png"
    assert main(["--in", str(src), "--kind", "convergence", "--out", str(out)]) == 0
    assert out.exists()
    from snsplot.figures import plot_convergence

    result = plot_convergence(src, tmp_path / "again.png")
    for label, from_csv in result["csv_orders"].items():
        got = result["series"][label]["orders"]
        for a, b in zip(got, from_csv):
            assert abs(a - b) <= 0.01
