import csv
import json
from pathlib import Path

import pytest

from snsmc.cli import main, _load_config, _study_config

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def write_config(path, **kw):
    path.write_text(json.dumps(kw))
    return str(path)


SMOKE_STUDY = dict(
    master_seed=7, n_paths=3, n=2, T=1.0, k0=0.125,
    k_list=[0.5, 0.25], q_list=[2, 4],
)


def test_mesh_info_reports_dof_counts(capsys):
    assert main(["mesh-info", "4"]) == 0
    out = capsys.readouterr().out
    assert "velocity dofs     162" in out
    assert "pressure dofs     25" in out


def test_mesh_info_smallest(capsys):
    assert main(["mesh-info", "1"]) == 0
    out = capsys.readouterr().out
    assert "velocity dofs     18" in out
    assert "pressure dofs     4" in out


def test_mesh_info_rejects_zero(capsys):
    assert main(["mesh-info", "0"]) == 1
    assert "error" in capsys.readouterr().err


def test_missing_config_is_config_error(tmp_path, capsys):
    code = main(["convergence", "--config", str(tmp_path / "nope.json"),
                 "--out", str(tmp_path)])
    assert code == 1
    assert "not found" in capsys.readouterr().err


def test_invalid_json_config(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text("{not json")
    assert main(["convergence", "--config", str(cfg), "--out", str(tmp_path)]) == 1


def test_unknown_config_keys_rejected(tmp_path):
    cfg = write_config(tmp_path / "c.json", bogus_key=1)
    assert main(["convergence", "--config", cfg, "--out", str(tmp_path)]) == 1


def test_run_single_quiet_flow_all_zero(tmp_path):
    cfg = write_config(
        tmp_path / "c.json",
        master_seed=1, n_paths=2, n=2, T=1.0, k0=0.25,
        k_list=[0.25], k=0.25, g_scale=0.0, J=1, forcing=None,
    )
    out = tmp_path / "res"
    assert main(["run-single", "--config", cfg, "--out", str(out),
                 "--no-figures"]) == 0
    rows = list(csv.DictReader((out / "trajectory.csv").open()))
    assert len(rows) == 5  # t=0 plus 4 steps
    assert all(float(r["norm_L2_u"]) == 0.0 for r in rows)
    first = (out / "trajectory.csv").read_bytes()
    assert main(["run-single", "--config", cfg, "--out", str(out),
                 "--no-figures"]) == 0
    assert (out / "trajectory.csv").read_bytes() == first


def test_run_single_picard_failure_exits_2(tmp_path, capsys):
    cfg = write_config(
        tmp_path / "c.json",
        master_seed=1, n_paths=2, n=2, T=1.0, k0=0.25,
        k_list=[0.25], k=0.25, g_scale=10.0, J=2,
        picard_tol=1e-14, picard_max=1,
    )
    code = main(["run-single", "--config", cfg, "--out", str(tmp_path),
                 "--no-figures"])
    assert code == 2
    assert "numerical failure" in capsys.readouterr().err


def test_convergence_smoke_writes_csv_and_summary(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", **SMOKE_STUDY)
    out = tmp_path / "res"
    code = main(["convergence", "--config", cfg, "--out", str(out),
                 "--workers", "1", "--no-figures"])
    assert code == 0
    captured = capsys.readouterr()
    assert "order" in captured.out
    assert "paths completed: 3/3" in captured.err
    with (out / "convergence.csv").open() as fh:
        header = fh.readline().strip()
    assert header == "k,q,E_u_q,E_energy,E_P_q,order_u,order_P"


def test_convergence_seed_and_paths_overrides(tmp_path):
    cfg = write_config(tmp_path / "c.json", **SMOKE_STUDY)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["convergence", "--config", cfg, "--out", str(out1),
                 "--workers", "1", "--no-figures"]) == 0
    assert main(["convergence", "--config", cfg, "--out", str(out2),
                 "--workers", "1", "--no-figures", "--seed", "8",
                 "--paths", "2"]) == 0
    a = (out1 / "convergence.csv").read_bytes()
    b = (out2 / "convergence.csv").read_bytes()
    assert a != b


def test_q_sweep_smoke(tmp_path):
    cfg = write_config(tmp_path / "c.json", **SMOKE_STUDY,
                       k=0.5, q_values=[2, 4, 8])
    out = tmp_path / "res"
    assert main(["q-sweep", "--config", cfg, "--out", str(out),
                 "--workers", "1", "--no-figures"]) == 0
    rows = list(csv.DictReader((out / "qsweep.csv").open()))
    assert [r["q"] for r in rows] == ["2", "4", "8"]
    values = [float(r["E_u_q"]) for r in rows]
    assert values == sorted(values)


def test_pathwise_smoke(tmp_path):
    cfg = write_config(tmp_path / "c.json", **SMOKE_STUDY, seeds=[0, 1])
    out = tmp_path / "res"
    assert main(["pathwise", "--config", cfg, "--out", str(out),
                 "--workers", "1", "--no-figures"]) == 0
    rows = list(csv.DictReader((out / "pathwise.csv").open()))
    assert len(rows) == 2 * len(SMOKE_STUDY["k_list"])
    assert set(r["seed"] for r in rows) == {"0", "1"}


def test_shipped_configs_parse():
    class Args:
        seed = None
        paths = None

    for name in ("convergence_desk.json", "convergence_smoke.json",
                 "qsweep_desk.json", "pathwise_desk.json"):
        raw = _load_config(str(CONFIG_DIR / name))
        _study_config(raw, Args())  # must validate cleanly
    _load_config(str(CONFIG_DIR / "stokes.json"))


def test_shipped_smoke_config_runs(tmp_path):
    out = tmp_path / "res"
    code = main(["convergence", "--config",
                 str(CONFIG_DIR / "convergence_smoke.json"),
                 "--out", str(out), "--workers", "1", "--no-figures",
                 "--paths", "2"])
    assert code == 0
    assert (out / "convergence.csv").exists()


def test_stokes_verify_smoke(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", mesh_ladder=[2, 4], nu=1.0)
    out = tmp_path / "res"
    assert main(["stokes-verify", "--config", cfg, "--out", str(out),
                 "--no-figures"]) == 0
    rows = list(csv.DictReader((out / "stokes.csv").open()))
    assert [r["n"] for r in rows] == ["2", "4"]
    assert float(rows[1]["err_u_L2"]) < float(rows[0]["err_u_L2"])
