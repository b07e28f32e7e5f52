"""Command-line entry point orchestrating the studies.

Subcommands wrap the experiments module and write the CSV reports;
summary tables go to stdout and progress lines to stderr. When the
companion plotting package is installed, report subcommands also render
figures next to the CSVs (--figures / --no-figures overrides).

Exit codes: 0 success, 1 config/validation, 2 numerical failure, 3 I/O.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from snsmc.assembly import assemble_bilinear_forms
from snsmc.errors import ConfigurationError, SolverError
from snsmc.experiments import (
    StudyConfig,
    run_convergence_study,
    run_pathwise_study,
    run_q_sweep,
    run_stokes_verification,
    write_pathwise_csv,
    write_qsweep_csv,
)
from snsmc.fem import build_dofmap
from snsmc.mesh import build_uniform_mesh
from snsmc.noise import generate_path
from snsmc.saddle import build_system
from snsmc.stepper import StepperConfig, initial_state, run_path

_STUDY_KEYS = {
    "master_seed", "n_paths", "n", "T", "nu", "g_scale", "J", "k0",
    "k_list", "q_list", "picard_tol", "picard_max", "forcing",
    "continue_on_failure",
}
_EXTRA_KEYS = {"seeds", "mesh_ladder", "k", "q_values", "path_index"}


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise ConfigurationError(f"config file not found: {path}")
    try:
        raw = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config file {path} is not valid JSON: {exc}")
    if not isinstance(raw, dict):
        raise ConfigurationError("config file must hold a JSON object")
    unknown = set(raw) - _STUDY_KEYS - _EXTRA_KEYS
    if unknown:
        raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
    return raw


def _study_config(raw: dict, args) -> StudyConfig:
    kw = {k: v for k, v in raw.items() if k in _STUDY_KEYS}
    for seq in ("k_list", "q_list"):
        if seq in kw:
            kw[seq] = tuple(kw[seq])
    if getattr(args, "seed", None) is not None:
        kw["master_seed"] = args.seed
    if getattr(args, "paths", None) is not None:
        kw["n_paths"] = args.paths
    return StudyConfig(**kw)


def _out_path(args, name: str) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out / name


def _maybe_figures(args, csv_path: Path, kind: str) -> None:
    want = args.figures
    if want is False:
        return
    try:
        from snsplot.figures import render
    except ImportError:
        if want is True:
            raise ConfigurationError(
                "--figures requested but the snsplot package is not installed"
            )
        return
    img = csv_path.with_suffix(".png")
    render(csv_path, kind, img)
    print(f"figure written: {img}", file=sys.stderr)


# -- subcommands ---------------------------------------------------------------


def _cmd_mesh_info(args) -> int:
    mesh = build_uniform_mesh(args.n)
    dofmap = build_dofmap(mesh)
    print(f"n                 {mesh.n}")
    print(f"h                 {mesh.h!r}")
    print(f"vertices          {mesh.num_vertices}")
    print(f"triangles         {mesh.num_triangles}")
    print(f"edges             {mesh.num_edges}")
    print(f"velocity nodes    {dofmap.num_scalar_nodes}")
    print(f"velocity dofs     {dofmap.num_velocity_dofs}")
    print(f"pressure dofs     {dofmap.num_pressure_dofs}")
    print(f"dirichlet dofs    {int(dofmap.dirichlet_mask.sum())}")
    return 0


def _cmd_run_single(args) -> int:
    raw = _load_config(args.config)
    study = _study_config(raw, args)
    k = float(raw.get("k", study.k0))
    path_index = int(raw.get("path_index", 0))
    cfg = StepperConfig(
        T=study.T, k=k, nu=study.nu, g_scale=study.g_scale, J=study.J,
        picard_tol=study.picard_tol, picard_max=study.picard_max,
        forcing=study.forcing, collect_diagnostics=True,
    )
    mesh = build_uniform_mesh(study.n)
    forms = assemble_bilinear_forms(mesh, build_dofmap(mesh))
    system = build_system(forms, nu=study.nu, k=k)
    path = generate_path(study.master_seed, path_index, cfg.steps, study.J,
                         T=study.T)
    traj = run_path(cfg, forms, system, path, 1, checkpoints=None)

    csv_path = _out_path(args, "trajectory.csv")
    state0 = initial_state(cfg, forms)
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        fh.write("path_index,t,norm_L2_u,norm_H1_u,pressure_mean_check,"
                 "energy_residual\n")
        fh.write(f"{path_index},0.0,{forms.velocity_l2(state0.u)!r},"
                 f"{forms.velocity_h1(state0.u)!r},0.0,0.0\n")
        for d in traj.diagnostics:
            fh.write(f"{path_index},{d.t!r},{d.u_l2!r},{d.u_h1!r},"
                     f"{d.pressure_mean!r},{d.energy_residual_rel!r}\n")
    print(f"trajectory written: {csv_path}")
    return 0


def _cmd_convergence(args) -> int:
    study = _study_config(_load_config(args.config), args)
    report = run_convergence_study(study, workers=args.workers, progress=True)
    csv_path = _out_path(args, "convergence.csv")
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        report.write_convergence_csv(fh)
    qs = report.q_list
    print(f"temporal refinement, n={study.n}, paths={study.n_paths}, "
          f"k0={study.k0!r}")
    header = "k        " + "".join(
        f"{'E_u_q=' + _q(q):>14}{'order':>9}" for q in qs
    )
    print(header)
    for i, k in enumerate(report.k_list):
        row = f"{k:<9.6g}"
        for j in range(len(qs)):
            order = "" if i == 0 else f"{report.orders_u[i - 1, j]:9.4f}"
            row += f"{report.E_u[i, j]:>14.6g}{order:>9}"
        print(row)
    print("pressure:")
    for i, k in enumerate(report.k_list):
        row = f"{k:<9.6g}"
        for j in range(len(qs)):
            order = "" if i == 0 else f"{report.orders_p[i - 1, j]:9.4f}"
            row += f"{report.E_p[i, j]:>14.6g}{order:>9}"
        print(row)
    print(f"csv written: {csv_path}")
    _maybe_figures(args, csv_path, "convergence")
    return 0


def _q(q: float) -> str:
    return str(int(q)) if float(q) == int(q) else str(q)


def _cmd_q_sweep(args) -> int:
    raw = _load_config(args.config)
    study = _study_config(raw, args)
    q_values = raw.get("q_values", [2, 4, 8, 16, 24])
    k = raw.get("k")
    report, E_u, E_p = run_q_sweep(study, q_values, k=k,
                                   workers=args.workers, progress=True)
    csv_path = _out_path(args, "qsweep.csv")
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        write_qsweep_csv(report, fh)
    print(f"moment sweep at k={report.k_list[0]!r}, n={study.n}")
    print(f"{'q':>6}{'E_u_q':>14}{'E_P_q':>14}")
    for q, eu, ep in zip(report.q_list, E_u, E_p):
        print(f"{_q(q):>6}{eu:>14.6g}{ep:>14.6g}")
    print(f"csv written: {csv_path}")
    _maybe_figures(args, csv_path, "qsweep")
    return 0


def _cmd_pathwise(args) -> int:
    raw = _load_config(args.config)
    study = _study_config(raw, args)
    seeds = raw.get("seeds", [0, 1, 2, 3, 4])
    seeds, err_u, err_p, orders = run_pathwise_study(
        study, seeds, workers=args.workers, progress=True)
    csv_path = _out_path(args, "pathwise.csv")
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        write_pathwise_csv(study, seeds, err_u, err_p, fh)
    print("pathwise velocity errors:")
    print(f"{'seed':>6}" + "".join(f"{'k=' + repr(k):>16}" for k in study.k_list)
          + f"{'mean order':>12}")
    for s, row, od in zip(seeds, err_u, orders):
        print(f"{s:>6}" + "".join(f"{e:>16.6g}" for e in row)
              + f"{np.mean(od):>12.4f}")
    print(f"csv written: {csv_path}")
    _maybe_figures(args, csv_path, "pathwise")
    return 0


def _cmd_stokes_verify(args) -> int:
    raw = _load_config(args.config)
    ladder = raw.get("mesh_ladder", [4, 8, 16, 32])
    nu = float(raw.get("nu", 1.0))
    report = run_stokes_verification(ladder, nu=nu)
    csv_path = _out_path(args, "stokes.csv")
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        report.write_csv(fh)
    print(f"{'n':>5}{'err_u_L2':>14}{'order':>9}{'err_u_H1':>14}{'order':>9}"
          f"{'err_p_L2':>14}{'order':>9}")
    for i, n in enumerate(report.ns):
        o = ["", "", ""] if i == 0 else [
            f"{report.orders_u_l2[i - 1]:9.4f}",
            f"{report.orders_u_h1[i - 1]:9.4f}",
            f"{report.orders_p_l2[i - 1]:9.4f}",
        ]
        print(f"{n:>5}{report.err_u_l2[i]:>14.6g}{o[0]:>9}"
              f"{report.err_u_h1[i]:>14.6g}{o[1]:>9}"
              f"{report.err_p_l2[i]:>14.6g}{o[2]:>9}")
    print(f"csv written: {csv_path}")
    _maybe_figures(args, csv_path, "stokes")
    return 0


# -- argument parsing ----------------------------------------------------------


def _add_common(sub):
    sub.add_argument("--config", metavar="PATH", help="JSON config file")
    sub.add_argument("--seed", type=int, help="override master seed")
    sub.add_argument("--paths", type=int, help="override sample count")
    sub.add_argument("--workers", type=int, default=None,
                     help="worker processes (default: all cores)")
    sub.add_argument("--out", default=".", help="output directory")
    sub.add_argument("--figures", action=argparse.BooleanOptionalAction,
                     default=None,
                     help="render figures next to the CSV (needs snsplot)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="snsmc",
        description="Monte Carlo studies of the stochastic flow scheme",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("mesh-info", help="print mesh/dof statistics")
    p.add_argument("n", type=int)
    p.set_defaults(func=_cmd_mesh_info)

    p = subs.add_parser("run-single", help="run one path, write trajectory CSV")
    _add_common(p)
    p.set_defaults(func=_cmd_run_single)

    p = subs.add_parser("convergence", help="temporal refinement study")
    _add_common(p)
    p.set_defaults(func=_cmd_convergence)

    p = subs.add_parser("q-sweep", help="moment-order sweep at fixed step")
    _add_common(p)
    p.set_defaults(func=_cmd_q_sweep)

    p = subs.add_parser("pathwise", help="per-seed error ladders")
    _add_common(p)
    p.set_defaults(func=_cmd_pathwise)

    p = subs.add_parser("stokes-verify", help="manufactured spatial check")
    _add_common(p)
    p.set_defaults(func=_cmd_stokes_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SolverError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
