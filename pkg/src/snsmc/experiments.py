"""Monte Carlo convergence studies and deterministic verification.

Temporal convergence is measured against a fine-step reference run of
the same scheme on the same mesh and Brownian path, so the spatial
error cancels and the observed rate isolates the time discretization.
Per-path error samples are reduced to q-power means; spatial accuracy
is verified separately by a manufactured stationary Stokes problem.

Paths are the unit of parallelism. Every path is a pure function of
(master_seed, path_index), and reductions run in path-index order, so
study outputs are byte-identical regardless of the worker count.
"""

from __future__ import annotations

import csv
import io
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from snsmc.assembly import AssembledForms, assemble_bilinear_forms
from snsmc.errors import ConfigurationError
from snsmc.fem import build_dofmap
from snsmc.mesh import build_uniform_mesh
from snsmc.noise import generate_path
from snsmc.saddle import build_stokes_system, build_system
from snsmc.stepper import StepperConfig, TrajectoryRecord, run_path


# -- error functionals -------------------------------------------------------


def moment_error(samples, q) -> float:
    """q-power mean ((1/N) sum s_i^q)^(1/q) of nonnegative samples."""
    arr = np.asarray(samples, dtype=float)
    if arr.size == 0:
        raise ConfigurationError("moment of an empty sample set")
    if q < 1:
        raise ConfigurationError(f"moment order must be >= 1, got {q}")
    if np.any(arr < 0):
        raise ConfigurationError("error samples must be nonnegative")
    top = float(arr.max())
    if top == 0.0:
        return 0.0
    # Factor out the largest sample so q up to ~30 cannot overflow.
    return top * float(np.mean((arr / top) ** q)) ** (1.0 / q)


def velocity_path_error(traj_coarse: TrajectoryRecord,
                        traj_ref: TrajectoryRecord,
                        forms: AssembledForms,
                        nu: float = 1.0) -> tuple[float, float]:
    """Final-time L2 error and discrete energy-norm error of one path.

    The energy norm is (nu k sum_n |grad e(t_n)|^2)^(1/2) over the
    coarse run's step times; the reference trajectory must expose
    checkpoints at those same times (misalignment raises).
    """
    u_err_sq = []
    for pos, fine_idx in enumerate(traj_coarse.fine_indices):
        u_ref, _ = traj_ref.at_fine_index(int(fine_idx))
        d = traj_coarse.velocities[pos] - u_ref
        u_err_sq.append(float(d @ (forms.K @ d)))
    d_final = traj_coarse.velocities[-1] - traj_ref.at_fine_index(
        int(traj_coarse.fine_indices[-1]))[0]
    l2 = float(np.sqrt(max(d_final @ (forms.M @ d_final), 0.0)))
    energy = float(np.sqrt(max(nu * traj_coarse.k * np.sum(u_err_sq), 0.0)))
    return l2, energy


def pressure_path_error(p_coarse: np.ndarray, p_ref: np.ndarray,
                        forms: AssembledForms) -> float:
    """Pressure-mass norm of the difference of time-averaged pressures."""
    if p_coarse.shape != p_ref.shape:
        raise ConfigurationError("pressure accumulators have mismatched shapes")
    d = p_coarse - p_ref
    return float(np.sqrt(max(d @ (forms.Mp @ d), 0.0)))


def fit_rate(errors) -> list[float]:
    """Observed orders log2(e_i / e_{i+1}) for a step-halving ladder."""
    errors = [float(e) for e in errors]
    if any(e <= 0 for e in errors):
        raise ConfigurationError("rate fit requires positive errors")
    return [math.log2(errors[i] / errors[i + 1]) for i in range(len(errors) - 1)]


# -- study configuration ------------------------------------------------------


@dataclass(frozen=True)
class StudyConfig:
    """Parameters of a Monte Carlo refinement study.

    k_list holds the coarse steps (each an integer multiple of the
    reference step k0); n is the mesh subdivision count. Defaults are
    the desk-scale replica of the flow experiments: unit viscosity,
    noise amplitude 10, 4x4 modes, forced flow from rest.
    """

    master_seed: int = 20260809
    n_paths: int = 100
    n: int = 16
    T: float = 1.0
    nu: float = 1.0
    g_scale: float = 10.0
    J: int = 4
    k0: float = 1.0 / 512
    k_list: tuple[float, ...] = (1.0 / 16, 1.0 / 32, 1.0 / 64)
    q_list: tuple[float, ...] = (2, 4, 8)
    picard_tol: float = 1e-8
    picard_max: int = 50
    forcing: object = "standard"
    continue_on_failure: bool = False

    def __post_init__(self):
        if self.n_paths < 2:
            raise ConfigurationError("a study needs at least 2 paths")
        if self.k0 <= 0:
            raise ConfigurationError("reference step must be positive")
        steps = self.T / self.k0
        if abs(steps - round(steps)) > 1e-12 * max(steps, 1.0):
            raise ConfigurationError("k0 must divide T")
        for k in self.k_list:
            r = k / self.k0
            if abs(r - round(r)) > 1e-12 * max(r, 1.0) or round(r) < 1:
                raise ConfigurationError(
                    f"coarse step {k} is not an integer multiple of k0={self.k0}"
                )

    @property
    def M0(self) -> int:
        return round(self.T / self.k0)

    def ratios(self) -> list[int]:
        return [round(k / self.k0) for k in self.k_list]

    def stepper_config(self, k: float, **overrides) -> StepperConfig:
        kw = dict(
            T=self.T, k=k, nu=self.nu, g_scale=self.g_scale, J=self.J,
            picard_tol=self.picard_tol, picard_max=self.picard_max,
            forcing=self.forcing,
        )
        kw.update(overrides)
        return StepperConfig(**kw)


@dataclass
class PathFailure:
    path_index: int
    k: float
    step_index: int | None
    message: str


@dataclass
class ErrorReport:
    """Per-(k, q) moment errors with per-path samples and fitted rates."""

    config: StudyConfig
    k_list: list[float]
    q_list: list[float]
    path_indices: list[int]
    samples_u: np.ndarray        # (n_k, n_paths) final-time L2 errors
    samples_energy: np.ndarray   # (n_k, n_paths) energy-norm errors
    samples_p: np.ndarray        # (n_k, n_paths) averaged-pressure errors
    E_u: np.ndarray              # (n_k, n_q)
    E_energy: np.ndarray
    E_p: np.ndarray
    orders_u: np.ndarray         # (n_k - 1, n_q)
    orders_p: np.ndarray
    failures: list[PathFailure] = field(default_factory=list)
    elapsed_seconds: float = 0.0
    workers: int = 1

    def write_convergence_csv(self, file) -> None:
        """columns: k, q, E_u_q, E_energy, E_P_q, order_u, order_P."""
        w = csv.writer(file)
        w.writerow(["k", "q", "E_u_q", "E_energy", "E_P_q", "order_u", "order_P"])
        for i, k in enumerate(self.k_list):
            for j, q in enumerate(self.q_list):
                order_u = "" if i == 0 else repr(float(self.orders_u[i - 1, j]))
                order_p = "" if i == 0 else repr(float(self.orders_p[i - 1, j]))
                w.writerow([
                    repr(float(k)), _fmt_q(q),
                    repr(float(self.E_u[i, j])), repr(float(self.E_energy[i, j])),
                    repr(float(self.E_p[i, j])), order_u, order_p,
                ])


def _fmt_q(q) -> str:
    qf = float(q)
    return repr(int(qf)) if qf == int(qf) else repr(qf)


# -- per-path pipeline --------------------------------------------------------

_WORKER: dict = {}


def _study_setup(config: StudyConfig) -> dict:
    mesh = build_uniform_mesh(config.n)
    dofmap = build_dofmap(mesh)
    forms = assemble_bilinear_forms(mesh, dofmap)
    forms.assemble_noise_loads(config.J)
    ratios = config.ratios()
    systems = {1: build_system(forms, nu=config.nu, k=config.k0)}
    for r in ratios:
        if r not in systems:
            systems[r] = build_system(forms, nu=config.nu, k=r * config.k0)
    # Reference checkpoints: union of all coarse grids on the fine axis.
    ref_cps = sorted({
        n * r for r in ratios for n in range(1, config.M0 // r + 1)
    } | {config.M0})
    return {
        "config": config,
        "forms": forms,
        "systems": systems,
        "ref_checkpoints": ref_cps,
    }


def _init_worker(config: StudyConfig) -> None:
    _WORKER.clear()
    _WORKER.update(_study_setup(config))


def _path_errors(path_index: int):
    """Errors of one path for every coarse step in the study config."""
    config: StudyConfig = _WORKER["config"]
    forms: AssembledForms = _WORKER["forms"]
    systems = _WORKER["systems"]
    path = generate_path(config.master_seed, path_index, config.M0,
                         config.J, T=config.T)
    ref = run_path(
        config.stepper_config(config.k0), forms, systems[1], path, 1,
        checkpoints=_WORKER["ref_checkpoints"],
    )
    out = []
    for r, k in zip(config.ratios(), config.k_list):
        traj = run_path(
            config.stepper_config(k), forms, systems[r], path, r,
            checkpoints=None,
        )
        err_u, err_energy = velocity_path_error(traj, ref, forms, nu=config.nu)
        err_p = pressure_path_error(
            traj.pressure_accs[-1],
            ref.at_fine_index(config.M0)[1],
            forms,
        )
        out.append((err_u, err_energy, err_p))
    return out


def _run_paths(config: StudyConfig, path_indices, workers: int | None,
               progress: bool = False):
    """Per-path error triples for every (k, path), reduced in path order."""
    indices = list(path_indices)
    workers = _resolve_workers(workers)
    results = [None] * len(indices)
    failures: list[PathFailure] = []

    def record(i, res):
        results[i] = res
        if progress:
            done = sum(r is not None for r in results)
            print(f"paths completed: {done}/{len(indices)}",
                  file=sys.stderr, flush=True)

    if workers == 1:
        _init_worker(config)
        try:
            for i, idx in enumerate(indices):
                record(i, _safe_path_errors(config, idx, failures))
        finally:
            _WORKER.clear()
    else:
        with ProcessPoolExecutor(
            max_workers=workers, initializer=_init_worker, initargs=(config,)
        ) as pool:
            for i, res in enumerate(pool.map(_pool_entry, indices)):
                if isinstance(res, PathFailure):
                    failures.append(res)
                    if not config.continue_on_failure:
                        raise ConfigurationError(
                            f"path {res.path_index} failed at k={res.k}: "
                            f"{res.message} (seed {config.master_seed})"
                        )
                    record(i, None)
                else:
                    record(i, res)
    return results, failures


def _safe_path_errors(config, idx, failures):
    from snsmc.errors import PicardError, SolverError

    try:
        return _path_errors(idx)
    except (PicardError, SolverError) as exc:
        failure = PathFailure(
            path_index=idx,
            k=float("nan"),
            step_index=getattr(exc, "step_index", None),
            message=str(exc),
        )
        failures.append(failure)
        if not config.continue_on_failure:
            raise ConfigurationError(
                f"path {idx} failed: {exc} (seed {config.master_seed})"
            ) from exc
        return None


def _pool_entry(path_index: int):
    from snsmc.errors import PicardError, SolverError

    try:
        return _path_errors(path_index)
    except (PicardError, SolverError) as exc:
        return PathFailure(
            path_index=path_index,
            k=float("nan"),
            step_index=getattr(exc, "step_index", None),
            message=str(exc),
        )


def _resolve_workers(workers: int | None) -> int:
    if workers is None:
        return max(1, os.cpu_count() or 1)
    if workers < 1:
        raise ConfigurationError("worker count must be >= 1")
    return workers


# -- studies ------------------------------------------------------------------


def run_convergence_study(config: StudyConfig, workers: int | None = 1,
                          progress: bool = False) -> ErrorReport:
    """Temporal refinement study against the shared-path fine reference."""
    t0 = time.perf_counter()
    indices = list(range(config.n_paths))
    results, failures = _run_paths(config, indices, workers, progress)
    kept = [(idx, res) for idx, res in zip(indices, results) if res is not None]
    if not kept:
        raise ConfigurationError("every path failed; nothing to report")
    path_indices = [idx for idx, _ in kept]
    n_k = len(config.k_list)
    samples_u = np.array([[res[i][0] for _, res in kept] for i in range(n_k)])
    samples_energy = np.array([[res[i][1] for _, res in kept] for i in range(n_k)])
    samples_p = np.array([[res[i][2] for _, res in kept] for i in range(n_k)])

    qs = list(config.q_list)
    E_u = np.array([[moment_error(samples_u[i], q) for q in qs] for i in range(n_k)])
    E_energy = np.array(
        [[moment_error(samples_energy[i], q) for q in qs] for i in range(n_k)]
    )
    E_p = np.array([[moment_error(samples_p[i], q) for q in qs] for i in range(n_k)])
    orders_u = np.array(
        [fit_rate(E_u[:, j]) for j in range(len(qs))]
    ).T if n_k > 1 else np.empty((0, len(qs)))
    orders_p = np.array(
        [fit_rate(E_p[:, j]) for j in range(len(qs))]
    ).T if n_k > 1 else np.empty((0, len(qs)))

    return ErrorReport(
        config=config,
        k_list=[float(k) for k in config.k_list],
        q_list=[float(q) for q in qs],
        path_indices=path_indices,
        samples_u=samples_u,
        samples_energy=samples_energy,
        samples_p=samples_p,
        E_u=E_u,
        E_energy=E_energy,
        E_p=E_p,
        orders_u=orders_u,
        orders_p=orders_p,
        failures=failures,
        elapsed_seconds=time.perf_counter() - t0,
        workers=_resolve_workers(workers),
    )


def run_q_sweep(config: StudyConfig, q_values, k: float | None = None,
                workers: int | None = 1, progress: bool = False):
    """Moment errors over a q ladder at one fixed coarse step.

    Returns (q_values, E_u, E_p) arrays. Reuses the per-path samples of
    a single-k convergence run, so the q=2 column of a matching
    convergence study is reproduced exactly.
    """
    k = float(k if k is not None else config.k_list[0])
    sub = replace(config, k_list=(k,), q_list=tuple(float(q) for q in q_values))
    report = run_convergence_study(sub, workers=workers, progress=progress)
    return report, np.asarray(report.E_u[0]), np.asarray(report.E_p[0])


def write_qsweep_csv(report: ErrorReport, file) -> None:
    """columns: q, E_u_q, E_P_q."""
    w = csv.writer(file)
    w.writerow(["q", "E_u_q", "E_P_q"])
    for j, q in enumerate(report.q_list):
        w.writerow([_fmt_q(q), repr(float(report.E_u[0, j])),
                    repr(float(report.E_p[0, j]))])


def run_pathwise_study(config: StudyConfig, seeds, workers: int | None = 1,
                       progress: bool = False):
    """Per-seed error ladders for a handful of fixed sample paths.

    seeds are path indices under the study's master seed. Returns
    (seeds, err_u (n_seeds, n_k), err_p (n_seeds, n_k), orders_u rows).
    """
    seeds = [int(s) for s in seeds]
    if len(set(seeds)) != len(seeds):
        raise ConfigurationError("pathwise seeds must be distinct")
    results, failures = _run_paths(config, seeds, workers, progress)
    if any(r is None for r in results):
        raise ConfigurationError(f"pathwise study had failing paths: {failures}")
    n_k = len(config.k_list)
    err_u = np.array([[res[i][0] for i in range(n_k)] for res in results])
    err_p = np.array([[res[i][2] for i in range(n_k)] for res in results])
    orders_u = [fit_rate(row) for row in err_u]
    return seeds, err_u, err_p, orders_u


def write_pathwise_csv(config: StudyConfig, seeds, err_u, err_p, file) -> None:
    """columns: seed, k, err_u_L2, err_P_L2."""
    w = csv.writer(file)
    w.writerow(["seed", "k", "err_u_L2", "err_P_L2"])
    for s, row_u, row_p in zip(seeds, err_u, err_p):
        for k, eu, ep in zip(config.k_list, row_u, row_p):
            w.writerow([repr(int(s)), repr(float(k)), repr(float(eu)), repr(float(ep))])


# -- deterministic manufactured verification ----------------------------------


def stream_velocity(x, y):
    """Curl of psi = sin^2(pi x) sin^2(pi y): divergence-free, zero on
    the boundary to second order."""
    pi = np.pi
    u1 = pi * np.sin(pi * x) ** 2 * np.sin(2 * pi * y)
    u2 = -pi * np.sin(2 * pi * x) * np.sin(pi * y) ** 2
    return u1, u2


def stream_velocity_gradient(x, y):
    """Componentwise gradient of the manufactured velocity."""
    pi = np.pi
    du1_dx = pi**2 * np.sin(2 * pi * x) * np.sin(2 * pi * y)
    du1_dy = 2 * pi**2 * np.sin(pi * x) ** 2 * np.cos(2 * pi * y)
    du2_dx = -2 * pi**2 * np.cos(2 * pi * x) * np.sin(pi * y) ** 2
    du2_dy = -pi**2 * np.sin(2 * pi * x) * np.sin(2 * pi * y)
    return du1_dx, du1_dy, du2_dx, du2_dy


def manufactured_pressure(x, y):
    """sin(pi x) cos(pi y); its mean over the unit square is zero."""
    return np.sin(np.pi * x) * np.cos(np.pi * y)


def stokes_body_force(nu: float):
    """Analytic f = -nu Lap(u) + grad p for the manufactured pair."""

    def f(x, y):
        pi = np.pi
        lap_u1 = 2 * pi**3 * np.sin(2 * pi * y) * (2 * np.cos(2 * pi * x) - 1)
        lap_u2 = -2 * pi**3 * np.sin(2 * pi * x) * (2 * np.cos(2 * pi * y) - 1)
        dp_dx = pi * np.cos(pi * x) * np.cos(pi * y)
        dp_dy = -pi * np.sin(pi * x) * np.sin(pi * y)
        return -nu * lap_u1 + dp_dx, -nu * lap_u2 + dp_dy

    return f


def _stokes_errors(forms: AssembledForms, u_h: np.ndarray, p_h: np.ndarray):
    """Quadrature L2/H1-seminorm velocity and L2 pressure errors against
    the analytic manufactured solution."""
    x = forms._quad_xy[:, :, 0]
    y = forms._quad_xy[:, :, 1]
    uloc = forms._local_coeffs(u_h)
    uvals, ugrads = forms._values_and_grads(uloc)
    ex1, ex2 = stream_velocity(x, y)
    d1 = uvals[:, 0, :] - ex1
    d2 = uvals[:, 1, :] - ex2
    err_l2 = float(np.sqrt(np.sum(forms._wdet * (d1**2 + d2**2))))
    g11, g12, g21, g22 = stream_velocity_gradient(x, y)
    e11 = ugrads[:, 0, :, 0] - g11
    e12 = ugrads[:, 0, :, 1] - g12
    e21 = ugrads[:, 1, :, 0] - g21
    e22 = ugrads[:, 1, :, 1] - g22
    err_h1 = float(np.sqrt(np.sum(forms._wdet * (e11**2 + e12**2 + e21**2 + e22**2))))
    ploc = p_h[forms.dofmap.tri_pnodes]
    pvals = np.einsum("tl,ql->tq", ploc, forms._val1)
    err_p = float(np.sqrt(np.sum(forms._wdet * (pvals - manufactured_pressure(x, y)) ** 2)))
    return err_l2, err_h1, err_p


@dataclass
class StokesReport:
    ns: list[int]
    err_u_l2: list[float]
    err_u_h1: list[float]
    err_p_l2: list[float]
    orders_u_l2: list[float]
    orders_u_h1: list[float]
    orders_p_l2: list[float]

    def write_csv(self, file) -> None:
        """columns: n, h, err_u_L2, err_u_H1, err_p_L2 and order columns."""
        w = csv.writer(file)
        w.writerow(["n", "h", "err_u_L2", "err_u_H1", "err_p_L2",
                    "order_u_L2", "order_u_H1", "order_p_L2"])
        for i, n in enumerate(self.ns):
            row = [repr(int(n)), repr(1.0 / n), repr(self.err_u_l2[i]),
                   repr(self.err_u_h1[i]), repr(self.err_p_l2[i])]
            if i == 0:
                row += ["", "", ""]
            else:
                row += [repr(self.orders_u_l2[i - 1]),
                        repr(self.orders_u_h1[i - 1]),
                        repr(self.orders_p_l2[i - 1])]
            w.writerow(row)


def run_stokes_verification(mesh_ladder=(4, 8, 16, 32),
                            nu: float = 1.0) -> StokesReport:
    """Solve the manufactured Stokes problem on a mesh ladder and fit
    the spatial convergence orders."""
    ns = [int(n) for n in mesh_ladder]
    errs_l2, errs_h1, errs_p = [], [], []
    for n in ns:
        mesh = build_uniform_mesh(n)
        dofmap = build_dofmap(mesh)
        forms = assemble_bilinear_forms(mesh, dofmap)
        system = build_stokes_system(forms, nu=nu)
        load = forms.velocity_load(stokes_body_force(nu))
        u_h, p_h = system.solve(load)
        e2, e1, ep = _stokes_errors(forms, u_h, p_h)
        errs_l2.append(e2)
        errs_h1.append(e1)
        errs_p.append(ep)
    return StokesReport(
        ns=ns,
        err_u_l2=errs_l2,
        err_u_h1=errs_h1,
        err_p_l2=errs_p,
        orders_u_l2=fit_rate(errs_l2),
        orders_u_h1=fit_rate(errs_h1),
        orders_p_l2=fit_rate(errs_p),
    )


# -- misc diagnostics ---------------------------------------------------------


def exponential_moment(grad_sq_maxima, sigma: float = 1e-3) -> float:
    """Sample mean of exp(sigma * max_n |grad u^n|^2) over paths; a
    boundedness smoke check for the velocity-gradient stability of the
    scheme, not an estimate of any constant."""
    m = np.asarray(grad_sq_maxima, dtype=float)
    if m.size == 0:
        raise ConfigurationError("no samples")
    return float(np.mean(np.exp(sigma * m)))


def report_to_csv_bytes(report: ErrorReport) -> bytes:
    buf = io.StringIO()
    report.write_convergence_csv(buf)
    return buf.getvalue().encode()
