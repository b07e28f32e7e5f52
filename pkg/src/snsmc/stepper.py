"""Advance sample paths of the implicit Euler-Maruyama scheme.

Each time step solves the nonlinear system of the fully discrete mixed
method by a fixed-point (Picard) iteration that lags the convection
term, so the linear saddle-point operator is constant across steps,
iterations, and paths. The noise enters at the left endpoint of the
step, the body force implicitly at the right endpoint. The scheme's
time-averaged pressure accumulator k * sum_n p^n is maintained because
pressure error estimates are stated for it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from snsmc.assembly import AssembledForms
from snsmc.errors import ConfigurationError, PicardError
from snsmc.noise import WienerPath, coarse_mode_increment, stochastic_load
from snsmc.saddle import SaddleSystem


@dataclass(frozen=True)
class StepperConfig:
    """Time-stepping parameters for one mesh.

    forcing selects the body force: None for unforced runs, "standard"
    for the experiment forcing, or a callable f(t, x, y) -> (f1, f2).
    permissive_picard accepts non-converged steps with a warning count
    instead of raising (exploratory runs only).
    """

    T: float = 1.0
    k: float = 1.0 / 16
    nu: float = 1.0
    g_scale: float = 10.0
    J: int = 4
    picard_tol: float = 1e-8
    picard_max: int = 50
    forcing: object = "standard"
    collect_diagnostics: bool = False
    permissive_picard: bool = False

    def __post_init__(self):
        if self.T <= 0 or self.k <= 0 or self.nu <= 0:
            raise ConfigurationError("T, k, nu must be positive")
        steps = self.T / self.k
        if abs(steps - round(steps)) > 1e-12 * max(steps, 1.0):
            raise ConfigurationError(f"time step {self.k} does not divide T={self.T}")
        if self.picard_tol <= 0:
            raise ConfigurationError("picard_tol must be positive")
        if self.picard_max < 1:
            raise ConfigurationError("picard_max must be >= 1")
        if self.J < 1:
            raise ConfigurationError("J must be >= 1")

    @property
    def steps(self) -> int:
        return round(self.T / self.k)


@dataclass(frozen=True)
class StepDiagnostics:
    t: float
    picard_iters: int
    last_diff: float
    contraction_ratio: float
    energy_residual_rel: float
    div_inf: float
    u_l2: float
    u_h1: float
    grad_sq: float
    pressure_mean: float


@dataclass(frozen=True)
class PathState:
    """Velocity and accumulated pressure after step_index steps."""

    u: np.ndarray
    step_index: int
    t: float
    pressure_acc: np.ndarray
    last_step: StepDiagnostics | None = None
    picard_warnings: int = 0


def l2_project_velocity(forms: AssembledForms, u0) -> np.ndarray:
    """Mass-matrix L2 projection onto the discrete velocity space.

    Accepts a callable (x, y) -> (u1, u2) or a coefficient vector.
    Dirichlet dofs are pinned to zero; the projection solves over the
    free dofs, so (u0 - proj, phi_h) = 0 for every discrete test field
    vanishing on the boundary.
    """
    dofmap = forms.dofmap
    if callable(u0):
        load = forms.velocity_load(u0)
    else:
        u0 = np.asarray(u0, dtype=float)
        if u0.shape != (dofmap.num_velocity_dofs,):
            raise ConfigurationError(
                f"initial coefficient vector has shape {u0.shape}, "
                f"expected ({dofmap.num_velocity_dofs},)"
            )
        load = forms.M @ u0
    free = dofmap.free_velocity
    M_ff = forms.M[free][:, free].tocsc()
    out = np.zeros(dofmap.num_velocity_dofs)
    out[free] = spla.splu(M_ff).solve(load[free])
    return out


def initial_state(config: StepperConfig, forms: AssembledForms,
                  u0=None) -> PathState:
    """State at t = 0; u0 may be None (rest), a callable, or coefficients."""
    if u0 is None:
        u = np.zeros(forms.dofmap.num_velocity_dofs)
    else:
        u = l2_project_velocity(forms, u0)
    return PathState(
        u=u,
        step_index=0,
        t=0.0,
        pressure_acc=np.zeros(forms.dofmap.num_pressure_dofs),
    )


def _body_load(forms: AssembledForms, config: StepperConfig, t: float):
    if config.forcing is None:
        return None
    if config.forcing == "standard":
        return forms.assemble_body_force_cached(t)
    return forms.velocity_load(config.forcing, t=t)


def step(state: PathState, config: StepperConfig, system: SaddleSystem,
         forms: AssembledForms, increment: np.ndarray | None,
         body_load: np.ndarray | None = None) -> PathState:
    """Advance one time step via the lagged-convection iteration.

    increment holds the (J, J) mode increments of the step's noise; None
    means no noise. body_load overrides the config forcing (callers that
    precompute per-step loads pass it to avoid re-quadrature).

    Raises:
        PicardError: iteration cap hit without meeting the relative
            successive-difference tolerance (unless permissive).
    """
    k = config.k
    t_next = state.t + k
    u_n = state.u

    r_const = forms.M @ u_n
    loads = None
    if body_load is None:
        body_load = _body_load(forms, config, t_next)
    if body_load is not None:
        loads = k * body_load
    if increment is not None and config.g_scale != 0.0:
        noise = stochastic_load(forms, increment, config.g_scale)
        loads = noise if loads is None else loads + noise
    if loads is not None:
        r_const = r_const + loads

    u_prev = u_n
    prev_diff = None
    ratio = np.nan
    converged = False
    warnings = state.picard_warnings
    u_new = u_n
    p_new = np.zeros(forms.dofmap.num_pressure_dofs)
    iters = 0
    diff = 0.0
    for iters in range(1, config.picard_max + 1):
        r = r_const - k * forms.trilinear_rhs(u_prev, u_prev)
        u_new, p_new = system.solve(r)
        d = u_new - u_prev
        diff = float(np.sqrt(max(d @ (forms.M @ d), 0.0)))
        scale = max(1.0, forms.velocity_l2(u_new))
        if prev_diff is not None and prev_diff > 0:
            ratio = diff / prev_diff
        if diff <= config.picard_tol * scale:
            converged = True
            u_prev = u_new
            break
        prev_diff = diff
        u_prev = u_new
    if not converged:
        if not config.permissive_picard:
            raise PicardError(
                f"fixed-point iteration did not converge at step "
                f"{state.step_index + 1} (t={t_next}): last difference "
                f"{diff:.3e}, last contraction ratio {ratio:.3f}",
                step_index=state.step_index + 1,
                last_ratio=ratio,
            )
        warnings += 1

    pressure_acc = state.pressure_acc + k * p_new

    diag = None
    if config.collect_diagnostics:
        Mu = forms.M @ u_new
        Mun = forms.M @ u_n
        d = u_new - u_n
        grad_sq = float(u_new @ (forms.K @ u_new))
        work = 0.0 if loads is None else 2.0 * float(loads @ u_new)
        residual = (
            float(u_new @ Mu)
            - float(u_n @ Mun)
            + float(d @ (forms.M @ d))
            + 2.0 * config.nu * k * grad_sq
            - work
        )
        u_l2 = float(np.sqrt(max(u_new @ Mu, 0.0)))
        div = system.B_free @ u_new[system.free]
        diag = StepDiagnostics(
            t=t_next,
            picard_iters=iters,
            last_diff=diff,
            contraction_ratio=float(ratio),
            energy_residual_rel=residual / max(1.0, u_l2**2),
            div_inf=float(np.max(np.abs(div), initial=0.0)),
            u_l2=u_l2,
            u_h1=float(np.sqrt(max(u_new @ Mu + grad_sq, 0.0))),
            grad_sq=grad_sq,
            pressure_mean=float(abs(forms.mean_vector @ p_new)),
        )

    return PathState(
        u=u_new,
        step_index=state.step_index + 1,
        t=t_next,
        pressure_acc=pressure_acc,
        last_step=diag,
        picard_warnings=warnings,
    )


@dataclass
class TrajectoryRecord:
    """Snapshots and per-step diagnostics from one path run.

    fine_indices locates each checkpoint on the reference (fine) time
    grid: fine_index = step * refinement_ratio, so records from runs at
    different steps of the same path align by fine index.
    """

    k: float
    refinement_ratio: int
    checkpoint_steps: np.ndarray
    fine_indices: np.ndarray
    velocities: np.ndarray
    pressure_accs: np.ndarray
    diagnostics: list[StepDiagnostics] = field(default_factory=list)

    def at_fine_index(self, fine_index: int) -> tuple[np.ndarray, np.ndarray]:
        pos = np.searchsorted(self.fine_indices, fine_index)
        if pos >= len(self.fine_indices) or self.fine_indices[pos] != fine_index:
            raise ConfigurationError(
                f"no checkpoint at fine index {fine_index} "
                f"(have {self.fine_indices.tolist()})"
            )
        return self.velocities[pos], self.pressure_accs[pos]


def run_path(config: StepperConfig, forms: AssembledForms,
             system: SaddleSystem, path: WienerPath, refinement_ratio: int,
             checkpoints=None, u0=None) -> TrajectoryRecord:
    """Advance a full path, checkpointing at the requested step indices.

    The run's step must satisfy k = refinement_ratio * path.k0 so noise
    increments are sums of the path's fine increments. checkpoints is an
    iterable of this run's step indices (1..M); None records every step.

    Raises:
        PicardError: with the failing step index attached.
    """
    M = config.steps
    r = int(refinement_ratio)
    if r * M != path.M0:
        raise ConfigurationError(
            f"refinement ratio {r} with {M} steps does not cover the "
            f"path's {path.M0} fine steps"
        )
    if abs(config.k - r * path.k0) > 1e-12 * config.k:
        raise ConfigurationError("config step does not match ratio * fine step")
    if checkpoints is None:
        checkpoints = range(1, M + 1)
    cps = np.unique(np.asarray(list(checkpoints), dtype=np.int64))
    if len(cps) == 0 or cps[0] < 1 or cps[-1] > M:
        raise ConfigurationError(f"checkpoints must lie in 1..{M}")

    state = initial_state(config, forms, u0=u0)
    velocities = np.empty((len(cps), forms.dofmap.num_velocity_dofs))
    pressure_accs = np.empty((len(cps), forms.dofmap.num_pressure_dofs))
    diagnostics: list[StepDiagnostics] = []
    pos = 0
    for n in range(M):
        incr = coarse_mode_increment(path, n, r)
        state = step(state, config, system, forms, incr)
        if config.collect_diagnostics and state.last_step is not None:
            diagnostics.append(state.last_step)
        if pos < len(cps) and cps[pos] == n + 1:
            velocities[pos] = state.u
            pressure_accs[pos] = state.pressure_acc
            pos += 1
    return TrajectoryRecord(
        k=config.k,
        refinement_ratio=r,
        checkpoint_steps=cps,
        fine_indices=cps * r,
        velocities=velocities,
        pressure_accs=pressure_accs,
        diagnostics=diagnostics,
    )
