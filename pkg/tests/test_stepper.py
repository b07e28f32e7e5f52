import numpy as np
import pytest

from conftest import random_velocity
from snsmc.errors import ConfigurationError, PicardError
from snsmc.noise import generate_path
from snsmc.saddle import build_system
from snsmc.stepper import (
    PathState,
    StepperConfig,
    initial_state,
    l2_project_velocity,
    run_path,
    step,
)


def quiet_config(**kw):
    base = dict(T=1.0, k=0.25, nu=1.0, g_scale=0.0, J=1, forcing=None)
    base.update(kw)
    return StepperConfig(**base)


def test_config_validation():
    with pytest.raises(ConfigurationError):
        StepperConfig(T=1.0, k=0.3)  # does not divide
    with pytest.raises(ConfigurationError):
        StepperConfig(picard_tol=0.0)
    with pytest.raises(ConfigurationError):
        StepperConfig(picard_max=0)
    assert StepperConfig(T=1.0, k=0.125).steps == 8


def test_initial_state_rest(setups):
    _, dm, forms = setups(4)
    s = initial_state(quiet_config(), forms)
    assert np.all(s.u == 0) and np.all(s.pressure_acc == 0)
    assert s.step_index == 0 and s.t == 0.0


def test_projection_identity_on_discrete_fields(setups, rng):
    _, dm, forms = setups(4)
    u = random_velocity(dm, rng)
    proj = l2_project_velocity(forms, u)
    assert np.allclose(proj, u, atol=1e-10 * max(1.0, np.abs(u).max()))


def test_projection_orthogonality(setups, rng):
    """(u0 - proj, phi_h) = 0 for discrete test fields."""
    _, dm, forms = setups(4)
    u0 = lambda x, y: (np.sin(2 * np.pi * x) * y, np.cos(np.pi * x) * x * (1 - x))
    proj = l2_project_velocity(forms, u0)
    load = forms.velocity_load(u0)          # (u0, phi_i) by quadrature
    defect = load - forms.M @ proj          # (u0 - proj, phi_i)
    for _ in range(10):
        phi = random_velocity(dm, rng)
        assert abs(defect @ phi) <= 1e-10 * max(1.0, np.abs(phi).max())


def test_rest_state_is_fixed_point(setups):
    _, dm, forms = setups(4)
    cfg = quiet_config(collect_diagnostics=True)
    system = build_system(forms, nu=cfg.nu, k=cfg.k)
    s = initial_state(cfg, forms)
    s1 = step(s, cfg, system, forms, None)
    assert np.all(s1.u == 0)
    assert s1.last_step.picard_iters == 1


def test_deterministic_rerun(setups):
    _, dm, forms = setups(4)
    cfg = StepperConfig(T=1.0, k=0.125, nu=1.0, g_scale=0.0, J=1,
                        forcing="standard")
    system = build_system(forms, nu=cfg.nu, k=cfg.k)
    path = generate_path(1, 0, cfg.steps, cfg.J)
    t1 = run_path(cfg, forms, system, path, 1)
    t2 = run_path(cfg, forms, system, path, 1)
    assert np.array_equal(t1.velocities, t2.velocities)
    assert np.array_equal(t1.pressure_accs, t2.pressure_accs)


def test_energy_identity_tight_tolerance(setups):
    _, dm, forms = setups(8)
    cfg = StepperConfig(T=1.0, k=1.0 / 16, nu=1.0, g_scale=10.0, J=4,
                        picard_tol=1e-12, collect_diagnostics=True)
    system = build_system(forms, nu=cfg.nu, k=cfg.k)
    forms.assemble_noise_loads(cfg.J)
    path = generate_path(42, 0, 16, 4)
    traj = run_path(cfg, forms, system, path, 1)
    for d in traj.diagnostics:
        assert abs(d.energy_residual_rel) <= 1e-8


def test_divergence_contract_every_step(setups):
    _, dm, forms = setups(8)
    cfg = StepperConfig(T=0.5, k=1.0 / 32, nu=1.0, g_scale=10.0, J=4,
                        collect_diagnostics=True)
    system = build_system(forms, nu=cfg.nu, k=cfg.k)
    path = generate_path(43, 1, 16, 4, T=0.5)
    traj = run_path(cfg, forms, system, path, 1)
    for d in traj.diagnostics:
        assert d.div_inf <= 1e-8 * max(d.u_l2, 1.0)
        assert d.pressure_mean <= 1e-10


def test_picard_contraction_statistics(setups):
    """Successive-difference ratios stay below 1 in (almost) all steps."""
    _, dm, forms = setups(8)
    ratios = []
    for k, seed in ((1.0 / 16, 3), (1.0 / 32, 4)):
        cfg = StepperConfig(T=1.0, k=k, nu=1.0, g_scale=10.0, J=4,
                            collect_diagnostics=True)
        system = build_system(forms, nu=cfg.nu, k=cfg.k)
        path = generate_path(99, seed, cfg.steps, 4)
        traj = run_path(cfg, forms, system, path, 1)
        ratios += [d.contraction_ratio for d in traj.diagnostics
                   if np.isfinite(d.contraction_ratio)]
    ratios = np.asarray(ratios)
    assert ratios.size >= 40
    assert np.mean(ratios < 1.0) >= 0.99


def test_single_step_run_equals_step_call(setups):
    _, dm, forms = setups(4)
    cfg = StepperConfig(T=0.25, k=0.25, nu=1.0, g_scale=10.0, J=2,
                        forcing="standard")
    system = build_system(forms, nu=cfg.nu, k=cfg.k)
    path = generate_path(7, 0, 1, 2, T=0.25)
    traj = run_path(cfg, forms, system, path, 1)
    s = initial_state(cfg, forms)
    s1 = step(s, cfg, system, forms, path.scaled[0])
    assert np.array_equal(traj.velocities[0], s1.u)
    assert np.array_equal(traj.pressure_accs[0], s1.pressure_acc)


def test_run_path_argument_validation(setups):
    _, dm, forms = setups(4)
    cfg = quiet_config(k=0.25)
    system = build_system(forms, nu=cfg.nu, k=cfg.k)
    path = generate_path(1, 0, 8, 1)
    with pytest.raises(ConfigurationError):
        run_path(cfg, forms, system, path, 1)  # 4 steps != 8 fine steps
    traj = run_path(cfg, forms, system, path, 2)
    with pytest.raises(ConfigurationError):
        traj.at_fine_index(3)  # only even fine indices exist
    with pytest.raises(ConfigurationError):
        run_path(cfg, forms, system, path, 2, checkpoints=[0])
    with pytest.raises(ConfigurationError):
        run_path(cfg, forms, system, path, 2, checkpoints=[5])


def test_picard_failure_reports_and_permissive_mode(setups):
    _, dm, forms = setups(4)
    base = dict(T=0.25, k=0.25, nu=1.0, g_scale=10.0, J=2,
                picard_tol=1e-13, picard_max=1, forcing="standard")
    cfg = StepperConfig(**base)
    system = build_system(forms, nu=cfg.nu, k=cfg.k)
    path = generate_path(11, 0, 1, 2, T=0.25)
    with pytest.raises(PicardError) as err:
        run_path(cfg, forms, system, path, 1)
    assert err.value.step_index == 1
    lax = StepperConfig(**{**base, "permissive_picard": True})
    traj = run_path(lax, forms, system, path, 1)
    assert traj.velocities.shape[0] == 1


def test_refining_k_decreases_final_difference(setups):
    """Halving the step brings the final state closer to a fine-step
    reference on the same path."""
    _, dm, forms = setups(4)
    path = generate_path(17, 0, 64, 4)
    results = {}
    for r in (16, 8, 1):
        k = r / 64
        cfg = StepperConfig(T=1.0, k=k, nu=1.0, g_scale=10.0, J=4,
                            forcing="standard")
        system = build_system(forms, nu=cfg.nu, k=k)
        traj = run_path(cfg, forms, system, path, r,
                        checkpoints=[cfg.steps])
        results[r] = traj.velocities[-1]
    def dist(a, b):
        d = a - b
        return np.sqrt(d @ (forms.M @ d))
    e_coarse = dist(results[16], results[1])
    e_fine = dist(results[8], results[1])
    assert e_fine < e_coarse


def test_pressure_accumulator_mean_zero_checkpoints(setups):
    _, dm, forms = setups(4)
    cfg = StepperConfig(T=1.0, k=0.125, nu=1.0, g_scale=10.0, J=2,
                        forcing="standard")
    system = build_system(forms, nu=cfg.nu, k=cfg.k)
    path = generate_path(23, 0, 8, 2)
    traj = run_path(cfg, forms, system, path, 1)
    for acc in traj.pressure_accs:
        assert abs(forms.mean_vector @ acc) <= 1e-10
