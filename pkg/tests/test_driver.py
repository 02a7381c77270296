import numpy as np
import pytest

import smtrt.driver as driver
from smtrt.bench import equilibrium_spec, homogeneous_gray_spec, marshak_spec, simulate
from smtrt.driver import (
    METHODS,
    SolverConfig,
    StepFailure,
    TimeSchedule,
    advance,
    run,
)
from smtrt.fem1d import DGField, l2_error
from smtrt.spectral import GroupStructure


def relative_state_change(a, b):
    return max(np.abs(a.T - b.T).max() / np.abs(b.T).max(),
               np.abs(a.E - b.E).max() / np.abs(b.E).max())


@pytest.mark.parametrize("method", METHODS)
def test_equilibrium_is_preserved(method):
    spec = equilibrium_spec(T=150.0, groups=GroupStructure.logarithmic(1e-2, 1e4, 4))
    setup = spec.setup(6)
    state0 = setup.initial_state(spec.T_initial)
    state = state0
    for _ in range(3):
        state, rep = advance(setup, state, 1e-2, SolverConfig(method=method))
        assert rep.outer_iterations <= 2
        assert rep.converged and rep.fixups == 0 and rep.floors == 0
    assert relative_state_change(state, state0) <= 1e-10
    assert state.k == 3 and state.t == pytest.approx(3e-2)


def test_schedule_hits_output_time_exactly():
    steps = TimeSchedule(0.3, 1.0).steps()
    np.testing.assert_allclose([dt for dt, _ in steps], [0.3, 0.3, 0.3, 0.1], rtol=1e-12)
    assert steps[-1][1] == 1.0
    steps = TimeSchedule(0.3, 1.0).steps(outputs=[0.5])
    assert [t for _, t in steps][1] == 0.5
    np.testing.assert_allclose(sum(dt for dt, _ in steps), 1.0)


def test_schedule_ramp():
    sched = TimeSchedule(1.0, 10.0, dt_initial=0.25, ramp_steps=3)
    np.testing.assert_allclose([sched.nominal(k) for k in range(5)], [0.25, 0.5, 0.75, 1.0, 1.0])
    with pytest.raises(ValueError):
        TimeSchedule(-0.1, 1.0)
    with pytest.raises(ValueError):
        TimeSchedule(0.1, 1.0, dt_initial=0.0)


def test_zero_steps_echo_initial_state():
    spec = equilibrium_spec()
    setup = spec.setup(4)
    state0 = setup.initial_state(spec.T_initial)
    res = run(setup, state0, SolverConfig(), TimeSchedule(0.1, 0.0), probe_x=[0.5])
    assert res.reports == [] and not res.failed
    assert np.array_equal(res.state.T, state0.T) and np.array_equal(res.state.I, state0.I)
    assert res.probes == [[0.0, pytest.approx(spec.T_initial)]]


@pytest.mark.parametrize("kwargs, match", [
    (dict(method="multigrid"), "unknown method"),
    (dict(outer_tol=0.0), "outer_tol"),
    (dict(inner_tol=1.5), "inner_tol"),
    (dict(max_outer=0), "iteration limits"),
    (dict(linear_solver="lu"), "linear_solver"),
    (dict(time_edge_source="mid"), "time_edge_source"),
    (dict(upwind=0), "upwind"),
])
def test_config_validation(kwargs, match):
    with pytest.raises(ValueError, match=match):
        SolverConfig(**kwargs)


def test_defaults():
    cfg = SolverConfig()
    assert (cfg.method, cfg.outer_tol, cfg.unacc_tol, cfg.inner_tol) == ("consistent", 1e-3, 1e-4, 1e-3)
    assert (cfg.linear_tol, cfg.elimination_tol, cfg.max_outer) == (1e-10, 1e-10, 200)
    assert cfg.time_edge_source == "high_order"


def test_nonpositive_dt_rejected():
    spec = equilibrium_spec()
    setup = spec.setup(2)
    state = setup.initial_state(spec.T_initial)
    for method in METHODS:
        with pytest.raises(ValueError):
            advance(setup, state, 0.0, SolverConfig(method=method))


@pytest.mark.parametrize("method", ["consistent", "independent"])
def test_energy_bookkeeping(method):
    spec = homogeneous_gray_spec(sigma=20.0, T_drive=200.0)
    setup = spec.setup(10)
    state = setup.initial_state(spec.T_initial)
    cfg = SolverConfig(method=method, outer_tol=1e-8, inner_tol=1e-10, linear_tol=1e-13)
    for _ in range(3):
        state, rep = advance(setup, state, 2e-3, cfg)
        en = rep.energy
        balance = en["material"] + en["radiation"] + en["leakage"]
        scale = max(abs(en["material"]), abs(en["radiation"]), abs(en["leakage"]))
        assert abs(balance - en["defect"]) <= 1e-8 * scale


def test_multigroup_opacities_frozen_within_a_step(monkeypatch):
    seen = []
    real = driver.sweep

    def spy(T, I, sigma, *args, **kwargs):
        seen.append(sigma.tobytes())
        return real(T, I, sigma, *args, **kwargs)

    monkeypatch.setattr(driver, "sweep", spy)
    spec = marshak_spec()
    setup = spec.setup(8)
    state = setup.initial_state(spec.T_initial)
    _, rep = advance(setup, state, 4e-3, SolverConfig())
    assert rep.outer_iterations >= 2
    assert len(seen) == rep.sweeps and len(set(seen)) == 1


def test_unaccelerated_needs_many_more_sweeps_on_marshak():
    spec = marshak_spec()
    sweeps = {}
    for method in METHODS:
        res = simulate(spec, 32, 4e-3, SolverConfig(method=method), t_final=1.2e-2)
        assert not res.failed
        sweeps[method] = sum(r.sweeps for r in res.reports)
    assert sweeps["unaccelerated"] >= 2 * sweeps["consistent"]
    assert sweeps["unaccelerated"] >= 2 * sweeps["independent"]


def test_thin_slab_early_time_iteration_counts_match():
    spec = homogeneous_gray_spec(sigma=0.01)
    its = {}
    for method in ("consistent", "unaccelerated"):
        res = simulate(spec, 16, 1e-5, SolverConfig(method=method), t_final=5e-5)
        its[method] = np.array([r.outer_iterations for r in res.reports])
    assert np.all(np.abs(its["consistent"] - its["unaccelerated"]) <= 2)


def test_consistent_time_edge_choice_is_immaterial():
    # with the consistent closure the two time-edge sources differ only by iteration error
    spec = homogeneous_gray_spec(sigma=50.0)
    mesh = spec.mesh(8)
    for dt in (4e-3, 2e-3, 1e-3):
        runs = [simulate(spec, 8, dt, SolverConfig(time_edge_source=src, outer_tol=1e-6), t_final=0.02)
                for src in ("high_order", "low_order")]
        diff = l2_error(DGField(mesh, runs[0].state.T), DGField(mesh, runs[1].state.T))
        assert diff <= 1e-6 * np.abs(runs[0].state.T).max()


@pytest.mark.slow
def test_methods_approach_each_other_under_refinement():
    spec = marshak_spec()
    dists = []
    for ne, dt in ((32, 4e-3), (64, 2e-3), (128, 1e-3), (256, 5e-4)):
        T = [simulate(spec, ne, dt, SolverConfig(method=m), t_final=0.2).state.T
             for m in ("independent", "consistent")]
        mesh = spec.mesh(ne)
        dists.append(l2_error(DGField(mesh, T[0]), DGField(mesh, T[1])))
    assert all(b < a for a, b in zip(dists, dists[1:]))


def test_failed_step_keeps_checkpoint():
    spec = marshak_spec()
    setup = spec.setup(8)
    state0 = setup.initial_state(spec.T_initial)
    res = run(setup, state0, SolverConfig(max_outer=1), TimeSchedule(4e-3, 0.1))
    assert res.failed
    assert "did not converge" in res.message
    assert res.checkpoint is not None and res.checkpoint.k == res.state.k
    assert res.reports and not res.reports[-1].converged
    with pytest.raises(StepFailure):
        advance(setup, state0, 4e-3, SolverConfig(max_outer=1))


def test_snapshots_and_probes():
    spec = homogeneous_gray_spec()
    setup = spec.setup(4)
    res = run(setup, setup.initial_state(1.0), SolverConfig(), TimeSchedule(3e-3, 1e-2),
              snapshot_times=[5e-3], probe_x=[0.0, 0.5])
    assert [t for t, _ in res.snapshots] == [0.0, 5e-3, 1e-2]
    assert len(res.probes) == len(res.reports) + 1
    assert all(len(p) == 3 for p in res.probes)
    assert res.probes[-1][0] == 1e-2


def test_reports_are_counted():
    spec = marshak_spec()
    res = simulate(spec, 16, 4e-3, SolverConfig(), t_final=2e-2)
    for rep in res.reports:
        assert rep.sweeps == rep.outer_iterations == len(rep.newton_iterations)
        assert rep.avg_newton >= 1 and rep.avg_linear >= 1
        assert rep.fixups >= 0 and rep.floors >= 0
        assert rep.sweep_time > 0 and rep.lo_time > 0
