"""Time stepping with the second-moment outer iteration or unaccelerated source iteration."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .fem1d import DGField, Mesh1D
from .low_order import METHODS as LO_METHODS
from .low_order import assemble_base, assemble_consistent, assemble_independent, residuals
from .nonlinear_solver import STAGNATION_LEVEL, eliminate_temperature, newton_solve, relative_change
from .opacity import (
    GrayOpacityFields,
    collapse_E,
    collapse_F,
    collapse_P,
    eval_multigroup,
    heat_capacity,
)
from .quadrature import AngularQuadrature, alpha
from .spectral import DEFAULT_CONSTANTS, GroupStructure, SpectralConstants
from .transport import BoundaryData, inflow_moments, isotropic_equilibrium, moments, sweep

METHODS = LO_METHODS + ("unaccelerated",)
TIME_EDGE_SOURCES = ("high_order", "low_order")
ROUNDOFF_FLOOR = 1e-13


class StepFailure(RuntimeError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class SolverConfig:
    method: str = "consistent"
    outer_tol: float = 1e-3
    unacc_tol: float = 1e-4
    inner_tol: float = 1e-3
    linear_tol: float = 1e-10
    elimination_tol: float = 1e-10
    time_edge_source: str = "high_order"
    max_outer: int = 200
    max_unaccelerated: int = 20000
    max_inner: int = 100
    fixup: bool = True
    # fold the fixup's element residual into the consistent corrections
    repair_residual: bool = False
    linear_solver: str = "pcg"
    upwind: int = 1

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; valid methods: {', '.join(METHODS)}")
        if self.time_edge_source not in TIME_EDGE_SOURCES:
            raise ValueError(f"time_edge_source must be one of {TIME_EDGE_SOURCES}")
        for name in ("outer_tol", "unacc_tol", "inner_tol", "linear_tol", "elimination_tol"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        if self.max_outer < 1 or self.max_inner < 1 or self.max_unaccelerated < 1:
            raise ValueError("iteration limits must be positive")
        if self.linear_solver not in ("pcg", "banded"):
            raise ValueError("linear_solver must be 'pcg' or 'banded'")
        if self.upwind not in (1, -1):
            raise ValueError("upwind must be +1 or -1")


@dataclass(frozen=True)
class Setup:
    """Everything that stays fixed over a run: mesh, materials, groups, angles, boundaries."""

    mesh: Mesh1D
    materials: tuple
    groups: GroupStructure
    quad: AngularQuadrature
    bdry: BoundaryData
    const: SpectralConstants = DEFAULT_CONSTANTS

    def __post_init__(self):
        ids = np.unique(self.mesh.material_id)
        if ids.min() < 0 or ids.max() >= len(self.materials):
            raise ValueError("mesh references a material that is not defined")

    @property
    def cv(self) -> np.ndarray:
        return heat_capacity(self.materials, self.mesh.material_id)

    def initial_state(self, T0) -> "SimulationState":
        """Radiation in equilibrium with the material at temperature ``T0``."""
        T = np.broadcast_to(np.asarray(T0, dtype=float), (self.mesh.ne, 2)).copy()
        if np.any(T <= 0):
            raise ValueError("initial temperature must be positive")
        I = isotropic_equilibrium(T, self.quad, self.groups)
        mom = moments(I, self.quad, self.const.c)
        return SimulationState(I, mom.E.copy(), mom.F.copy(), T, 0.0, 0)


@dataclass
class SimulationState:
    I: np.ndarray
    E: np.ndarray
    F: np.ndarray
    T: np.ndarray
    t: float = 0.0
    k: int = 0

    def copy(self) -> "SimulationState":
        return SimulationState(self.I.copy(), self.E.copy(), self.F.copy(), self.T.copy(), self.t, self.k)


@dataclass
class TimeStepReport:
    step: int
    t: float
    dt: float
    method: str
    sweeps: int = 0
    outer_iterations: int = 0
    newton_iterations: list = field(default_factory=list)
    linear_iterations: list = field(default_factory=list)
    fixups: int = 0
    floors: int = 0
    consistency: float = 0.0
    outer_history: list = field(default_factory=list)
    energy: dict = field(default_factory=dict)
    sweep_time: float = 0.0
    lo_time: float = 0.0
    converged: bool = False
    stagnations: int = 0

    @property
    def avg_newton(self) -> float:
        return float(np.mean(self.newton_iterations)) if self.newton_iterations else 0.0

    @property
    def avg_linear(self) -> float:
        return float(np.mean(self.linear_iterations)) if self.linear_iterations else 0.0


def _time_edge(setup: Setup, state: SimulationState, cfg: SolverConfig):
    if cfg.time_edge_source == "high_order":
        mom = moments(state.I, setup.quad, setup.const.c)
        return mom.E, mom.F
    return state.E, state.F


def _net_outflow(mom, F_in):
    """Net boundary outflow rate from half-range currents (left, right summed)."""
    return float(-mom.Fm[0, 0] + F_in[0] + mom.Fp[-1, 1] + F_in[1])


def _stop(rep: TimeStepReport, diff: float, tol: float) -> bool:
    """Relative-change test ||u^{m+1} - u^m|| < tol ||u^1 - u^0|| on the report's history."""
    hist = rep.outer_history
    if len(hist) == 1:
        return diff <= ROUNDOFF_FLOOR
    if diff < tol * hist[0] or diff <= ROUNDOFF_FLOOR:
        return True
    if diff <= STAGNATION_LEVEL and diff >= hist[-2]:
        rep.stagnations += 1
        return True
    return False


def advance_sm(setup: Setup, state: SimulationState, dt: float, cfg: SolverConfig):
    """One backward-Euler step with the second-moment outer iteration."""
    if not dt > 0:
        raise ValueError("time step must be positive")
    if cfg.method not in LO_METHODS:
        raise ValueError(f"advance_sm needs a low-order method, got {cfg.method!r}")
    mesh, groups, quad, c = setup.mesh, setup.groups, setup.quad, setup.const.c
    rep = TimeStepReport(state.k + 1, state.t + dt, dt, cfg.method)
    sigma = eval_multigroup(setup.materials, mesh.material_id, state.T.mean(axis=1), groups)
    cv = setup.cv
    E_star, F_star = _time_edge(setup, state, cfg)
    F_in, P_in = inflow_moments(setup.bdry, quad, groups, c)
    al = alpha(quad)
    E, F, T = state.E, state.F, state.T
    for m in range(1, cfg.max_outer + 1):
        t0 = time.perf_counter()
        sw = sweep(T, state.I, sigma, dt, setup.bdry, quad, groups, mesh.h, cfg.fixup, c)
        mom = moments(sw.intensity, quad, c)
        rep.sweep_time += time.perf_counter() - t0
        rep.sweeps += 1
        rep.fixups += sw.fixups

        t0 = time.perf_counter()
        gray = GrayOpacityFields(collapse_E(mom.E_g, sigma, T, groups),
                                 collapse_F(T, sigma, groups), collapse_P(T, sigma, groups))
        sys = assemble_base(gray, dt, al, mesh, F_in, cv, E_star, F_star, state.T,
                            cfg.upwind, c, setup.const.a)
        if cfg.method == "consistent":
            repair = sw.residual_moments(quad) if cfg.repair_residual else None
            corr = assemble_consistent(mom, gray, sigma, mesh, F_in, P_in, cfg.upwind, c, repair)
        else:
            corr = assemble_independent(mom, gray, sigma, mesh)
        nr = newton_solve(sys, corr, (E, F, T), cfg.inner_tol, cfg.max_inner,
                          cfg.linear_solver, cfg.linear_tol, cfg.elimination_tol)
        rep.lo_time += time.perf_counter() - t0
        rep.newton_iterations.append(nr.iterations)
        rep.linear_iterations.extend(nr.linear_iterations)
        rep.floors += nr.floors
        rep.stagnations += int(nr.stagnated)
        E_new, F_new, T_new = (v.reshape(-1, 2) for v in (nr.E, nr.F, nr.T))
        diff = relative_change((T_new, E_new), (T, E))
        rep.outer_history.append(diff)
        E, F, T = E_new, F_new, T_new
        rep.outer_iterations = m
        done = _stop(rep, diff, cfg.outer_tol)
        if done:
            rep.converged = True
            break
    if not rep.converged:
        raise StepFailure(f"outer iteration did not converge in {cfg.max_outer} iterations "
                          f"at t = {state.t + dt:.6g}", rep)

    nE = np.linalg.norm(E)
    rep.consistency = float(np.linalg.norm(E - mom.E) / nE) if nE > 0 else 0.0
    full = sys.with_corrections(corr)
    hw = np.repeat(0.5 * mesh.h, 2)
    r_E, _, r_T = residuals(full, E, F, T)
    leak = (c * al * (E[0, 0] + E[-1, 1]) + 2.0 * (F_in[0] + F_in[1])) - corr.r0.sum()
    rep.energy = {
        "material": float(np.sum(np.repeat(cv, 2) * hw * (T - state.T).reshape(-1))),
        "radiation": float(np.sum(hw * (E - E_star).reshape(-1))),
        "leakage": float(dt * leak),
        "defect": float(dt * (r_E.sum() + r_T.sum())),
    }
    new = SimulationState(sw.intensity, E, F, T, state.t + dt, state.k + 1)
    return new, rep


def first_low_order_system(setup: Setup, state: SimulationState, dt: float, cfg: SolverConfig):
    """Low-order system (corrections included) of the first outer iteration of a step,
    as seen by the inner solver before any Newton update."""
    if cfg.method not in LO_METHODS:
        raise ValueError(f"need a low-order method, got {cfg.method!r}")
    mesh, groups, quad, c = setup.mesh, setup.groups, setup.quad, setup.const.c
    sigma = eval_multigroup(setup.materials, mesh.material_id, state.T.mean(axis=1), groups)
    E_star, F_star = _time_edge(setup, state, cfg)
    F_in, P_in = inflow_moments(setup.bdry, quad, groups, c)
    sw = sweep(state.T, state.I, sigma, dt, setup.bdry, quad, groups, mesh.h, cfg.fixup, c)
    mom = moments(sw.intensity, quad, c)
    T = state.T
    gray = GrayOpacityFields(collapse_E(mom.E_g, sigma, T, groups),
                             collapse_F(T, sigma, groups), collapse_P(T, sigma, groups))
    sys = assemble_base(gray, dt, alpha(quad), mesh, F_in, setup.cv, E_star, F_star, T,
                        cfg.upwind, c, setup.const.a)
    if cfg.method == "consistent":
        corr = assemble_consistent(mom, gray, sigma, mesh, F_in, P_in, cfg.upwind, c)
    else:
        corr = assemble_independent(mom, gray, sigma, mesh)
    return sys.with_corrections(corr)


def advance_unaccelerated(setup: Setup, state: SimulationState, dt: float, cfg: SolverConfig):
    """One step of sweep / pointwise temperature elimination fixed-point iteration."""
    if not dt > 0:
        raise ValueError("time step must be positive")
    mesh, groups, quad, c, a = setup.mesh, setup.groups, setup.quad, setup.const.c, setup.const.a
    rep = TimeStepReport(state.k + 1, state.t + dt, dt, "unaccelerated")
    sigma = eval_multigroup(setup.materials, mesh.material_id, state.T.mean(axis=1), groups)
    F_in, _ = inflow_moments(setup.bdry, quad, groups, c)
    k1 = np.repeat(setup.cv, 2).reshape(-1, 2) / dt
    E_star = moments(state.I, quad, c).E
    T, E = state.T, state.E
    for m in range(1, cfg.max_unaccelerated + 1):
        t0 = time.perf_counter()
        sw = sweep(T, state.I, sigma, dt, setup.bdry, quad, groups, mesh.h, cfg.fixup, c)
        mom = moments(sw.intensity, quad, c)
        rep.sweep_time += time.perf_counter() - t0
        rep.sweeps += 1
        rep.fixups += sw.fixups
        t0 = time.perf_counter()
        sP = collapse_P(T, sigma, groups)
        absorb = c * np.einsum("eng,eg->en", mom.E_g, sigma)
        T_new, nf = eliminate_temperature(k1, sP * a * c, absorb + k1 * state.T, T,
                                          cfg.elimination_tol)
        rep.lo_time += time.perf_counter() - t0
        rep.floors += nf
        diff = relative_change((T_new, mom.E), (T, E))
        rep.outer_history.append(diff)
        T, E = T_new, mom.E
        rep.outer_iterations = m
        done = _stop(rep, diff, cfg.unacc_tol)
        if done:
            rep.converged = True
            break
    if not rep.converged:
        raise StepFailure(f"unaccelerated iteration did not converge in {cfg.max_unaccelerated} iterations "
                          f"at t = {state.t + dt:.6g}", rep)
    hw = np.repeat(0.5 * mesh.h, 2)
    rep.energy = {
        "material": float(np.sum(np.repeat(setup.cv, 2) * hw * (T - state.T).reshape(-1))),
        "radiation": float(np.sum(hw * (mom.E - E_star).reshape(-1))),
        "leakage": float(dt * _net_outflow(mom, F_in)),
        "defect": float("nan"),
    }
    new = SimulationState(sw.intensity, mom.E, mom.F, T, state.t + dt, state.k + 1)
    return new, rep


def advance(setup: Setup, state: SimulationState, dt: float, cfg: SolverConfig):
    if cfg.method == "unaccelerated":
        return advance_unaccelerated(setup, state, dt, cfg)
    return advance_sm(setup, state, dt, cfg)


@dataclass(frozen=True)
class TimeSchedule:
    """Nominal step ``dt`` to ``t_final``, optionally ramped linearly from ``dt_initial``
    over ``ramp_steps`` steps.  Steps shrink to land exactly on output times."""

    dt: float
    t_final: float
    dt_initial: float | None = None
    ramp_steps: int = 0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.t_final >= 0:
            raise ValueError("t_final must be nonnegative")
        if self.dt_initial is not None and not self.dt_initial > 0:
            raise ValueError("dt_initial must be positive")
        if self.ramp_steps < 0:
            raise ValueError("ramp_steps must be nonnegative")

    def nominal(self, k: int) -> float:
        if self.dt_initial is None or self.ramp_steps == 0 or k >= self.ramp_steps:
            return self.dt
        return self.dt_initial + (self.dt - self.dt_initial) * k / self.ramp_steps

    def steps(self, outputs=()):
        """List of (dt, t_end) pairs, hitting every output time in (0, t_final] exactly."""
        targets = sorted({float(t) for t in outputs if 0 < t < self.t_final} | {self.t_final})
        out = []
        t = 0.0
        k = 0
        for target in targets:
            if target <= 0:
                continue
            while t < target:
                dt = self.nominal(k)
                if t + dt >= target * (1.0 - 1e-12):
                    dt, t = target - t, target
                else:
                    t = t + dt
                out.append((dt, t))
                k += 1
        return out


@dataclass
class RunResult:
    state: SimulationState
    reports: list
    snapshots: list
    probes: list
    failed: bool = False
    message: str = ""
    checkpoint: SimulationState | None = None


def run(setup: Setup, state0: SimulationState, cfg: SolverConfig, schedule: TimeSchedule,
        snapshot_times=(), probe_x=(), on_step=None) -> RunResult:
    """Advance from ``state0`` through ``schedule``.

    Snapshots are taken at t = 0, at each requested time and at t_final.
    Probe rows hold (t, T(x_p)...) after every step.  A failing step stops the
    run; the last good state is kept as ``checkpoint``.
    """
    snaps_at = {float(t) for t in snapshot_times if 0 < t <= schedule.t_final}
    snaps_at.add(float(schedule.t_final))
    state = state0.copy()
    probe_x = np.asarray(probe_x, dtype=float)

    def probe(s):
        return [s.t] + list(DGField(setup.mesh, s.T)(probe_x)) if probe_x.size else [s.t]

    res = RunResult(state, [], [(state.t, state.copy())], [probe(state)])
    for dt, t_end in schedule.steps(snaps_at):
        try:
            new, rep = advance(setup, state, dt, cfg)
        except (StepFailure, RuntimeError, ValueError) as exc:
            res.failed = True
            res.message = str(exc)
            res.checkpoint = state.copy()
            if isinstance(exc, StepFailure) and exc.report is not None:
                res.reports.append(exc.report)
            break
        new = replace(new, t=t_end)
        res.reports.append(rep)
        state = new
        res.probes.append(probe(state))
        if t_end in snaps_at:
            res.snapshots.append((t_end, state.copy()))
        if on_step is not None:
            on_step(state, rep)
    res.state = state
    return res
