"""Benchmark problems, discrete references, convergence studies and method comparisons."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .driver import RunResult, Setup, SolverConfig, TimeSchedule, run
from .fem1d import DGField, Mesh1D, l2_error
from .opacity import MaterialModel
from .quadrature import gauss_legendre_sn
from .spectral import DEFAULT_CONSTANTS, GroupStructure, SpectralConstants
from .transport import BoundaryData

FRONT_THRESHOLD = 500.0


@dataclass(frozen=True)
class ProblemSpec:
    """A slab problem; ``regions`` lists (x_lo, x_hi, material index) covering the domain."""

    name: str
    domain: tuple
    materials: tuple
    regions: tuple
    groups: GroupStructure
    T_left: float
    T_right: float
    T_initial: float
    t_final: float
    sn_order: int = 6
    const: SpectralConstants = DEFAULT_CONSTANTS

    def __post_init__(self):
        x0, x1 = self.domain
        if not x1 > x0:
            raise ValueError("domain must have positive length")
        edges = sorted(self.regions)
        if abs(edges[0][0] - x0) > 1e-12 * (x1 - x0) or abs(edges[-1][1] - x1) > 1e-12 * (x1 - x0):
            raise ValueError("regions must cover the domain")
        for (a0, a1, m), (b0, _, _) in zip(edges, edges[1:]):
            if abs(a1 - b0) > 1e-12 * (x1 - x0):
                raise ValueError("regions must be contiguous")
        for _, _, m in edges:
            if not 0 <= m < len(self.materials):
                raise ValueError(f"region refers to undefined material {m}")
        if not self.T_initial > 0:
            raise ValueError("initial temperature must be positive")

    def mesh(self, ne) -> Mesh1D:
        """Uniform mesh of ``ne`` elements, or the mesh on an explicit node list."""
        if np.ndim(ne) == 0:
            if ne < 1:
                raise ValueError("need at least one element")
            nodes = np.linspace(self.domain[0], self.domain[1], int(ne) + 1)
        else:
            nodes = np.asarray(ne, dtype=float)
            L = self.domain[1] - self.domain[0]
            if nodes.size < 2 or abs(nodes[0] - self.domain[0]) > 1e-12 * L \
                    or abs(nodes[-1] - self.domain[1]) > 1e-12 * L:
                raise ValueError("node list must span the problem domain")
        mid = 0.5 * (nodes[:-1] + nodes[1:])
        regions = sorted(self.regions)
        mat = np.full(mid.size, regions[-1][2], dtype=int)
        for lo, hi, m in reversed(regions):
            mat[(mid >= lo) & (mid < hi)] = m
        return Mesh1D(nodes, mat)

    def setup(self, ne) -> Setup:
        return Setup(self.mesh(ne), self.materials, self.groups, gauss_legendre_sn(self.sn_order),
                     BoundaryData(self.T_left, self.T_right), self.const)


def marshak_spec() -> ProblemSpec:
    """Gray Marshak wave: sigma = 1e12 / T^3, C_v = 3e12, 1 keV drive on the left."""
    mat = MaterialModel.power_law(1e12, -3.0, 3e12, name="marshak")
    return ProblemSpec("marshak", (0.0, 0.05), (mat,), ((0.0, 0.05, 0),),
                       GroupStructure.gray(), 1000.0, 1.0, 1.0, 2.5)


def larsen_spec(thin_regions=((0.0, 1.0), (3.0, 4.0)), thick_region=(1.0, 3.0),
                cv: float = 1e12, groups: GroupStructure | None = None) -> ProblemSpec:
    """Thin-thick-thin multigroup slab with a 1 keV drive on the right (x = 4 cm)."""
    thin = MaterialModel.larsen(1e9, cv, name="thin")
    thick = MaterialModel.larsen(1e12, cv, name="thick")
    regions = tuple((lo, hi, 0) for lo, hi in thin_regions) + ((thick_region[0], thick_region[1], 1),)
    if groups is None:
        groups = GroupStructure.logarithmic(1e-2, 3e5, 33)
    return ProblemSpec("larsen", (0.0, 4.0), (thin, thick), tuple(sorted(regions)), groups,
                       1.0, 1000.0, 1.0, 10.0)


def equilibrium_spec(T: float = 100.0, groups: GroupStructure | None = None) -> ProblemSpec:
    """Uniform material in equilibrium with matching boundary radiation."""
    mat = MaterialModel.power_law(100.0, 0.0, 1e12, name="uniform")
    return ProblemSpec("equilibrium", (0.0, 1.0), (mat,), ((0.0, 1.0, 0),),
                       groups or GroupStructure.gray(), T, T, T, 0.1)


def homogeneous_gray_spec(sigma: float = 10.0, T_drive: float = 300.0) -> ProblemSpec:
    """Constant-opacity gray slab driven from the left."""
    mat = MaterialModel.power_law(sigma, 0.0, 1e12, name="homogeneous")
    return ProblemSpec("homogeneous", (0.0, 1.0), (mat,), ((0.0, 1.0, 0),),
                       GroupStructure.gray(), T_drive, 1.0, 1.0, 1.0)


BUILTIN = {
    "marshak": marshak_spec,
    "larsen": larsen_spec,
    "equilibrium": equilibrium_spec,
    "homogeneous": homogeneous_gray_spec,
}


def simulate(spec: ProblemSpec, ne: int, dt: float, cfg: SolverConfig, t_final=None,
             snapshot_times=(), probe_x=(), schedule: TimeSchedule | None = None) -> RunResult:
    setup = spec.setup(ne)
    state0 = setup.initial_state(spec.T_initial)
    if schedule is None:
        schedule = TimeSchedule(dt, spec.t_final if t_final is None else t_final)
    return run(setup, state0, cfg, schedule, snapshot_times, probe_x)


def front_position(mesh: Mesh1D, T: np.ndarray, threshold: float = FRONT_THRESHOLD) -> float:
    """Center of the leftmost element whose average temperature is below ``threshold``."""
    avg = np.asarray(T).reshape(-1, 2).mean(axis=1)
    below = np.flatnonzero(avg < threshold)
    if below.size == 0:
        return float(mesh.nodes[-1])
    e = below[0]
    return float(0.5 * (mesh.nodes[e] + mesh.nodes[e + 1]))


def loglog_slope(x, y) -> float:
    """Least-squares slope of log(y) against log(x); nan if any error is zero."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if np.any(y <= 0):
        return float("nan")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


@dataclass
class ConvergenceStudy:
    mesh_ladder: tuple
    dt_ladder: tuple
    reference: tuple
    errors: dict = field(default_factory=dict)
    excluded: list = field(default_factory=list)
    space_order: float = float("nan")
    time_order: float = float("nan")
    exact: bool = False

    def table(self):
        """Rows (elements, dt, error) sorted by key."""
        return [(ne, dt, err) for (ne, dt), err in sorted(self.errors.items())]


def convergence_study(spec: ProblemSpec, mesh_ladder, dt_ladder, cfg: SolverConfig,
                      reference: DGField, reference_key=None, t_final=None,
                      exact_tol: float = 1e-12) -> ConvergenceStudy:
    """Temperature errors at t_final against a discrete reference.

    Runs the finest-dt row over ``mesh_ladder`` and the finest-mesh column
    over ``dt_ladder``.  Orders are least-squares log-log slopes in h and dt.
    """
    mesh_ladder = tuple(sorted(mesh_ladder))
    dt_ladder = tuple(sorted(dt_ladder, reverse=True))
    if reference_key is not None:
        rne, rdt = reference_key
        if rne <= mesh_ladder[-1] or rdt >= dt_ladder[-1]:
            raise ValueError("reference must be strictly finer than every study point")
    study = ConvergenceStudy(mesh_ladder, dt_ladder, reference_key or ())
    keys = [(ne, dt_ladder[-1]) for ne in mesh_ladder]
    keys += [(mesh_ladder[-1], dt) for dt in dt_ladder if (mesh_ladder[-1], dt) not in keys]
    for ne, dt in keys:
        res = simulate(spec, ne, dt, cfg, t_final)
        if res.failed:
            study.excluded.append(((ne, dt), res.message))
            continue
        study.errors[(ne, dt)] = l2_error(DGField(spec.mesh(ne), res.state.T), reference)
    errs = list(study.errors.values())
    if errs and max(errs) <= exact_tol:
        study.exact = True
        return study
    L = spec.domain[1] - spec.domain[0]
    row = [(L / ne, study.errors[(ne, dt_ladder[-1])]) for ne in mesh_ladder
           if (ne, dt_ladder[-1]) in study.errors]
    col = [(dt, study.errors[(mesh_ladder[-1], dt)]) for dt in dt_ladder
           if (mesh_ladder[-1], dt) in study.errors]
    if len(row) >= 2:
        study.space_order = loglog_slope(*zip(*row))
    if len(col) >= 2:
        study.time_order = loglog_slope(*zip(*col))
    return study


def reference_solution(spec: ProblemSpec, ne: int, dt: float, cfg: SolverConfig, t_final=None):
    res = simulate(spec, ne, dt, cfg, t_final)
    if res.failed:
        raise RuntimeError(f"reference run failed: {res.message}")
    return DGField(spec.mesh(ne), res.state.T), res


@dataclass
class MethodComparison:
    rows: list = field(default_factory=list)

    def speedup(self, method: str, dt: float, key: str = "sweeps") -> float:
        base = self.lookup("unaccelerated", dt)[key]
        return base / self.lookup(method, dt)[key]

    def lookup(self, method, dt):
        for r in self.rows:
            if r["method"] == method and r["dt"] == dt:
                return r
        raise KeyError((method, dt))


def compare_methods(spec: ProblemSpec, ne: int, dt_ladder, t_final=None,
                    methods=("consistent", "independent", "unaccelerated"),
                    cfg: SolverConfig | None = None) -> MethodComparison:
    """Total sweeps and wall time of each method at each dt."""
    cfg = cfg or SolverConfig()
    out = MethodComparison()
    for dt in dt_ladder:
        for m in methods:
            t0 = time.perf_counter()
            res = simulate(spec, ne, dt, replace(cfg, method=m), t_final)
            wall = time.perf_counter() - t0
            out.rows.append({
                "method": m, "dt": dt, "failed": res.failed,
                "sweeps": sum(r.sweeps for r in res.reports),
                "steps": len(res.reports), "wall": wall,
                "fixups": sum(r.fixups for r in res.reports),
                "floors": sum(r.floors for r in res.reports),
            })
    for r in out.rows:
        base = out.lookup("unaccelerated", r["dt"]) if "unaccelerated" in methods else None
        r["sweep_speedup"] = base["sweeps"] / r["sweeps"] if base and r["sweeps"] else float("nan")
        r["time_speedup"] = base["wall"] / r["wall"] if base and r["wall"] > 0 else float("nan")
    return out
