"""Command-line entry point: ``smtrt {run,converge,compare,reference}``.

Runs are described by a JSON config file.  Outputs are CSV tables, a JSON
summary, plain-text reference files and PNG figures.  Exit codes: 0 success,
1 solver failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import re
import sys
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import bench
from .driver import METHODS, SolverConfig, TimeSchedule, run
from .fem1d import DGField, Mesh1D
from .opacity import MaterialModel
from .spectral import GroupStructure

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2

SNAPSHOT_HEADER = ["x_left", "x_right", "T_left", "T_right", "E_left", "E_right", "F_left", "F_right"]
REFERENCE_MAGIC = "# smtrt discrete reference v1"

_SOLVER_KEYS = {f.name for f in fields(SolverConfig)} - {"method"}
_TOP_KEYS = {
    "problem", "problem_options", "method", "elements", "nodes", "dt", "dt_initial", "ramp_steps",
    "t_final", "snapshots", "probes", "output", "deterministic", "solver", "reference",
    "reference_elements", "reference_dt", "mesh_ladder", "dt_ladder", "compare_dt", "methods",
    "figures",
}
_LARSEN_OPTIONS = {"thin_regions", "thick_region", "cv", "groups"}
_EQUILIBRIUM_OPTIONS = {"T", "groups"}
_HOMOGENEOUS_OPTIONS = {"sigma", "T_drive"}
_INLINE_KEYS = {"name", "domain", "materials", "regions", "groups", "T_left", "T_right",
                "T_initial", "t_final", "sn_order"}
_MATERIAL_KEYS = {"kind", "coefficient", "exponent", "cv", "table", "name"}
_GROUP_KEYS = {"gray", "bounds", "logarithmic"}


class ConfigError(ValueError):
    """Configuration problems, one message per item."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


@dataclass
class RunConfig:
    problem: bench.ProblemSpec
    method: str
    mesh: object
    schedule: TimeSchedule
    solver: SolverConfig
    snapshots: tuple = ()
    probes: tuple = ()
    output: str = "smtrt_out"
    deterministic: bool = True
    figures: bool = True
    reference: str | None = None
    reference_elements: int = 1024
    reference_dt: float = 2.5e-4
    mesh_ladder: tuple = (32, 64, 128, 256)
    dt_ladder: tuple = (4e-3, 2e-3, 1e-3, 5e-4)
    compare_dt: tuple = ()
    methods: tuple = METHODS
    raw: dict = field(default_factory=dict)

    @property
    def reference_path(self) -> str:
        return self.reference or os.path.join(self.output, "reference.txt")


def key_positions(text: str) -> dict:
    """Map each object key path (a tuple) to its (line, column) in JSON ``text``."""
    token = re.compile(r'"(?:[^"\\]|\\.)*"|[{}\[\],:]|[^\s{}\[\],:"]+')
    pos = {}
    stack = []  # entries: [kind, path, current key or index]
    pending = None
    for m in token.finditer(text):
        tok = m.group()
        if tok in "{[":
            path = () if not stack else stack[-1][1] + (stack[-1][2],)
            stack.append(["obj" if tok == "{" else "arr", path, None if tok == "{" else 0])
            pending = None
        elif tok in "}]":
            stack.pop()
        elif tok == ",":
            if stack and stack[-1][0] == "arr":
                stack[-1][2] += 1
        elif tok == ":":
            if stack and pending is not None:
                stack[-1][2] = pending[0]
                line = text.count("\n", 0, pending[1]) + 1
                col = pending[1] - (text.rfind("\n", 0, pending[1]) + 1) + 1
                pos[stack[-1][1] + (pending[0],)] = (line, col)
            pending = None
        elif tok.startswith('"') and stack and stack[-1][0] == "obj":
            pending = (json.loads(tok), m.start())
    return pos


class _Checker:
    def __init__(self, positions):
        self.positions = positions
        self.errors = []

    def where(self, path):
        lc = self.positions.get(tuple(path))
        return f"line {lc[0]}, column {lc[1]}: " if lc else ""

    def fail(self, path, msg):
        self.errors.append(f"{self.where(path)}{'.'.join(map(str, path)) or 'config'}: {msg}")

    def keys(self, obj, allowed, path):
        if not isinstance(obj, dict):
            self.fail(path, "expected an object")
            return False
        for k in obj:
            if k not in allowed:
                self.fail(tuple(path) + (k,), f"unknown key {k!r}; allowed: {', '.join(sorted(allowed))}")
        return True

    def number(self, obj, key, path, positive=False, integer=False, default=None):
        if key not in obj:
            return default
        v = obj[key]
        p = tuple(path) + (key,)
        if isinstance(v, bool) or not isinstance(v, (int, float)) or (integer and not isinstance(v, int)):
            self.fail(p, f"{key} must be {'an integer' if integer else 'a number'}")
            return default
        if positive and not v > 0:
            self.fail(p, f"{key} must be positive")
            return default
        return v

    def number_list(self, obj, key, path, positive=False, integer=False, default=()):
        if key not in obj:
            return default
        v = obj[key]
        p = tuple(path) + (key,)
        if not isinstance(v, list) or not all(isinstance(x, (int, float)) and not isinstance(x, bool)
                                              for x in v):
            self.fail(p, f"{key} must be a list of numbers")
            return default
        if integer and not all(isinstance(x, int) for x in v):
            self.fail(p, f"{key} must hold integers")
            return default
        if positive and not all(x > 0 for x in v):
            self.fail(p, f"{key} entries must be positive")
            return default
        return tuple(v)


def _groups(ck: _Checker, g, path):
    if g is None:
        return None
    if not ck.keys(g, _GROUP_KEYS, path):
        return None
    try:
        if g.get("gray"):
            return GroupStructure.gray()
        if "bounds" in g:
            return GroupStructure(tuple(g["bounds"]))
        if "logarithmic" in g:
            lo, hi, G = g["logarithmic"]
            return GroupStructure.logarithmic(float(lo), float(hi), int(G))
    except (TypeError, ValueError) as exc:
        ck.fail(path, str(exc))
        return None
    ck.fail(path, "groups need one of 'gray', 'bounds' or 'logarithmic'")
    return None


def _material(ck: _Checker, m, path):
    if not ck.keys(m, _MATERIAL_KEYS, path):
        return None
    kind = m.get("kind")
    cv = ck.number(m, "cv", path, positive=True)
    name = str(m.get("name", ""))
    if cv is None:
        ck.fail(path, "material needs a positive cv")
        return None
    try:
        if kind == "power_law":
            return MaterialModel.power_law(float(m["coefficient"]), float(m.get("exponent", 0.0)), cv, name)
        if kind == "larsen":
            return MaterialModel.larsen(float(m["coefficient"]), cv, name)
        if kind == "constant":
            return MaterialModel.constant(tuple(m["table"]), cv, name)
    except (KeyError, TypeError, ValueError) as exc:
        ck.fail(path, f"invalid {kind} material: {exc}")
        return None
    ck.fail(tuple(path) + ("kind",), f"unknown material kind {kind!r}; valid kinds: power_law, larsen, constant")
    return None


def _problem(ck: _Checker, raw):
    prob = raw.get("problem")
    opts = raw.get("problem_options", {})
    if isinstance(prob, str):
        if prob not in bench.BUILTIN:
            ck.fail(("problem",), f"unknown problem {prob!r}; built-in problems: {', '.join(bench.BUILTIN)}")
            return None
        allowed = {"larsen": _LARSEN_OPTIONS, "equilibrium": _EQUILIBRIUM_OPTIONS,
                   "homogeneous": _HOMOGENEOUS_OPTIONS}.get(prob, set())
        if not ck.keys(opts, allowed, ("problem_options",)):
            return None
        kw = dict(opts)
        if "groups" in kw:
            kw["groups"] = _groups(ck, kw["groups"], ("problem_options", "groups"))
        try:
            return bench.BUILTIN[prob](**kw)
        except (TypeError, ValueError) as exc:
            ck.fail(("problem_options",), str(exc))
            return None
    if isinstance(prob, dict):
        path = ("problem",)
        if not ck.keys(prob, _INLINE_KEYS, path):
            return None
        missing = [k for k in ("domain", "materials", "regions", "T_left", "T_right", "T_initial",
                               "t_final") if k not in prob]
        if missing:
            ck.fail(path, f"inline problem is missing {', '.join(missing)}")
            return None
        mats = [_material(ck, m, path + ("materials", i)) for i, m in enumerate(prob["materials"])]
        groups = _groups(ck, prob.get("groups", {"gray": True}), path + ("groups",))
        if any(m is None for m in mats) or groups is None:
            return None
        try:
            return bench.ProblemSpec(
                str(prob.get("name", "inline")), tuple(prob["domain"]), tuple(mats),
                tuple(tuple(r) for r in prob["regions"]), groups, float(prob["T_left"]),
                float(prob["T_right"]), float(prob["T_initial"]), float(prob["t_final"]),
                int(prob.get("sn_order", 6)))
        except (TypeError, ValueError) as exc:
            ck.fail(path, str(exc))
            return None
    ck.fail(("problem",), "problem must be a built-in name or an inline object")
    return None


def parse_config_text(text: str, method_override: str | None = None,
                      snapshot_override=None, output_override: str | None = None) -> RunConfig:
    """Validate a JSON config; raises ConfigError with itemized messages."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"line {exc.lineno}, column {exc.colno}: malformed JSON: {exc.msg}"]) from None
    ck = _Checker(key_positions(text))
    if not ck.keys(raw, _TOP_KEYS, ()):
        raise ConfigError(ck.errors)
    spec = _problem(ck, raw)
    method = method_override or raw.get("method", "consistent")
    if method not in METHODS:
        ck.fail(("method",), f"unknown method {method!r}; valid methods: {', '.join(METHODS)}")
    if "nodes" in raw and "elements" in raw:
        ck.fail(("nodes",), "give either elements or nodes, not both")
    mesh = ck.number(raw, "elements", (), positive=True, integer=True, default=32)
    if "nodes" in raw:
        mesh = ck.number_list(raw, "nodes", (), default=None)
    dt = ck.number(raw, "dt", (), positive=True)
    if "dt" not in raw:
        ck.fail(("dt",), "dt is required")
    dt_initial = ck.number(raw, "dt_initial", (), positive=True)
    ramp = ck.number(raw, "ramp_steps", (), integer=True, default=0)
    if ramp is not None and ramp < 0:
        ck.fail(("ramp_steps",), "ramp_steps must be nonnegative")
    t_final = ck.number(raw, "t_final", (), positive=True)
    snaps = ck.number_list(raw, "snapshots", (), positive=True)
    if snapshot_override is not None:
        snaps = tuple(snapshot_override)
    probes = ck.number_list(raw, "probes", ())
    solver_raw = raw.get("solver", {})
    solver_kw = {}
    if ck.keys(solver_raw, _SOLVER_KEYS, ("solver",)):
        solver_kw = dict(solver_raw)
    ref_ne = ck.number(raw, "reference_elements", (), positive=True, integer=True, default=1024)
    ref_dt = ck.number(raw, "reference_dt", (), positive=True, default=2.5e-4)
    mesh_ladder = ck.number_list(raw, "mesh_ladder", (), positive=True, integer=True,
                                 default=(32, 64, 128, 256))
    dt_ladder = ck.number_list(raw, "dt_ladder", (), positive=True, default=(4e-3, 2e-3, 1e-3, 5e-4))
    compare_dt = ck.number_list(raw, "compare_dt", (), positive=True)
    methods = raw.get("methods", list(METHODS))
    if not isinstance(methods, list) or any(m not in METHODS for m in methods):
        ck.fail(("methods",), f"methods must be a list drawn from {', '.join(METHODS)}")
        methods = list(METHODS)
    for key in ("deterministic", "figures"):
        if key in raw and not isinstance(raw[key], bool):
            ck.fail((key,), f"{key} must be true or false")
    for key in ("output", "reference"):
        if key in raw and not isinstance(raw[key], str):
            ck.fail((key,), f"{key} must be a path string")
    if ck.errors:
        raise ConfigError(ck.errors)
    try:
        solver = SolverConfig(method=method, **solver_kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError([f"{ck.where(('solver',))}solver: {exc}"]) from None
    try:
        schedule = TimeSchedule(dt, spec.t_final if t_final is None else t_final, dt_initial, ramp)
        spec.mesh(mesh)
    except ValueError as exc:
        raise ConfigError([str(exc)]) from None
    return RunConfig(spec, method, mesh, schedule, solver, snaps, probes,
                     output_override or raw.get("output", "smtrt_out"),
                     raw.get("deterministic", True), raw.get("figures", True), raw.get("reference"),
                     ref_ne, ref_dt, mesh_ladder, dt_ladder, compare_dt or (dt,), tuple(methods), raw)


def parse_config(path: str, **overrides) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError([f"cannot read config {path}: {exc.strerror}"]) from None
    return parse_config_text(text, **overrides)


def _fmt(v) -> str:
    return repr(float(v))


def write_snapshot_csv(path: str, mesh: Mesh1D | None, state=None):
    """One row per element; header only when ``state`` is None."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SNAPSHOT_HEADER)
        if state is None:
            return
        T, E, F = (np.asarray(v).reshape(-1, 2) for v in (state.T, state.E, state.F))
        for e in range(mesh.ne):
            w.writerow([_fmt(mesh.nodes[e]), _fmt(mesh.nodes[e + 1]), _fmt(T[e, 0]), _fmt(T[e, 1]),
                        _fmt(E[e, 0]), _fmt(E[e, 1]), _fmt(F[e, 0]), _fmt(F[e, 1])])


def read_snapshot_csv(path: str) -> dict:
    """Columns of a snapshot CSV as float arrays."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != SNAPSHOT_HEADER:
        raise ValueError(f"{path} is not a snapshot file")
    data = np.array([[float(v) for v in r] for r in rows[1:]]).reshape(-1, len(SNAPSHOT_HEADER))
    return {k: data[:, i] for i, k in enumerate(SNAPSHOT_HEADER)}


def write_probes_csv(path: str, probe_x, probes):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"T(x={_fmt(x)})" for x in probe_x])
        for row in probes:
            w.writerow([_fmt(v) for v in row])


def write_reference(path: str, field_: DGField, meta: dict):
    """Mesh nodes, material ids and DG coefficients as shortest round-trip text."""
    with open(path, "w") as fh:
        fh.write(REFERENCE_MAGIC + "\n")
        for k in sorted(meta):
            fh.write(f"# {k} = {json.dumps(meta[k])}\n")
        fh.write("nodes " + " ".join(_fmt(x) for x in field_.mesh.nodes) + "\n")
        fh.write("material " + " ".join(str(int(m)) for m in field_.mesh.material_id) + "\n")
        for a, b in np.asarray(field_.values).reshape(-1, 2):
            fh.write(f"{_fmt(a)} {_fmt(b)}\n")


def read_reference(path: str):
    """Returns (DGField, meta)."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != REFERENCE_MAGIC:
        raise ValueError(f"{path} is not a reference file")
    meta = {}
    i = 1
    while i < len(lines) and lines[i].startswith("# "):
        k, v = lines[i][2:].split(" = ", 1)
        meta[k] = json.loads(v)
        i += 1
    nodes = np.array([float(x) for x in lines[i].split()[1:]])
    mat = np.array([int(x) for x in lines[i + 1].split()[1:]])
    vals = np.array([[float(x) for x in ln.split()] for ln in lines[i + 2:] if ln.strip()])
    mesh = Mesh1D(nodes, mat)
    return DGField(mesh, vals.reshape(mesh.ne, 2)), meta


def _report_dict(rep, deterministic: bool) -> dict:
    d = {
        "step": rep.step, "t": rep.t, "dt": rep.dt, "method": rep.method, "sweeps": rep.sweeps,
        "outer_iterations": rep.outer_iterations, "avg_newton": rep.avg_newton,
        "avg_linear": rep.avg_linear, "fixups": rep.fixups, "floors": rep.floors,
        "consistency": rep.consistency, "converged": rep.converged,
        "stagnations": rep.stagnations, "energy": rep.energy,
    }
    if not deterministic:
        d["sweep_time"] = rep.sweep_time
        d["lo_time"] = rep.lo_time
    return d


def _summary(cfg: RunConfig, res, snapshot_files, wall) -> dict:
    reps = res.reports
    out = {
        "problem": cfg.problem.name, "method": cfg.method,
        "elements": cfg.problem.mesh(cfg.mesh).ne, "t_final": cfg.schedule.t_final,
        "failed": res.failed, "message": res.message, "steps": len(reps),
        "totals": {
            "sweeps": sum(r.sweeps for r in reps),
            "outer_iterations": sum(r.outer_iterations for r in reps),
            "fixups": sum(r.fixups for r in reps),
            "floors": sum(r.floors for r in reps),
            "stagnations": sum(r.stagnations for r in reps),
            "max_consistency": max((r.consistency for r in reps), default=0.0),
        },
        "snapshots": snapshot_files,
        "solver": asdict(cfg.solver),
        "reports": [_report_dict(r, cfg.deterministic) for r in reps],
    }
    if not cfg.deterministic:
        out["wall_time"] = wall
        out["totals"]["sweep_time"] = sum(r.sweep_time for r in reps)
        out["totals"]["lo_time"] = sum(r.lo_time for r in reps)
    return out


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def _prepare_output(path: str):
    try:
        os.makedirs(path, exist_ok=True)
        probe = os.path.join(path, ".write_test")
        with open(probe, "w") as fh:
            fh.write("")
        os.remove(probe)
    except OSError as exc:
        raise ConfigError([f"output directory {path} is not writable: {exc.strerror}"]) from None


def cmd_run(cfg: RunConfig) -> int:
    import time

    from .plotting import plot_probes, plot_profiles

    _prepare_output(cfg.output)
    setup = cfg.problem.setup(cfg.mesh)
    t0 = time.perf_counter()
    res = run(setup, setup.initial_state(cfg.problem.T_initial), cfg.solver, cfg.schedule,
                    cfg.snapshots, cfg.probes)
    wall = time.perf_counter() - t0
    files = []
    snaps = list(res.snapshots)
    if res.failed and res.checkpoint is not None:
        snaps.append((res.checkpoint.t, res.checkpoint))
    for i, (t, st) in enumerate(snaps):
        name = f"snapshot_{i:04d}.csv"
        write_snapshot_csv(os.path.join(cfg.output, name), setup.mesh, st)
        files.append({"file": name, "t": t})
    write_probes_csv(os.path.join(cfg.output, "probes.csv"), cfg.probes, res.probes)
    _write_json(os.path.join(cfg.output, "summary.json"), _summary(cfg, res, files, wall))
    if cfg.figures:
        plot_profiles(os.path.join(cfg.output, "temperature.png"), setup.mesh, snaps)
        if cfg.probes:
            plot_probes(os.path.join(cfg.output, "probes.png"), cfg.probes, res.probes)
    if res.failed:
        print(f"run failed at t = {res.state.t}: {res.message}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def cmd_reference(cfg: RunConfig) -> int:
    _prepare_output(os.path.dirname(os.path.abspath(cfg.reference_path)))
    solver = replace(cfg.solver, linear_solver="banded")
    try:
        ref, res = bench.reference_solution(cfg.problem, cfg.reference_elements, cfg.reference_dt,
                                            solver, cfg.schedule.t_final)
    except RuntimeError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_FAILURE
    write_reference(cfg.reference_path, ref, {
        "problem": cfg.problem.name, "method": cfg.method, "elements": cfg.reference_elements,
        "dt": cfg.reference_dt, "t_final": cfg.schedule.t_final,
        "floors": sum(r.floors for r in res.reports),
    })
    print(f"reference written to {cfg.reference_path}")
    return EXIT_OK


def cmd_converge(cfg: RunConfig) -> int:
    from .plotting import plot_convergence

    path = cfg.reference_path
    if not os.path.exists(path):
        print(f"no reference solution at {path}; generate it first with "
              f"'smtrt reference --config <same config>'", file=sys.stderr)
        return EXIT_USAGE
    try:
        ref, meta = read_reference(path)
    except (ValueError, IndexError) as exc:
        print(f"cannot read reference {path}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    _prepare_output(cfg.output)
    try:
        study = bench.convergence_study(cfg.problem, cfg.mesh_ladder, cfg.dt_ladder,
                                        replace(cfg.solver, linear_solver="banded"), ref,
                                        (meta.get("elements"), meta.get("dt")), cfg.schedule.t_final)
    except ValueError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    with open(os.path.join(cfg.output, "convergence.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["elements", "dt", "l2_error"])
        for ne, dt, err in study.table():
            w.writerow([ne, _fmt(dt), _fmt(err)])
    _write_json(os.path.join(cfg.output, "convergence.json"), {
        "method": cfg.method, "reference": meta, "space_order": study.space_order,
        "time_order": study.time_order, "exact": study.exact,
        "excluded": [[list(k), msg] for k, msg in study.excluded],
    })
    if cfg.figures:
        plot_convergence(os.path.join(cfg.output, "convergence.png"), cfg.problem, study)
    print(f"space order {study.space_order:.3f}, time order {study.time_order:.3f}")
    return EXIT_FAILURE if study.excluded else EXIT_OK


def cmd_compare(cfg: RunConfig) -> int:
    from .plotting import plot_comparison

    _prepare_output(cfg.output)
    cmp = bench.compare_methods(cfg.problem, cfg.mesh, cfg.compare_dt, cfg.schedule.t_final,
                                cfg.methods, cfg.solver)
    keys = ["method", "dt", "failed", "steps", "sweeps", "fixups", "floors", "sweep_speedup"]
    if not cfg.deterministic:
        keys += ["wall", "time_speedup"]
    with open(os.path.join(cfg.output, "compare.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(keys)
        for r in cmp.rows:
            w.writerow([_fmt(r[k]) if isinstance(r[k], float) else r[k] for k in keys])
    if cfg.figures:
        plot_comparison(os.path.join(cfg.output, "compare.png"), cmp)
    return EXIT_FAILURE if any(r["failed"] for r in cmp.rows) else EXIT_OK


COMMANDS = {"run": cmd_run, "converge": cmd_converge, "compare": cmd_compare,
            "reference": cmd_reference}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="smtrt", description="1D multigroup Sn thermal radiative "
                                "transfer with second-moment acceleration")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--threads", type=int, help="sweep thread count; results do not depend on it")
    p.add_argument("--method", help=f"override the method ({', '.join(METHODS)})")
    p.add_argument("--snapshots", help="comma-separated output times, e.g. 0.5,1.0")
    return p


def _parse_times(text):
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise ConfigError([f"--snapshots expects comma-separated numbers, got {text!r}"]) from None


def set_threads(n: int):
    import numba

    if n < 1:
        raise ConfigError(["--threads must be positive"])
    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        if args.threads is not None:
            set_threads(args.threads)
        snaps = _parse_times(args.snapshots) if args.snapshots else None
        cfg = parse_config(args.config, method_override=args.method, snapshot_override=snaps,
                           output_override=args.out)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        for msg in exc.errors:
            print(f"config error: {msg}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
