"""PNG figures for run, convergence and comparison outputs (Agg backend)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _dg_lines(mesh, values):
    """Piecewise-linear x and y arrays with a NaN break between elements."""
    v = np.asarray(values).reshape(-1, 2)
    x = np.column_stack([mesh.nodes[:-1], mesh.nodes[1:], np.full(mesh.ne, np.nan)]).ravel()
    y = np.column_stack([v[:, 0], v[:, 1], np.full(mesh.ne, np.nan)]).ravel()
    return x, y


def plot_profiles(path, mesh, snapshots):
    fig, ax = plt.subplots(figsize=(6, 4))
    for t, state in snapshots:
        x, y = _dg_lines(mesh, state.T)
        ax.plot(x, y, lw=1.2, label=f"t = {t:g} ns")
    ax.set_xlabel("x (cm)")
    ax.set_ylabel("T (eV)")
    if snapshots:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_probes(path, probe_x, probes):
    data = np.asarray(probes, dtype=float)
    fig, ax = plt.subplots(figsize=(6, 4))
    for i, x in enumerate(probe_x):
        ax.plot(data[:, 0], data[:, i + 1], lw=1.2, label=f"x = {x:g} cm")
    ax.set_xlabel("t (ns)")
    ax.set_ylabel("T (eV)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_convergence(path, spec, study):
    L = spec.domain[1] - spec.domain[0]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4))
    dt_fine = study.dt_ladder[-1]
    ne_fine = study.mesh_ladder[-1]
    row = [(L / ne, e) for (ne, dt), e in sorted(study.errors.items()) if dt == dt_fine]
    col = [(dt, e) for (ne, dt), e in sorted(study.errors.items()) if ne == ne_fine]
    for ax, pts, name, order in ((ax1, row, "h (cm)", study.space_order),
                                 (ax2, col, "dt (ns)", study.time_order)):
        if not pts:
            continue
        x, y = np.array(pts).T
        ax.loglog(x, y, "o-", label=f"slope {order:.2f}")
        ax.loglog(x, y[-1] * x / x[-1], "k--", lw=0.8, label="first order")
        ax.set_xlabel(name)
        ax.set_ylabel("L2 error in T (eV cm^1/2)")
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_comparison(path, comparison):
    rows = comparison.rows
    methods = list(dict.fromkeys(r["method"] for r in rows))
    dts = sorted({r["dt"] for r in rows})
    fig, ax = plt.subplots(figsize=(6, 4))
    width = 0.8 / max(len(methods), 1)
    for i, m in enumerate(methods):
        sweeps = [comparison.lookup(m, dt)["sweeps"] for dt in dts]
        ax.bar(np.arange(len(dts)) + i * width, sweeps, width, label=m)
    ax.set_xticks(np.arange(len(dts)) + 0.4 - width / 2)
    ax.set_xticklabels([f"{dt:g}" for dt in dts])
    ax.set_xlabel("dt (ns)")
    ax.set_ylabel("total sweeps")
    ax.set_yscale("log")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
