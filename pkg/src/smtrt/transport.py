"""Multigroup S_N transport: upwind lumped-DG sweeps, positivity fixup, moments.

Intensities are stored as arrays of shape (N_dir, G, ne, 2).  Slab
normalization: sum(w) = 2, isotropic emission sigma_g B_g / 2, and the
boundary inflow intensity is B_g(T_bdr) / 2.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from functools import lru_cache

import numba
import numpy as np

from .quadrature import AngularQuadrature, alpha
from .spectral import C_LIGHT, GroupStructure, group_emission

# the sweep kernel has no cross-thread reductions, so any layer gives identical results
if "NUMBA_THREADING_LAYER" not in os.environ:
    numba.config.THREADING_LAYER = "workqueue"


@numba.njit(cache=True)
def _fix_element(il, ir, m, b, total, forward):
    """Zero the negative node and rescale the other so the element balance
    m I_out + b (I_L + I_R) = total is still satisfied."""
    if total <= 0.0:
        return 0.0, 0.0
    if forward:
        if il < 0.0:
            return 0.0, total / (m + b)
        return total / b, 0.0
    if ir < 0.0:
        return total / (m + b), 0.0
    return 0.0, total / b


@numba.njit(parallel=True, cache=True)
def _sweep_kernel(mu, h, sigt, q_iso, I_src, scale, inflow_left, inflow_right, fixup, out, fixes,
                  resid):
    """Source at (d, g, e, k) is q_iso[g, e, k] + scale * I_src[d, g, e, k]."""
    nd, ng, ne = I_src.shape[0], I_src.shape[1], I_src.shape[2]
    for k in numba.prange(nd * ng):
        d = k // ng
        g = k % ng
        m = abs(mu[d])
        a = 0.5 * m
        count = 0
        if mu[d] > 0.0:
            inc = inflow_left[g]
            for e in range(ne):
                b = 0.5 * sigt[e, g] * h[e]
                det = (a + b) * (a + b) + a * a
                rl = 0.5 * h[e] * (q_iso[g, e, 0] + scale * I_src[d, g, e, 0]) + m * inc
                rr = 0.5 * h[e] * (q_iso[g, e, 1] + scale * I_src[d, g, e, 1])
                il = ((a + b) * rl - a * rr) / det
                ir = (a * rl + (a + b) * rr) / det
                if fixup and (il < 0.0 or ir < 0.0):
                    il, ir = _fix_element(il, ir, m, b, rl + rr, True)
                    count += 1
                    resid[d, g, e, 0] = (a + b) * il + a * ir - rl
                    resid[d, g, e, 1] = -a * il + (a + b) * ir - rr
                out[d, g, e, 0] = il
                out[d, g, e, 1] = ir
                inc = ir
        else:
            inc = inflow_right[g]
            for e in range(ne - 1, -1, -1):
                b = 0.5 * sigt[e, g] * h[e]
                det = (a + b) * (a + b) + a * a
                rl = 0.5 * h[e] * (q_iso[g, e, 0] + scale * I_src[d, g, e, 0])
                rr = 0.5 * h[e] * (q_iso[g, e, 1] + scale * I_src[d, g, e, 1]) + m * inc
                il = ((a + b) * rl + a * rr) / det
                ir = (-a * rl + (a + b) * rr) / det
                if fixup and (il < 0.0 or ir < 0.0):
                    il, ir = _fix_element(il, ir, m, b, rl + rr, False)
                    count += 1
                    resid[d, g, e, 0] = (a + b) * il - a * ir - rl
                    resid[d, g, e, 1] = a * il + (a + b) * ir - rr
                out[d, g, e, 0] = il
                out[d, g, e, 1] = ir
                inc = il
        fixes[k] = count


@dataclass
class BoundaryData:
    """Boundary temperatures (eV) on the left (x = x0) and right (x = x1) faces."""

    T_left: float
    T_right: float

    def __post_init__(self):
        if self.T_left < 0 or self.T_right < 0:
            raise ValueError("boundary temperatures must be nonnegative")

    def inflow_intensity(self, groups: GroupStructure, c: float = C_LIGHT):
        """Isotropic incoming group intensities B_g(T_bdr)/2 on each side, shape (G,)."""
        return _inflow(float(self.T_left), float(self.T_right), groups)


@lru_cache(maxsize=64)
def _inflow(T_left: float, T_right: float, groups: GroupStructure):
    out = []
    for T in (T_left, T_right):
        v = np.zeros(groups.G) if T == 0.0 else 0.5 * group_emission(T, groups)
        v.flags.writeable = False
        out.append(v)
    return out[0], out[1]


def inflow_moments(bdry: BoundaryData, quad: AngularQuadrature, groups: GroupStructure,
                   c: float = C_LIGHT):
    """Incoming partial moments on each boundary.

    Returns ``(F_in, P_in)``, each a length-2 array (left, right):
    F_in = sum_{mu n < 0} w (mu n) I_bdr   (nonpositive),
    P_in = (1/c) sum_{mu n < 0} w mu^2 I_bdr.
    """
    left, right = bdry.inflow_intensity(groups, c)
    pos, neg = quad.mu > 0, quad.mu < 0
    wl, wr = left.sum(), right.sum()
    F_in = np.array([
        -np.sum(quad.w[pos] * quad.mu[pos]) * wl,
        np.sum(quad.w[neg] * quad.mu[neg]) * wr,
    ])
    P_in = np.array([
        np.sum(quad.w[pos] * quad.mu[pos] ** 2) * wl,
        np.sum(quad.w[neg] * quad.mu[neg] ** 2) * wr,
    ]) / c
    return F_in, P_in


@dataclass
class SweepResult:
    """Swept intensity, number of repaired elements, and the element-equation
    residual left behind by the repairs (zero where no repair happened)."""

    intensity: np.ndarray
    fixups: int = 0
    residual: np.ndarray | None = None

    def residual_moments(self, quad: AngularQuadrature):
        """Group-summed sum_d w rho and sum_d w mu rho of the repair residual, each (ne, 2)."""
        if self.residual is None:
            shape = self.intensity.shape[2:]
            return np.zeros(shape), np.zeros(shape)
        rg = self.residual.sum(axis=1)
        return (np.einsum("d,den->en", quad.w, rg),
                np.einsum("d,den->en", quad.w * quad.mu, rg))


def emission_source(T: np.ndarray, sigma: np.ndarray, groups: GroupStructure) -> np.ndarray:
    """Isotropic nodal emission sigma_g B_g(T) / 2, shape (G, ne, 2)."""
    Bg = group_emission(T, groups)  # (ne, 2, G)
    return np.moveaxis(0.5 * sigma[:, None, :] * Bg, -1, 0)


def sweep(emission_T: np.ndarray, I_prev: np.ndarray, sigma: np.ndarray, dt: float,
          bdry: BoundaryData, quad: AngularQuadrature, groups: GroupStructure,
          h: np.ndarray, fixup: bool = True, c: float = C_LIGHT) -> SweepResult:
    """Invert streaming plus removal for every direction and group.

    ``emission_T`` is the nodal temperature (ne, 2) driving emission,
    ``I_prev`` the previous-time intensity, ``sigma`` the (ne, G) opacity.
    With ``fixup`` a balance-preserving zero-and-scale repair is applied
    element by element during the march, so downstream elements see the
    repaired outflow.
    """
    if not dt > 0:
        raise ValueError("time step must be positive")
    sigt = np.ascontiguousarray(sigma + 1.0 / (c * dt))
    if np.any(~np.isfinite(sigt)) or np.any(sigt < 0):
        raise ValueError("total opacity must be finite and nonnegative")
    q_iso = emission_source(emission_T, sigma, groups)
    return _run_sweep(q_iso, I_prev, 1.0 / (c * dt), sigt, bdry, quad, groups, h, fixup, c)


def sweep_source(q, sigt, bdry, quad, groups, h, fixup=True, c=C_LIGHT) -> SweepResult:
    """Sweep with an explicit nodal volumetric source ``q`` (N_dir, G, ne, 2)."""
    q_iso = np.zeros((groups.G, np.size(h), 2))
    return _run_sweep(q_iso, q, 1.0, sigt, bdry, quad, groups, h, fixup, c)


def _run_sweep(q_iso, I_src, scale, sigt, bdry, quad, groups, h, fixup, c) -> SweepResult:
    left, right = bdry.inflow_intensity(groups, c)
    nd, ng = quad.N, groups.G
    out = np.empty((nd, ng, h.size, 2))
    resid = np.zeros((nd, ng, h.size, 2))
    fixes = np.zeros(nd * ng, dtype=np.int64)
    _sweep_kernel(quad.mu, np.ascontiguousarray(h, dtype=float), np.ascontiguousarray(sigt),
                  np.ascontiguousarray(q_iso, dtype=float), np.ascontiguousarray(I_src, dtype=float),
                  float(scale), left, right, bool(fixup), out, fixes, resid)
    return SweepResult(out, int(fixes.sum()), resid)


def fixup_zero_and_scale(I: np.ndarray):
    """Zero negative nodal values, rescaling each element to keep its average.

    Elements with nonpositive average are zeroed.  Returns the repaired
    copy and the number of elements touched.
    """
    I = np.array(I, dtype=float, copy=True)
    il, ir = I[..., 0], I[..., 1]
    bad = (il < 0) | (ir < 0)
    avg = 0.5 * (il + ir)
    new_l = np.where(avg <= 0, 0.0, np.where(il < 0, 0.0, 2.0 * avg))
    new_r = np.where(avg <= 0, 0.0, np.where(ir < 0, 0.0, 2.0 * avg))
    I[..., 0] = np.where(bad, new_l, il)
    I[..., 1] = np.where(bad, new_r, ir)
    return I, int(bad.sum())


@dataclass
class HOMoments:
    """Moments of a multigroup angular intensity.

    Group fields ``E_g``, ``F_g`` have shape (ne, 2, G); the gray fields are
    (ne, 2).  ``Fp``/``Fm`` are the mu > 0 / mu < 0 half-range currents,
    ``Pp``/``Pm`` the matching half-range pressures, ``beta`` is
    sum w (|mu| - alpha) I and ``Tclo`` is sum w (mu^2 - 1/3) I, all
    group-summed and nodal.
    """

    E_g: np.ndarray
    F_g: np.ndarray
    E: np.ndarray
    F: np.ndarray
    Tclo: np.ndarray
    Fp: np.ndarray
    Fm: np.ndarray
    Pp: np.ndarray
    Pm: np.ndarray
    beta: np.ndarray
    alpha: float = field(default=0.5)


def moments(I: np.ndarray, quad: AngularQuadrature, c: float = C_LIGHT) -> HOMoments:
    mu, w = quad.mu, quad.w
    al = alpha(quad)
    # reductions run over directions in ascending mu, then groups, in fixed order
    E_g = np.moveaxis(np.einsum("d,dgen->gen", w, I), 0, -1) / c
    F_g = np.moveaxis(np.einsum("d,dgen->gen", w * mu, I), 0, -1)
    Ig = I.sum(axis=1)  # (N, ne, 2), summed over groups in order
    pos, neg = mu > 0, mu < 0
    E = E_g.sum(axis=-1)
    F = F_g.sum(axis=-1)
    Tclo = np.einsum("d,den->en", w * (mu * mu - 1.0 / 3.0), Ig)
    Fp = np.einsum("d,den->en", (w * mu)[pos], Ig[pos])
    Fm = np.einsum("d,den->en", (w * mu)[neg], Ig[neg])
    Pp = np.einsum("d,den->en", (w * mu * mu)[pos], Ig[pos]) / c
    Pm = np.einsum("d,den->en", (w * mu * mu)[neg], Ig[neg]) / c
    beta = np.einsum("d,den->en", w * (np.abs(mu) - al), Ig)
    return HOMoments(E_g, F_g, E, F, Tclo, Fp, Fm, Pp, Pm, beta, al)


def isotropic_equilibrium(T: np.ndarray, quad: AngularQuadrature, groups: GroupStructure) -> np.ndarray:
    """Intensity B_g(T)/2 in every direction, shape (N_dir, G, ne, 2)."""
    Ig = 0.5 * np.moveaxis(group_emission(T, groups), -1, 0)
    return np.broadcast_to(Ig[None], (quad.N,) + Ig.shape).copy()
