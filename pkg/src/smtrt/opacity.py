"""Material models, multigroup opacities and the gray collapse.

Multigroup opacities are constant per element and evaluated at the
element-average temperature of the previous time step.  Gray opacities are
collapsed node by node, which makes them piecewise linear.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import (
    C_LIGHT,
    GroupStructure,
    planck_fractions,
    rosseland_fractions,
)

_PLANCK_NORM = 15.0 / np.pi**4
_ZERO_ENERGY_FLOOR = 1e-30
_ASYMPTOTIC_X = 30.0

MATERIAL_KINDS = ("power_law", "larsen", "constant")


@dataclass(frozen=True)
class MaterialModel:
    """Opacity law plus heat capacity ``cv`` (erg/cm^3/eV).

    kind="power_law": sigma = coefficient * T**exponent in every group.
    kind="larsen": sigma(nu, T) = coefficient / nu^3 * (1 - exp(-nu/T)),
        Planck-averaged over each group.
    kind="constant": ``table`` holds one opacity per group.
    """

    kind: str
    cv: float
    coefficient: float = 0.0
    exponent: float = 0.0
    table: tuple = ()
    name: str = ""

    def __post_init__(self):
        if self.kind not in MATERIAL_KINDS:
            raise ValueError(f"unknown material kind {self.kind!r}; expected one of {MATERIAL_KINDS}")
        if not self.cv > 0:
            raise ValueError("heat capacity must be positive")
        if self.kind in ("power_law", "larsen") and not self.coefficient > 0:
            raise ValueError("opacity coefficient must be positive")
        if self.kind == "constant":
            tab = tuple(float(s) for s in self.table)
            if not tab or any(s < 0 for s in tab):
                raise ValueError("constant opacity table must be nonempty and nonnegative")
            object.__setattr__(self, "table", tab)

    @classmethod
    def power_law(cls, coefficient, exponent, cv, name=""):
        return cls("power_law", cv, coefficient=coefficient, exponent=exponent, name=name)

    @classmethod
    def larsen(cls, coefficient, cv, name=""):
        return cls("larsen", cv, coefficient=coefficient, name=name)

    @classmethod
    def constant(cls, table, cv, name=""):
        return cls("constant", cv, table=tuple(table), name=name)


def _poly3(x):
    return ((x + 3.0) * x + 6.0) * x + 6.0


def larsen_group_opacity(coefficient: float, T, groups: GroupStructure) -> np.ndarray:
    """Planck-weighted group average of coefficient/nu^3 (1 - exp(-nu/T)).

    The weighted integrand collapses to coefficient * exp(-nu/T), so the
    average has the closed form
    15/pi^4 * coefficient * (e^-x_lo - e^-x_hi) / (T^3 b_g).
    """
    T = np.asarray(T, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        x = groups.array / T[..., None]
    x[..., 0] = 0.0
    xlo, xhi = x[..., :-1], x[..., 1:]
    b = planck_fractions(T, groups)
    T3 = (T**3)[..., None]
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        direct = _PLANCK_NORM * coefficient * (np.exp(-xlo) - np.exp(-xhi)) / (T3 * b)
        dx = np.where(np.isfinite(xhi), xhi - xlo, np.inf)
        decay = np.exp(-dx)
        hi_poly = np.where(np.isfinite(xhi), _poly3(np.where(np.isfinite(xhi), xhi, 0.0)), 0.0)
        asym = coefficient * (1.0 - decay) / (T3 * (_poly3(xlo) - decay * hi_poly))
    return np.where(xlo > _ASYMPTOTIC_X, asym, direct)


def eval_multigroup(materials, material_id, T_avg, groups: GroupStructure) -> np.ndarray:
    """Per-element, per-group opacity at element-average temperatures, shape (ne, G)."""
    T_avg = np.asarray(T_avg, dtype=float)
    if np.any(~(T_avg > 0)):
        raise ValueError("opacity evaluation needs positive temperatures")
    material_id = np.asarray(material_id)
    sigma = np.empty((T_avg.size, groups.G))
    for mid in np.unique(material_id):
        sel = material_id == mid
        mat = materials[mid]
        if mat.kind == "power_law":
            sigma[sel] = (mat.coefficient * T_avg[sel] ** mat.exponent)[:, None]
        elif mat.kind == "larsen":
            sigma[sel] = larsen_group_opacity(mat.coefficient, T_avg[sel], groups)
        else:
            if len(mat.table) != groups.G:
                raise ValueError(f"material {mid} has {len(mat.table)} opacities for {groups.G} groups")
            sigma[sel] = np.asarray(mat.table)[None, :]
    return sigma


def heat_capacity(materials, material_id) -> np.ndarray:
    """Per-element heat capacity."""
    return np.array([materials[m].cv for m in material_id], dtype=float)


def collapse_E(E_g: np.ndarray, sigma: np.ndarray, T=None, groups=None) -> np.ndarray:
    """Energy-weighted gray opacity at each node.

    ``E_g`` has shape (ne, 2, G) and ``sigma`` shape (ne, G).  Nodes where the
    total energy falls below 1e-30 of the field maximum fall back to Planck
    weights at ``T`` (or uniform weights if no temperature is given).
    """
    total = E_g.sum(axis=-1)
    num = np.einsum("eng,eg->en", E_g, sigma)
    cold = total <= _ZERO_ENERGY_FLOOR * max(np.max(np.abs(total)), 0.0)
    out = np.empty_like(total)
    warm = ~cold
    out[warm] = num[warm] / total[warm]
    if np.any(cold):
        if T is not None and groups is not None:
            w = planck_fractions(np.asarray(T)[cold], groups)
        else:
            w = np.ones((int(cold.sum()), sigma.shape[1]))
        sig_nodes = np.broadcast_to(sigma[:, None, :], E_g.shape)[cold]
        out[cold] = np.sum(w * sig_nodes, axis=-1) / np.sum(w, axis=-1)
    return out


def _weighted(weights, sigma):
    return np.einsum("eng,eg->en", weights, sigma) / weights.sum(axis=-1)


def collapse_F(T: np.ndarray, sigma: np.ndarray, groups: GroupStructure) -> np.ndarray:
    """Rosseland-spectrum weighted gray opacity at each node (ne, 2)."""
    return _weighted(rosseland_fractions(T, groups), sigma)


def collapse_P(T: np.ndarray, sigma: np.ndarray, groups: GroupStructure) -> np.ndarray:
    """Planck-weighted gray opacity at each node (ne, 2)."""
    return _weighted(planck_fractions(T, groups), sigma)


def tilde(sigma, dt: float, c: float = C_LIGHT):
    """Add the backward-Euler pseudo-absorption 1/(c dt)."""
    if not dt > 0:
        raise ValueError("time step must be positive")
    return np.asarray(sigma, dtype=float) + 1.0 / (c * dt)


@dataclass
class GrayOpacityFields:
    """Nodal (piecewise-linear) gray opacities, each of shape (ne, 2)."""

    sigma_E: np.ndarray
    sigma_F: np.ndarray
    sigma_P: np.ndarray

    def tilded(self, dt: float, c: float = C_LIGHT):
        return tilde(self.sigma_E, dt, c), tilde(self.sigma_F, dt, c)
