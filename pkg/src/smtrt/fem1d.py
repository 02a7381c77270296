"""1D mesh and piecewise-linear discontinuous (nodal) finite elements.

A DG field stores two nodal values per element, ``values[e] = (u_left, u_right)``.
All mass-type forms are lumped with the trapezoid rule, so every element
mass block is diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .quadrature import gauss3


@dataclass(frozen=True)
class Mesh1D:
    nodes: np.ndarray
    material_id: np.ndarray = field(default=None)

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise ValueError("mesh needs at least one element")
        if np.any(np.diff(nodes) <= 0):
            raise ValueError("mesh nodes must be strictly increasing")
        object.__setattr__(self, "nodes", nodes)
        if self.material_id is None:
            mat = np.zeros(nodes.size - 1, dtype=int)
        else:
            mat = np.asarray(self.material_id, dtype=int)
            if mat.shape != (nodes.size - 1,):
                raise ValueError("one material id per element required")
        object.__setattr__(self, "material_id", mat)

    @classmethod
    def uniform(cls, x0: float, x1: float, ne: int, material_id=None) -> "Mesh1D":
        return cls(np.linspace(x0, x1, ne + 1), material_id)

    @property
    def ne(self) -> int:
        return self.nodes.size - 1

    @property
    def h(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def length(self) -> float:
        return float(self.nodes[-1] - self.nodes[0])

    def node_positions(self) -> np.ndarray:
        """Positions of the DG nodes, shape (ne, 2)."""
        return np.stack([self.nodes[:-1], self.nodes[1:]], axis=1)

    def locate(self, x) -> np.ndarray:
        """Element index containing each point; shared nodes resolve to the left element."""
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.nodes, x, side="left") - 1
        return np.clip(idx, 0, self.ne - 1)


@dataclass
class DGField:
    mesh: Mesh1D
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.size != 2 * self.mesh.ne:
            raise ValueError("a DG field has two coefficients per element")
        if not np.all(np.isfinite(v)):
            raise ValueError("DG coefficients must be finite")
        self.values = v.reshape(self.mesh.ne, 2)

    @classmethod
    def constant(cls, mesh: Mesh1D, value: float) -> "DGField":
        return cls(mesh, np.full((mesh.ne, 2), float(value)))

    def element_average(self) -> np.ndarray:
        return self.values.mean(axis=1)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        e = self.mesh.locate(x)
        xl = self.mesh.nodes[e]
        t = (x - xl) / self.mesh.h[e]
        return (1.0 - t) * self.values[e, 0] + t * self.values[e, 1]

    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)


def lumped_mass(h: float, coeff) -> np.ndarray:
    """Trapezoid-lumped element mass block diag(h c0 / 2, h c1 / 2)."""
    if not h > 0:
        raise ValueError("element width must be positive")
    c = np.broadcast_to(np.asarray(coeff, dtype=float), (2,))
    return np.diag(0.5 * h * c)


def lumped_weights(mesh: Mesh1D) -> np.ndarray:
    """Nodal lumped-mass weights h/2, shape (ne, 2)."""
    return np.repeat(0.5 * mesh.h[:, None], 2, axis=1)


def jump_avg(u: DGField, face: int):
    """(jump, average) of ``u`` on interior face ``face`` (node index 1..ne-1).

    The normal points from the left element (1) to the right element (2).
    """
    ne = u.mesh.ne
    if not 1 <= face <= ne - 1:
        raise ValueError(f"face {face} is a boundary face; use trace()")
    u1 = u.values[face - 1, 1]
    u2 = u.values[face, 0]
    return u1 - u2, 0.5 * (u1 + u2)


def trace(u: DGField, face: int) -> float:
    """Interior trace of ``u`` on a boundary face (0 or ne)."""
    if face == 0:
        return float(u.values[0, 0])
    if face == u.mesh.ne:
        return float(u.values[-1, 1])
    raise ValueError(f"face {face} is an interior face; use jump_avg()")


def project(f, mesh: Mesh1D) -> DGField:
    """Lumped L2 projection onto Y1, i.e. nodal interpolation at element ends."""
    return DGField(mesh, np.asarray(f(mesh.node_positions()), dtype=float))


def _gauss_points(mesh: Mesh1D):
    rule = gauss3()
    x = mesh.nodes[:-1, None] + mesh.h[:, None] * rule.points[None, :]
    wts = mesh.h[:, None] * rule.weights[None, :]
    return x.reshape(-1), wts.reshape(-1)


def l2_error(u: DGField, ref: DGField) -> float:
    """Relative L2 distance ||u - ref|| / ||ref|| across (possibly) different meshes.

    Three-point Gauss-Legendre quadrature runs on the coarser of the two
    meshes; the other field is evaluated by point location.
    """
    ma, mb = u.mesh, ref.mesh
    scale = max(abs(ma.nodes[0]), abs(ma.nodes[-1]), ma.length)
    if (abs(ma.nodes[0] - mb.nodes[0]) > 1e-12 * scale
            or abs(ma.nodes[-1] - mb.nodes[-1]) > 1e-12 * scale):
        raise ValueError("fields must be defined on the same interval")
    coarse = ma if ma.ne <= mb.ne else mb
    x, wts = _gauss_points(coarse)
    ua, ub = u(x), ref(x)
    den = np.sqrt(np.sum(wts * ub * ub))
    num = np.sqrt(np.sum(wts * (ua - ub) ** 2))
    if den == 0.0:
        return float(num)
    return float(num / den)
