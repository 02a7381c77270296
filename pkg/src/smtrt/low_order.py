"""Gray LDG low-order system and its second-moment correction sources.

Unknowns are nodal DG coefficients ordered ``i = 2*e + k`` (k = 0 left
node, k = 1 right node).  The assembled system reads

    M_F F - 1/3 D^T E         = q_F
    D F + (M_E + P) E - B(T)  = q_E
        - M_a E + Btilde(T)   = q_T

where the first-moment row has been divided by c, so ``M_F`` carries the
coefficient sigma_F_tilde / c.  Interior faces use the LDG fluxes
F_hat = avg(F) + s/2 jump(F) + c kappa jump(E), E_hat = avg(E) - s/2 jump(E)
with kappa = alpha / 2 and the upwind switch s fixed by a global direction.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numba
import numpy as np
import scipy.sparse as sp

from .fem1d import Mesh1D
from .opacity import GrayOpacityFields
from .spectral import A_RAD, C_LIGHT
from .transport import HOMoments

METHODS = ("consistent", "independent")


@dataclass
class LowOrderSystem:
    """Assembled blocks of one low-order solve (all vectors have length 2*ne)."""

    D: sp.csr_matrix
    MF: np.ndarray
    MEP: sp.csr_matrix
    Ma: np.ndarray
    wB: np.ndarray
    cv_dt: np.ndarray
    q_F: np.ndarray
    q_E: np.ndarray
    q_T: np.ndarray
    mesh: Mesh1D
    c: float = C_LIGHT
    a: float = A_RAD
    DT: sp.csr_matrix | None = None

    def __post_init__(self):
        if self.DT is None:
            self.DT = self.D.T.tocsr()

    def base_schur(self) -> sp.csr_matrix:
        """1/3 D M_F^-1 D^T + M_E + P."""
        return (self.D @ sp.diags(1.0 / self.MF) @ self.DT / 3.0 + self.MEP).tocsr()

    def base_schur_banded(self) -> np.ndarray:
        """``base_schur`` in upper banded storage (bandwidth 2)."""
        ab = np.zeros((3, self.MF.size))
        _gram_banded(self.DT.indptr, self.DT.indices, self.DT.data, 1.0 / (3.0 * self.MF), ab)
        _add_upper_banded(self.MEP.indptr, self.MEP.indices, self.MEP.data, ab)
        return ab

    def with_corrections(self, corr: "CorrectionSources") -> "LowOrderSystem":
        return LowOrderSystem(self.D, self.MF, self.MEP, self.Ma, self.wB, self.cv_dt,
                              self.q_F + corr.r1 / self.c, self.q_E + corr.r0, self.q_T,
                              self.mesh, self.c, self.a, self.DT)


@numba.njit(cache=True)
def _gram_banded(indptr, indices, data, wt, ab):
    """Add the upper band of D diag(wt) D^T given the rows of D^T."""
    u = ab.shape[0] - 1
    for j in range(indptr.size - 1):
        for p in range(indptr[j], indptr[j + 1]):
            i = indices[p]
            for q in range(indptr[j], indptr[j + 1]):
                k = indices[q]
                if k >= i:
                    ab[u + i - k, k] += data[p] * data[q] * wt[j]


@numba.njit(cache=True)
def _add_upper_banded(indptr, indices, data, ab):
    u = ab.shape[0] - 1
    for i in range(indptr.size - 1):
        for p in range(indptr[i], indptr[i + 1]):
            k = indices[p]
            if k >= i:
                ab[u + i - k, k] += data[p]


@dataclass
class CorrectionSources:
    """Correction functionals evaluated on every nodal test function.

    ``r0`` enters the zeroth-moment row and ``r1`` the (unscaled) first-moment row.
    """

    r0: np.ndarray
    r1: np.ndarray
    mode: str


def _divergence(mesh: Mesh1D, s: int) -> sp.csr_matrix:
    return _divergence_pair(mesh.ne, s)[0]


@lru_cache(maxsize=32)
def _divergence_pair(ne: int, s: int):
    D = _divergence_pattern(ne, s)
    return D, D.T.tocsr()


def _divergence_pattern(ne: int, s: int) -> sp.csr_matrix:
    # the lumped LDG divergence has mesh-independent entries
    n = 2 * ne
    rows, cols, vals = [], [], []
    e = np.arange(ne)
    L, R = 2 * e, 2 * e + 1
    # -int u' F on each element (exact for linear integrands)
    for r, sign in ((L, 0.5), (R, -0.5)):
        for cidx in (L, R):
            rows.append(r)
            cols.append(cidx)
            vals.append(np.full(ne, sign))
    # interior faces: jump(u) (c1 F_1 + c2 F_2), normal pointing left -> right
    c1, c2 = 0.5 * (1 + s), 0.5 * (1 - s)
    f = np.arange(1, ne)
    r1, l2 = 2 * (f - 1) + 1, 2 * f
    for r, sign in ((r1, 1.0), (l2, -1.0)):
        rows += [r, r]
        cols += [r1, l2]
        vals += [np.full(f.size, sign * c1), np.full(f.size, sign * c2)]
    D = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n))
    return D.tocsr()


def _penalty(mesh: Mesh1D, coef: float, boundary_coef: float, diagonal=None) -> sp.csr_matrix:
    """Interior jump penalty ``coef`` and boundary penalty ``boundary_coef``,
    optionally plus a nodal diagonal.  The pattern stores every diagonal entry."""
    indptr, indices, inner, outer, diag_pos = _penalty_pattern(mesh.ne)
    data = coef * inner + boundary_coef * outer
    if diagonal is not None:
        data[diag_pos] += diagonal
    n = 2 * mesh.ne
    return sp.csr_matrix((data, indices, indptr), shape=(n, n))


@lru_cache(maxsize=32)
def _penalty_pattern(ne: int):
    n = 2 * ne
    f = np.arange(1, ne)
    r1, l2 = 2 * (f - 1) + 1, 2 * f
    one = np.ones(f.size)
    rows = np.concatenate([r1, r1, l2, l2, [0, n - 1]])
    cols = np.concatenate([r1, l2, r1, l2, [0, n - 1]])
    inner = np.concatenate([one, -one, -one, one, [0.0, 0.0]])
    outer = np.concatenate([0 * one, 0 * one, 0 * one, 0 * one, [1.0, 1.0]])
    order = np.lexsort((cols, rows))
    rows, cols, inner, outer = rows[order], cols[order], inner[order], outer[order]
    indptr = np.searchsorted(rows, np.arange(n + 1))
    diag_pos = np.flatnonzero(rows == cols)
    assert np.array_equal(rows[diag_pos], np.arange(n))
    return indptr, cols, inner, outer, diag_pos


def assemble_base(gray: GrayOpacityFields, dt: float, alpha_q: float, mesh: Mesh1D,
                  F_in, cv: np.ndarray, E_star: np.ndarray, F_star: np.ndarray,
                  T_star: np.ndarray, upwind: int = 1, c: float = C_LIGHT,
                  a: float = A_RAD) -> LowOrderSystem:
    """Assemble the diffusion blocks shared by both low-order variants.

    ``F_in`` holds the (left, right) incoming partial currents, ``cv`` the
    per-element heat capacity and the starred arrays the time-edge sources,
    all nodal with shape (ne, 2).
    """
    if not dt > 0:
        raise ValueError("time step must be positive")
    if upwind not in (1, -1):
        raise ValueError("upwind direction must be +1 or -1")
    sE, sF, sP = gray.sigma_E, gray.sigma_F, gray.sigma_P
    if np.any(sE < 0) or np.any(sF < 0) or np.any(sP < 0):
        raise ValueError("gray opacities must be nonnegative")
    sEt = sE + 1.0 / (c * dt)
    sFt = sF + 1.0 / (c * dt)
    hw = np.repeat(0.5 * mesh.h, 2)
    MF = hw * sFt.reshape(-1) / c
    if np.any(MF <= 0) or not np.all(np.isfinite(MF)):
        raise ValueError("flux mass matrix is singular")
    D, DT = _divergence_pair(mesh.ne, upwind)
    MEP = _penalty(mesh, 0.5 * c * alpha_q, c * alpha_q, c * hw * sEt.reshape(-1))
    Ma = c * hw * sE.reshape(-1)
    wB = hw * sP.reshape(-1)
    cv_dt = np.repeat(cv, 2) * hw / dt
    q_E = hw * np.asarray(E_star).reshape(-1) / dt
    q_E[0] -= 2.0 * F_in[0]
    q_E[-1] -= 2.0 * F_in[1]
    q_F = hw * np.asarray(F_star).reshape(-1) / (c * c * dt)
    q_T = cv_dt * np.asarray(T_star).reshape(-1)
    return LowOrderSystem(D, MF, MEP, Ma, wB, cv_dt, q_F, q_E, q_T, mesh, c, a, DT)


def _multigroup_term(mom: HOMoments, gray: GrayOpacityFields, sigma: np.ndarray, mesh: Mesh1D):
    diff = gray.sigma_F[..., None] - sigma[:, None, :]
    return (0.5 * mesh.h[:, None] * np.sum(diff * mom.F_g, axis=-1)).reshape(-1)


def _tensor_terms(mom: HOMoments, mesh: Mesh1D):
    """int u' T over elements minus sum over interior faces of jump(u) avg(T)."""
    ne = mesh.ne
    T = mom.Tclo
    out = np.zeros((ne, 2))
    tsum = 0.5 * (T[:, 0] + T[:, 1])
    out[:, 0] -= tsum
    out[:, 1] += tsum
    avgT = 0.5 * (T[:-1, 1] + T[1:, 0])
    out[:-1, 1] -= avgT
    out[1:, 0] += avgT
    return out.reshape(-1)


def assemble_independent(mom: HOMoments, gray: GrayOpacityFields, sigma: np.ndarray,
                         mesh: Mesh1D) -> CorrectionSources:
    """Closure source for the independent variant: first moment only."""
    r1 = _multigroup_term(mom, gray, sigma, mesh) + _tensor_terms(mom, mesh)
    return CorrectionSources(np.zeros(2 * mesh.ne), r1, "independent")


def assemble_consistent(mom: HOMoments, gray: GrayOpacityFields, sigma: np.ndarray,
                        mesh: Mesh1D, F_in, P_in, upwind: int = 1,
                        c: float = C_LIGHT, repair=None) -> CorrectionSources:
    """Discrete-residual corrections that make the LDG system reproduce the
    moments of the upwind transport discretization.

    The incoming-pressure boundary source is folded into ``r1``.  ``repair``
    optionally holds the (zeroth, first) angular moments of the element
    residual left by the sweep's positivity repair; adding them keeps the
    low-order system exact for the repaired intensity.
    """
    ne = mesh.ne
    s = upwind
    al = mom.alpha
    E, F, beta = mom.E, mom.F, mom.beta

    r0 = np.zeros((ne, 2))
    # interior faces: -1/2 jump(u) jump(beta) + s/2 jump(u) jump(F)
    face0 = -0.5 * (beta[:-1, 1] - beta[1:, 0]) + 0.5 * s * (F[:-1, 1] - F[1:, 0])
    r0[:-1, 1] += face0
    r0[1:, 0] -= face0
    # boundary: -u (outgoing current - c alpha E - F_in)
    r0[0, 0] -= -mom.Fm[0, 0] - c * al * E[0, 0] - F_in[0]
    r0[-1, 1] -= mom.Fp[-1, 1] - c * al * E[-1, 1] - F_in[1]

    r1 = (_multigroup_term(mom, gray, sigma, mesh) + _tensor_terms(mom, mesh)).reshape(ne, 2)
    Pd = mom.Pp - mom.Pm
    face1 = 0.5 * c * (Pd[:-1, 1] - Pd[1:, 0]) + c * s / 6.0 * (E[:-1, 1] - E[1:, 0])
    r1[:-1, 1] -= face1
    r1[1:, 0] += face1
    # boundary: -c u n (outgoing pressure - E/3), plus the incoming pressure source -c u n P_in
    r1[0, 0] += c * (mom.Pm[0, 0] - E[0, 0] / 3.0) + c * P_in[0]
    r1[-1, 1] -= c * (mom.Pp[-1, 1] - E[-1, 1] / 3.0) + c * P_in[1]
    if repair is not None:
        r0 += repair[0]
        r1 += repair[1]
    return CorrectionSources(r0.reshape(-1), r1.reshape(-1), "consistent")


def residuals(sys: LowOrderSystem, E: np.ndarray, F: np.ndarray, T: np.ndarray):
    """Row residuals (zeroth, first, energy) of the full nonlinear system."""
    E, F, T = (np.asarray(v).reshape(-1) for v in (E, F, T))
    B = sys.wB * sys.a * sys.c * T**4
    r_F = sys.MF * F - sys.DT @ E / 3.0 - sys.q_F
    r_E = sys.D @ F + sys.MEP @ E - B - sys.q_E
    r_T = -sys.Ma * E + sys.cv_dt * T + B - sys.q_T
    return r_E, r_F, r_T
