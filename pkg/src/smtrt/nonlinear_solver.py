"""Inner Newton iteration for the gray low-order system.

Each iteration linearizes emission about the current temperature, eliminates
the flux and the linearized energy row to get an SPD Schur system for E,
solves it, recovers F element by element and then updates T by solving the
pointwise material balance exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np
import scipy.sparse as sp
from scipy.linalg import solveh_banded

from .low_order import CorrectionSources, LowOrderSystem, residuals

T_FLOOR = 1e-8
ROUNDOFF_FLOOR = 1e-13
# below this relative change, a non-decreasing change means the iterate sits at solver noise
STAGNATION_LEVEL = 1e-6
LINEAR_SOLVERS = ("pcg", "banded")


class LinearSolverError(RuntimeError):
    pass


@dataclass
class EmissionOperators:
    """Lumped emission operators; ``wB`` = h/2 sigma_P and ``cv_dt`` = h/2 C_v/dt per node."""

    wB: np.ndarray
    cv_dt: np.ndarray
    a: float
    c: float

    @classmethod
    def from_system(cls, sys: LowOrderSystem) -> "EmissionOperators":
        return cls(sys.wB, sys.cv_dt, sys.a, sys.c)

    def B(self, T):
        return self.wB * self.a * self.c * T**4

    def Btilde(self, T):
        return self.cv_dt * T + self.B(T)

    def dB(self, T0):
        return 4.0 * self.wB * self.a * self.c * T0**3

    def dBtilde(self, T0):
        return self.cv_dt + self.dB(T0)

    def pseudo_fission(self, T0):
        """Nodal coefficient dB / dBtilde, which lies in [0, 1)."""
        return self.dB(T0) / self.dBtilde(T0)


@dataclass
class SchurSystem:
    S: sp.csr_matrix
    rhs: np.ndarray
    Ma: np.ndarray


def schur_system(sys: LowOrderSystem, em: EmissionOperators, T0: np.ndarray,
                 base: sp.csr_matrix | None = None) -> SchurSystem:
    """Reduced system S E = rhs at linearization point ``T0``."""
    if base is None:
        base = sys.base_schur()
    ratio = em.pseudo_fission(T0)
    S = (base - sp.diags(ratio * sys.Ma)).tocsr()
    return SchurSystem(S, _schur_rhs(sys, em, T0, ratio, sys.D @ (sys.q_F / sys.MF)), sys.Ma)


def _schur_rhs(sys, em, T0, ratio, flux_part):
    return sys.q_E + em.B(T0) + ratio * (sys.q_T - em.Btilde(T0)) - flux_part


def to_banded(S) -> np.ndarray:
    """Upper banded storage ``ab[u + i - j, j] = S[i, j]`` of a symmetric matrix."""
    S = sp.csr_matrix(S)
    coo = S.tocoo()
    u = int(max(np.max(coo.col - coo.row), 0)) if coo.nnz else 0
    ab = np.zeros((u + 1, S.shape[0]))
    for k in range(u + 1):
        ab[u - k, k:] = S.diagonal(k)
    return ab


@numba.njit(cache=True)
def _banded_matvec(ab, x, y):
    u = ab.shape[0] - 1
    n = x.size
    for i in range(n):
        y[i] = ab[u, i] * x[i]
    for k in range(1, u + 1):
        row = u - k
        for j in range(k, n):
            v = ab[row, j]
            y[j - k] += v * x[j]
            y[j] += v * x[j - k]


@numba.njit(cache=True)
def _pcg_banded(ab, rhs, x, tol, precondition, max_iter):
    """Returns (iterations, status) with status 0 converged, 1 breakdown, 2 exhausted."""
    n = rhs.size
    u = ab.shape[0] - 1
    bnorm = np.sqrt(np.sum(rhs * rhs))
    if bnorm == 0.0:
        x[:] = 0.0
        return 0, 0
    dinv = np.ones(n)
    if precondition:
        for i in range(n):
            dinv[i] = 1.0 / ab[u, i]
    Sp = np.empty(n)
    _banded_matvec(ab, x, Sp)
    r = rhs - Sp
    if np.sqrt(np.sum(r * r)) <= tol * bnorm:
        return 0, 0
    z = dinv * r
    p = z.copy()
    rz = np.sum(r * z)
    for it in range(1, max_iter + 1):
        _banded_matvec(ab, p, Sp)
        curv = np.sum(p * Sp)
        if not curv > 0.0:
            return it, 1
        step = rz / curv
        x += step * p
        r -= step * Sp
        if np.sqrt(np.sum(r * r)) <= tol * bnorm:
            return it, 0
        z = dinv * r
        rz_new = np.sum(r * z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return max_iter, 2


def pcg_banded(ab, rhs, tol=1e-10, x0=None, precondition=True, max_iter=None):
    """Jacobi-preconditioned CG on a matrix in upper banded storage."""
    rhs = np.ascontiguousarray(rhs, dtype=float)
    n = rhs.size
    if max_iter is None:
        max_iter = 10 * n
    if precondition and np.any(~(ab[-1] > 0)):
        raise LinearSolverError("matrix has a nonpositive diagonal entry")
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    it, status = _pcg_banded(np.ascontiguousarray(ab), rhs, x, float(tol), bool(precondition),
                             int(max_iter))
    if status == 1:
        raise LinearSolverError(f"nonpositive curvature at iteration {it}")
    if status == 2:
        raise LinearSolverError(f"CG did not converge in {max_iter} iterations")
    return x, it


def pcg_solve(S, rhs, tol=1e-10, x0=None, precondition=True, max_iter=None):
    """Conjugate gradients with an optional Jacobi preconditioner.

    Stops when ||rhs - S x|| <= tol ||rhs||, after at most 10 n iterations
    by default.  Returns ``(x, iterations)``.
    """
    return pcg_banded(to_banded(S), rhs, tol, x0, precondition, max_iter)


def banded_solve(S, rhs):
    """Direct solve through a banded Cholesky factorization."""
    return solveh_banded(to_banded(S), rhs)


@numba.njit(cache=True)
def _eliminate(k1, k4, rhs, guess, tol, max_iter, floor, T):
    floors = 0
    for i in range(rhs.size):
        r = rhs[i]
        if not r > 0.0:
            T[i] = floor
            floors += 1
            continue
        hi = r / k1[i]
        if k4[i] > 0.0:
            hi = min(hi, (r / k4[i]) ** 0.25)
        lo = 0.0
        x = min(max(guess[i], 0.0), hi)
        done = False
        for _ in range(max_iter):
            f = k1[i] * x + k4[i] * x**4 - r
            if abs(f) <= tol * r:
                done = True
                break
            if f < 0.0:
                lo = x
            else:
                hi = x
            xn = x - f / (k1[i] + 4.0 * k4[i] * x**3)
            x = xn if lo < xn < hi else 0.5 * (lo + hi)
        if not done:
            return floors, i
        T[i] = x
    return floors, -1


def eliminate_temperature(k1, k4, rhs, T_guess=None, tol=1e-10, max_iter=200):
    """Solve k1 T + k4 T^4 = rhs node by node.

    Newton's method is safeguarded by a bracket [0, hi] with
    hi = min(rhs/k1, (rhs/k4)^(1/4)), falling back to bisection whenever a
    step leaves the bracket.  Nodes with rhs <= 0 are floored to 1e-8 eV.
    Returns ``(T, floored_count)``.
    """
    k1, k4, rhs = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (k1, k4, rhs)))
    if np.any(~(k1 > 0)) or np.any(~(k4 >= 0)):
        raise ValueError("need k1 > 0 and k4 >= 0")
    shape = rhs.shape
    if T_guess is None:
        guess = np.full(rhs.size, np.inf)
    else:
        guess = np.ascontiguousarray(np.broadcast_to(np.asarray(T_guess, dtype=float), shape)).ravel()
    T = np.empty(rhs.size)
    flat = [np.ascontiguousarray(v).ravel() for v in (k1, k4, rhs)]
    floors, bad = _eliminate(*flat, guess, float(tol), int(max_iter), T_FLOOR, T)
    if bad >= 0:
        raise RuntimeError(f"temperature elimination did not converge at node {bad}")
    return T.reshape(shape), int(floors)


def relative_change(new, old) -> float:
    """Stacked per-component relative change sqrt(sum_k (||new_k - old_k|| / s_k)^2)
    with s_k = max(||new_k||, ||old_k||), so T and E contribute without units."""
    total = 0.0
    for a, b in zip(new, old):
        scale = max(np.linalg.norm(a), np.linalg.norm(b))
        d = np.linalg.norm(a - b)
        total += (d / scale) ** 2 if scale > 0 else 0.0
    return float(np.sqrt(total))


@dataclass
class NewtonResult:
    E: np.ndarray
    F: np.ndarray
    T: np.ndarray
    iterations: int
    linear_iterations: list = field(default_factory=list)
    floors: int = 0
    residual_history: list = field(default_factory=list)
    stagnated: bool = False


def newton_solve(sys: LowOrderSystem, corr: CorrectionSources | None, state0, tol=1e-3,
                 max_iter=100, linear_solver="pcg", linear_tol=1e-10,
                 elimination_tol=1e-10, track_residual=False) -> NewtonResult:
    """Solve the low-order system with correction sources ``corr``.

    ``state0`` is the (E, F, T) initial guess (any shapes with 2*ne entries).
    Convergence: relative change in (T, E) below ``tol`` times the first
    change, or below max(1e-13, 10 linear_tol).  A change that is already
    below 1e-6 and stops decreasing marks the linear-solve noise floor and
    also ends the iteration (flagged as ``stagnated``).  With
    ``track_residual`` the nonlinear row residual norm is recorded per iteration.
    """
    if linear_solver not in LINEAR_SOLVERS:
        raise ValueError(f"unknown linear solver {linear_solver!r}")
    full = sys.with_corrections(corr) if corr is not None else sys
    em = EmissionOperators.from_system(full)
    E, F, T = (np.array(v, dtype=float).reshape(-1) for v in state0)
    if not (np.all(np.isfinite(E)) and np.all(np.isfinite(F)) and np.all(T > 0)):
        raise ValueError("initial state must be finite with positive temperature")
    base = full.base_schur_banded()
    flux_part = full.D @ (full.q_F / full.MF)
    k4 = full.wB * full.a * full.c
    res = NewtonResult(E, F, T, 0)
    # changes below the linear-solve accuracy carry no information
    floor = max(ROUNDOFF_FLOOR, 10.0 * linear_tol)
    diff0 = prev = None
    for it in range(1, max_iter + 1):
        ratio = em.pseudo_fission(T)
        ab = base.copy()
        ab[-1] -= ratio * full.Ma
        rhs = _schur_rhs(full, em, T, ratio, flux_part)
        if linear_solver == "pcg":
            E_new, nlin = pcg_banded(ab, rhs, linear_tol, x0=E)
        else:
            E_new, nlin = solveh_banded(ab, rhs), 1
        res.linear_iterations.append(nlin)
        F_new = (full.q_F + full.DT @ E_new / 3.0) / full.MF
        T_new, nf = eliminate_temperature(full.cv_dt, k4, full.Ma * E_new + full.q_T, T,
                                          elimination_tol)
        res.floors += nf
        diff = relative_change((T_new, E_new), (T, E))
        E, F, T = E_new, F_new, T_new
        if track_residual:
            rE, rF, _ = residuals(full, E, F, T)
            res.residual_history.append(float(np.linalg.norm(rE) + np.linalg.norm(rF)))
        res.iterations = it
        if diff0 is None:
            diff0 = diff
            if diff0 <= floor:
                break
            continue
        if diff < tol * diff0 or diff <= floor:
            break
        if prev is not None and diff <= STAGNATION_LEVEL and diff >= prev:
            res.stagnated = True
            break
        prev = diff
    else:
        raise RuntimeError(f"inner Newton did not converge in {max_iter} iterations")
    res.E, res.F, res.T = E, F, T
    return res


def spd_check(S, ratio=None, tol=1e-13) -> dict:
    """Dense symmetry and definiteness check for small Schur matrices."""
    A = S.toarray() if sp.issparse(S) else np.asarray(S)
    scale = np.linalg.norm(A)
    sym = float(np.linalg.norm(A - A.T) / scale)
    lam = float(np.linalg.eigvalsh(0.5 * (A + A.T))[0])
    report = {"symmetry_defect": sym, "lambda_min": lam}
    if sym > tol:
        raise AssertionError(f"Schur matrix not symmetric: defect {sym:.3e}")
    if not lam > 0:
        raise AssertionError(f"Schur matrix not positive definite: lambda_min {lam:.3e}")
    if ratio is not None:
        ratio = np.asarray(ratio)
        badn = np.flatnonzero((ratio < 0) | (ratio >= 1))
        if badn.size:
            raise AssertionError(f"pseudo-fission coefficient {ratio[badn[0]]} at node {badn[0]} outside [0, 1)")
        report["max_pseudo_fission"] = float(ratio.max()) if ratio.size else 0.0
    return report
