import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from smtrt.bench import marshak_spec
from smtrt.driver import SolverConfig, first_low_order_system
from smtrt.fem1d import Mesh1D
from smtrt.low_order import CorrectionSources, assemble_base, residuals
from smtrt.nonlinear_solver import (
    EmissionOperators,
    LinearSolverError,
    T_FLOOR,
    banded_solve,
    eliminate_temperature,
    newton_solve,
    pcg_solve,
    schur_system,
    spd_check,
)
from smtrt.opacity import GrayOpacityFields
from smtrt.quadrature import alpha, gauss_legendre_sn
from smtrt.spectral import A_RAD, C_LIGHT, GroupStructure
from smtrt.transport import BoundaryData, inflow_moments


def random_spd(rng, n):
    A = rng.normal(size=(n, n))
    return A @ A.T + n * np.eye(n)


# ---- linear solvers ----

def test_pcg_on_diagonal_matrix():
    S = sp.diags(np.linspace(1.0, 50.0, 30))
    rhs = np.arange(1.0, 31.0)
    x, its = pcg_solve(S, rhs)
    assert its <= 2
    np.testing.assert_allclose(x, rhs / np.linspace(1.0, 50.0, 30), rtol=1e-12)
    x, its = pcg_solve(sp.identity(30), rhs, precondition=False)
    assert its <= 2


@given(st.integers(0, 10_000))
def test_pcg_matches_dense_solve(seed):
    rng = np.random.default_rng(seed)
    A = random_spd(rng, 20)
    b = rng.normal(size=20)
    x, _ = pcg_solve(A, b, tol=1e-12)
    ref = np.linalg.solve(A, b)
    assert np.linalg.norm(x - ref) <= 1e-9 * np.linalg.norm(ref)
    np.testing.assert_allclose(banded_solve(A, b), ref, rtol=1e-9, atol=1e-12)


def test_pcg_zero_rhs_and_breakdown():
    x, its = pcg_solve(sp.identity(4), np.zeros(4))
    assert its == 0 and np.all(x == 0)
    indefinite = np.diag([1.0, -1.0, 2.0])
    with pytest.raises(LinearSolverError):
        pcg_solve(indefinite, np.ones(3), precondition=False)
    with pytest.raises(LinearSolverError):
        pcg_solve(indefinite, np.ones(3))


def test_pcg_iteration_cap():
    rng = np.random.default_rng(3)
    A = random_spd(rng, 40) + np.diag(10 ** rng.uniform(0, 8, 40))
    with pytest.raises(LinearSolverError, match="did not converge"):
        pcg_solve(A, rng.normal(size=40), tol=1e-14, max_iter=2)


@pytest.fixture(scope="module")
def marshak_first_step():
    spec = marshak_spec()
    setup = spec.setup(32)
    state = setup.initial_state(spec.T_initial)
    out = {}
    for method in ("consistent", "independent"):
        sys = first_low_order_system(setup, state, 4e-3, SolverConfig(method=method))
        out[method] = (sys, state)
    return out


@pytest.mark.parametrize("method", ["consistent", "independent"])
def test_marshak_schur_is_spd(marshak_first_step, method):
    sys, state = marshak_first_step[method]
    em = EmissionOperators.from_system(sys)
    T0 = state.T.reshape(-1)
    schur = schur_system(sys, em, T0)
    report = spd_check(schur.S, em.pseudo_fission(T0))
    assert report["symmetry_defect"] <= 1e-13
    assert report["lambda_min"] > 0
    assert 0 <= report["max_pseudo_fission"] < 1


def test_jacobi_never_needs_more_iterations(marshak_first_step):
    sys, state = marshak_first_step["consistent"]
    em = EmissionOperators.from_system(sys)
    schur = schur_system(sys, em, state.T.reshape(-1))
    _, with_pc = pcg_solve(schur.S, schur.rhs, precondition=True)
    _, without = pcg_solve(schur.S, schur.rhs, precondition=False)
    assert with_pc <= without


def test_pseudo_fission_limits():
    em = EmissionOperators(np.array([2.0, 2.0]), np.array([1e30, 1.0]), A_RAD, C_LIGHT)
    ratio = em.pseudo_fission(np.array([5.0, 0.0]))
    assert ratio[0] < 1e-20
    assert ratio[1] == 0.0
    assert np.all(em.dBtilde(np.array([0.0, 3.0])) > 0)


def test_spd_check_reports_offending_coefficient():
    with pytest.raises(AssertionError, match="outside"):
        spd_check(np.eye(3), ratio=np.array([0.2, 1.0, 0.1]))
    with pytest.raises(AssertionError, match="symmetric"):
        spd_check(np.array([[2.0, 1.0], [0.0, 2.0]]))
    with pytest.raises(AssertionError, match="definite"):
        spd_check(np.diag([1.0, -1.0]))


# ---- temperature elimination ----

def test_elimination_linear_case():
    k1 = np.array([2.0, 5.0, 0.5])
    rhs = np.array([4.0, 1.0, 3.0])
    T, floors = eliminate_temperature(k1, 0.0, rhs)
    np.testing.assert_allclose(T, rhs / k1, rtol=1e-10)
    assert floors == 0


def test_elimination_constructed_root():
    k1, k4 = 3e12 / 1e-3, 7.0 * A_RAD * C_LIGHT
    rhs = k1 * 250.0 + k4 * 250.0 ** 4
    T, _ = eliminate_temperature(k1, k4, rhs)
    assert T == pytest.approx(250.0, rel=1e-10)


def bisection(k1, k4, r):
    lo, hi = 0.0, max(r / k1, 1.0)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if k1 * mid + k4 * mid ** 4 < r:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@given(st.integers(0, 10_000))
def test_elimination_matches_bisection(seed):
    rng = np.random.default_rng(seed)
    k1 = 10 ** rng.uniform(-3, 15, 8)
    k4 = 10 ** rng.uniform(-3, 6, 8)
    rhs = 10 ** rng.uniform(-5, 20, 8)
    T, floors = eliminate_temperature(k1, k4, rhs, T_guess=rng.uniform(0, 1e3, 8))
    ref = np.array([bisection(*v) for v in zip(k1, k4, rhs)])
    np.testing.assert_allclose(T, ref, rtol=1e-9)
    assert floors == 0 and np.all(T > 0)


def test_elimination_floors_are_counted():
    T, floors = eliminate_temperature(np.ones(4), np.ones(4), np.array([1.0, 0.0, -3.0, 2.0]))
    assert floors == 2
    assert T[1] == T_FLOOR and T[2] == T_FLOOR
    with pytest.raises(ValueError):
        eliminate_temperature(0.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        eliminate_temperature(1.0, -1.0, 1.0)


# ---- Newton ----

def random_system(rng, ne=6, sigma_P=True):
    mesh = Mesh1D(np.sort(np.r_[0.0, rng.uniform(0, 0.05, ne - 1), 0.05]))
    u = lambda lo, hi: rng.uniform(lo, hi, (ne, 2))
    sP = u(1, 100) if sigma_P else np.zeros((ne, 2))
    gray = GrayOpacityFields(u(1, 100), u(1, 100), sP)
    Ts = u(50, 300)
    Es = A_RAD * Ts ** 4 * 0.3
    Fs = u(-1, 1) * 1e8
    sys = assemble_base(gray, 1e-3, 0.5, mesh, [-1e10, -1e6], rng.uniform(1e11, 3e12, ne), Es, Fs, Ts)
    corr = CorrectionSources(rng.normal(size=2 * ne) * 1e8, rng.normal(size=2 * ne) * 1e10, "consistent")
    return sys, corr, (Es, Fs, Ts)


def dense_newton(full, x0):
    """Newton on the unreduced three-row system with a dense Jacobian."""
    N = full.MF.size
    D = full.D.toarray()
    k4 = full.wB * full.a * full.c
    x = x0.copy()
    for _ in range(100):
        E, F, T = x[:N], x[N:2 * N], x[2 * N:]
        rE, rF, rT = residuals(full, E, F, T)
        J = np.zeros((3 * N, 3 * N))
        J[:N, :N] = full.MEP.toarray()
        J[:N, N:2 * N] = D
        J[:N, 2 * N:] = -np.diag(4 * k4 * T ** 3)
        J[N:2 * N, :N] = -D.T / 3
        J[N:2 * N, N:2 * N] = np.diag(full.MF)
        J[2 * N:, :N] = -np.diag(full.Ma)
        J[2 * N:, 2 * N:] = np.diag(full.cv_dt + 4 * k4 * T ** 3)
        dx = np.linalg.solve(J, -np.r_[rE, rF, rT])
        x = x + dx
        if np.linalg.norm(dx) < 1e-15 * np.linalg.norm(x):
            break
    return x[:N], x[N:2 * N], x[2 * N:]


@pytest.mark.parametrize("linear_solver", ["pcg", "banded"])
@pytest.mark.parametrize("seed", [1, 2, 3])
def test_newton_matches_dense_monolithic_newton(seed, linear_solver):
    rng = np.random.default_rng(seed)
    ne = int(rng.integers(2, 9))
    sys, corr, state0 = random_system(rng, ne)
    res = newton_solve(sys, corr, state0, tol=1e-12, linear_solver=linear_solver)
    full = sys.with_corrections(corr)
    ref = dense_newton(full, np.concatenate([v.reshape(-1) for v in state0]))
    for got, want in zip((res.E, res.F, res.T), ref):
        assert np.abs(got - want).max() <= 1e-8 * np.abs(want).max()


def test_newton_without_planck_emission_is_a_linear_solve(rng):
    sys, corr, state0 = random_system(rng, 5, sigma_P=False)
    res = newton_solve(sys, corr, state0, tol=1e-12)
    full = sys.with_corrections(corr)
    N = full.MF.size
    A = np.block([[full.MEP.toarray(), full.D.toarray()],
                  [-full.D.toarray().T / 3, np.diag(full.MF)]])
    x = np.linalg.solve(A, np.r_[full.q_E, full.q_F])
    E, F = x[:N], x[N:]
    T = (full.Ma * E + full.q_T) / full.cv_dt
    for got, want in zip((res.E, res.F, res.T), (E, F, T)):
        assert np.abs(got - want).max() <= 1e-9 * np.abs(want).max()


def test_newton_equilibrium_fixed_point():
    ne = 6
    mesh = Mesh1D.uniform(0.0, 1.0, ne)
    quad = gauss_legendre_sn(8)
    z = np.zeros((ne, 2))
    T0 = 200.0
    gray = GrayOpacityFields(z + 7.0, z + 7.0, z + 7.0)
    F_in, _ = inflow_moments(BoundaryData(T0, T0), quad, GroupStructure.gray())
    E0 = z + A_RAD * T0 ** 4
    sys = assemble_base(gray, 1e-2, alpha(quad), mesh, F_in, np.full(ne, 3e12), E0, z, z + T0)
    res = newton_solve(sys, None, (E0, z, z + T0), linear_tol=1e-13)
    assert res.iterations == 1
    assert np.abs(res.E - E0.reshape(-1)).max() <= 1e-10 * E0.max()
    assert np.abs(res.T - T0).max() <= 1e-10 * T0
    assert np.abs(res.F).max() <= 1e-10 * C_LIGHT * E0.max()


def test_newton_residual_decreases_on_marshak(marshak_first_step):
    sys, state = marshak_first_step["consistent"]
    res = newton_solve(sys, None, (state.E, state.F, state.T), tol=1e-10, track_residual=True)
    hist = res.residual_history
    assert len(hist) == res.iterations >= 2
    # below ~1e-6 of the first residual the row sums hit cancellation noise of the large terms
    informative = [r for r in hist if r > 1e-5 * hist[0]]
    assert len(informative) >= 5
    assert all(b < a for a, b in zip(informative, informative[1:]))


def test_newton_input_validation(rng):
    sys, corr, (E, F, T) = random_system(rng, 3)
    with pytest.raises(ValueError):
        newton_solve(sys, corr, (E, F, -T))
    with pytest.raises(ValueError):
        newton_solve(sys, corr, (E * np.nan, F, T))
    with pytest.raises(ValueError):
        newton_solve(sys, corr, (E, F, T), linear_solver="lu")
