import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from smtrt.bench import convergence_study, marshak_spec, reference_solution
from smtrt.driver import SolverConfig

settings.register_profile("smtrt", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("smtrt")

MARSHAK_REFERENCE = (1024, 2.5e-4)
MARSHAK_MESHES = (32, 64, 128, 256)
MARSHAK_STEPS = (4e-3, 2e-3, 1e-3, 5e-4)

_ACCEPTANCE = {}


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def marshak_reference():
    """Consistent-method Marshak solution on the finest desk-scale mesh and step."""
    ne, dt = MARSHAK_REFERENCE
    ref, res = reference_solution(marshak_spec(), ne, dt, SolverConfig(linear_solver="banded"))
    return ref, res


@pytest.fixture(scope="session")
def marshak_studies(marshak_reference):
    ref, _ = marshak_reference
    return {m: convergence_study(marshak_spec(), MARSHAK_MESHES, MARSHAK_STEPS,
                                 SolverConfig(method=m, linear_solver="banded"), ref,
                                 MARSHAK_REFERENCE)
            for m in ("consistent", "independent")}


@pytest.fixture(scope="session")
def acceptance_log():
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
