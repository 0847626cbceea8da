import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bergman_dpp import DomainSpec, WeightFunction, build_basis, build_quadrature

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# criterion id -> list of (label, passed)
ACCEPTANCE = {}


def record(criterion, label, passed):
    ACCEPTANCE.setdefault(criterion, []).append((label, bool(passed)))


N_CRITERIA = 10


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for crit in range(1, N_CRITERIA + 1):
        items = ACCEPTANCE.get(crit, [("no result recorded", False)])
        ok = all(p for _, p in items)
        detail = "; ".join(f"{lbl}: {'ok' if p else 'FAILED'}" for lbl, p in items)
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {crit}: {detail}")


@pytest.fixture(scope="session")
def disk():
    return DomainSpec.disk()


@pytest.fixture(scope="session")
def phi():
    return WeightFunction.quadratic()


@pytest.fixture(scope="session")
def disk_grid(disk):
    return build_quadrature(disk, (64, 128))


@pytest.fixture(scope="session")
def basis_k4(disk_grid, phi):
    return build_basis(disk_grid, 4.0, phi, 20)


@pytest.fixture(scope="session")
def basis_k2(disk_grid, phi):
    return build_basis(disk_grid, 2.0, phi, 12)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(12345)
