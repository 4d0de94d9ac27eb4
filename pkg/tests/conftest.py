import pytest
from hypothesis import HealthCheck, settings

from perturbwalk import engine, lattice

settings.register_profile("default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def lazy():
    return lattice.lazy_srw(2)


@pytest.fixture(scope="session")
def sticky_row():
    return lattice.make_table_law({(0, 0): 0.9, (1, 0): 0.025, (-1, 0): 0.025, (0, 1): 0.025, (0, -1): 0.025})


@pytest.fixture(scope="session")
def mild_row():
    return lattice.make_table_law({(0, 0): 0.5, (1, 0): 0.125, (-1, 0): 0.125, (0, 1): 0.125, (0, -1): 0.125})


@pytest.fixture()
def impure_spec(lazy, sticky_row):
    return engine.WalkSpec(d=2, base_law=lazy, impurities=engine.ImpuritySet({(0, 0): sticky_row}), seed=2024)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[k])
