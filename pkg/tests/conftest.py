import functools
import os
import sys

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

from abelgauge.abelian_group import parse_group  # noqa: E402
from abelgauge.cell_complex import unit_box  # noqa: E402
from abelgauge.gibbs_measure import exact_distribution  # noqa: E402

settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

Z2, Z3, Z4 = parse_group("Z2"), parse_group("Z3"), parse_group("Z4")
UNIT = unit_box()


@functools.lru_cache(maxsize=None)
def dist(group: str, beta: float, box=None):
    return exact_distribution(box or UNIT, parse_group(group), beta)


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE: dict[int, str] = {}


def record(n: int, passed: bool, detail: str):
    ACCEPTANCE[n] = f"CRITERION {n:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    print(ACCEPTANCE[n])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])


@pytest.fixture
def z2():
    return Z2
