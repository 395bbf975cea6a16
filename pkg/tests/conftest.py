import math

import numpy as np
import pytest
from hypothesis import settings

from riskplan.frenet import build_reference

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def circle_points(radius=50.0, n=32, start=0.0, sweep=math.pi / 2, center=(0.0, 0.0)):
    a = start + np.linspace(0.0, sweep, n)
    return [(center[0] + radius * math.cos(t), center[1] + radius * math.sin(t)) for t in a]


def s_curve_points(radius=40.0, n=24):
    # left turn about (0, R) then right turn about (2R, R), joined at (R, R)
    first = [(radius * math.sin(t), radius - radius * math.cos(t)) for t in np.linspace(0.0, math.pi / 2, n)]
    second = [(2 * radius - radius * math.cos(t), radius + radius * math.sin(t))
              for t in np.linspace(0.0, math.pi / 2, n)][1:]
    # second arc: centre (2R, R), starting at (R, R) heading north, turning right
    return first + second


@pytest.fixture(scope="session")
def straight_path():
    return build_reference([(10.0 * i, 0.0) for i in range(5)])


@pytest.fixture(scope="session")
def long_straight():
    return build_reference([(x, 0.0) for x in np.arange(-100.0, 601.0, 50.0)])


@pytest.fixture(scope="session")
def circle_path():
    return build_reference(circle_points())


@pytest.fixture(scope="session")
def s_path():
    return build_reference(s_curve_points())


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
