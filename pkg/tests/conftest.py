import math

import numpy as np
import pytest

from ife2d import build_mesh, classify_elements
from ife2d.problems import DEFAULT_R0, CircleProblem

R0 = DEFAULT_R0


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def circle_problem():
    return CircleProblem(1.0, 10000.0)


@pytest.fixture(scope="session")
def q1_cls_40(circle_problem):
    mesh = build_mesh((-1, 1, -1, 1), 40, "rectangular")
    return classify_elements(mesh, circle_problem.curve, "q1")


def classification(tag, n, curve=None):
    from ife2d.local_fe import PolySpaceTag

    tag = PolySpaceTag.parse(tag)
    mesh = build_mesh((-1, 1, -1, 1), n, tag.kind)
    return classify_elements(mesh, curve or CircleProblem(1.0, 1.0).curve, tag)


def circle_segment_area(r, d):
    """Area of the cap of a radius-r disc beyond a chord at distance d from the centre."""
    return r * r * math.acos(d / r) - d * math.sqrt(r * r - d * d)


def pytest_terminal_summary(terminalreporter):
    try:
        import test_acceptance
    except ImportError:
        return
    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
