import logging

import numpy as np
import pytest

from sdetransform.examples import build_1d_jump, build_dividend, build_no_jump, build_unit_circle


@pytest.fixture(autouse=True)
def _quiet_radius_warnings(caplog):
    # the shipped radii deliberately exceed the conservative bound
    caplog.set_level(logging.ERROR, logger="sdetransform.transform")


@pytest.fixture(scope="session")
def circle():
    return build_unit_circle()


@pytest.fixture(scope="session")
def circle_transform(circle):
    return circle.transform()


@pytest.fixture(scope="session")
def jump1d():
    return build_1d_jump()


@pytest.fixture(scope="session")
def jump1d_transform(jump1d):
    return jump1d.transform()


@pytest.fixture(scope="session")
def dividend():
    return build_dividend()


@pytest.fixture(scope="session")
def dividend_transform(dividend):
    return dividend.transform()


@pytest.fixture(scope="session")
def nojump():
    return build_no_jump()


def tube_points(surface, c, count, rng, fraction=0.99):
    """Points ``xi + t n`` with ``|t| < fraction * c`` around sampled surface points."""
    xi = surface.sample(count, rng)
    reps = max(1, -(-count // xi.shape[0]))
    xi = np.repeat(xi, reps, axis=0)[:count]
    n = surface.orientation * surface._canonical_normal(xi)
    t = rng.uniform(-fraction * c, fraction * c, xi.shape[0])
    return xi + t[:, None] * n


ACCEPTANCE_LINES = []


def record_criterion(number, passed, detail):
    """Remember one acceptance verdict; all of them are printed at the end of the run."""
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
