import numpy as np
import pytest

from symprox.measures import EmpiricalMeasure1D
from symprox.penalties import PenaltySpec

FIG1_PROFILE = ((1 / 3, 2.0), (2 / 3, 1.0), (1.0, 0.5))

_criteria = []


def record(number, passed, detail):
    """Remember one acceptance verdict and echo it immediately."""
    line = f"CRITERION {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    _criteria.append((number, line))
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_criteria):
        terminalreporter.write_line(line)


@pytest.fixture
def sparse_prior():
    return EmpiricalMeasure1D([-1.0, 0.0, 1.0], [0.05, 0.9, 0.05])


@pytest.fixture
def fig1_sowl():
    return PenaltySpec.sowl(profile=FIG1_PROFILE)


def all_variants():
    """One representative per penalty family and exponent of interest."""
    return {
        "lasso": PenaltySpec.lasso(0.5),
        "ridge": PenaltySpec.ridge(0.7),
        "slope": PenaltySpec.slope(profile=FIG1_PROFILE),
        "sowl": PenaltySpec.sowl(profile=FIG1_PROFILE),
        "l2_power_1": PenaltySpec.l2_power(1.0, scale=0.5),
        "l2_power_1.5": PenaltySpec.l2_power(1.5),
        "l2_power_2": PenaltySpec.l2_power(2.0),
        "l2_power_4": PenaltySpec.l2_power(4.0),
        "l1_power_1": PenaltySpec.l1_power(1.0, scale=0.5),
        "l1_power_2": PenaltySpec.l1_power(2.0),
        "l1_power_3": PenaltySpec.l1_power(3.0),
    }


def random_y(rng, p):
    """Random test vectors mixing scales so that every regime is visited."""
    scale = rng.choice([0.3, 1.0, 3.0])
    y = scale * rng.standard_normal(p)
    if p > 2 and rng.random() < 0.3:
        y[rng.integers(p)] = 0.0
    return y
