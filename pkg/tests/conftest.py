import math

import pytest

from shilnikov_lab.fields import FieldSpec
from shilnikov_lab.maps import calibrate
from shilnikov_lab.symbolic import ItineraryBuilder

BUILTIN = dict(sigma=-0.6, mu=8.0, u=1.0, eta0=0.05)
EPSILON, ETA, BETA = 0.1, 0.01, 0.25


@pytest.fixture(scope="session")
def builtin_spec():
    return FieldSpec.builtin(**BUILTIN)


@pytest.fixture(scope="session")
def builtin_cfg(builtin_spec):
    return calibrate(builtin_spec, EPSILON, ETA, BETA)


@pytest.fixture(scope="session")
def builtin_builder(builtin_cfg):
    return ItineraryBuilder(builtin_cfg)


@pytest.fixture(scope="session")
def linear_cfg():
    """Linear field with mu = u = 1, where the angle is omega + psi + ln(delta) in closed form."""
    return calibrate(FieldSpec.linear(-0.5, 1.0, 1.0), 0.1, 0.0, BETA)


def close_angle(a, b, tol):
    return abs(a - b) <= tol or abs(abs(a - b) - 2 * math.pi) <= tol
