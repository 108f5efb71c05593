import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cylch.domain import GridSpec, ScalarField

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def unit_square(n=32):
    """Grid whose interior is the unit square, x1 shifted by 1/2."""
    return GridSpec(L=0.5, nx=n, ny=n)


def sine_mode(grid, kx=1, ky=1):
    x1, y = grid.coords()
    return ScalarField(grid, np.sin(kx * math.pi * (x1 + grid.L) / (2 * grid.L)) * np.sin(ky * math.pi * y))


@pytest.fixture
def square():
    return unit_square()


@pytest.fixture
def small_strip():
    return GridSpec(L=4.0, nx=32, ny=8)
