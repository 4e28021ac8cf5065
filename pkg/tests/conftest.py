import numpy as np
import pytest

from heatbem.config import PRESET_VERTICES
from heatbem.geometry import make_polygon, mesh_polygon
from heatbem.trace_spaces import build_spaces

UNIT_SQUARE = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]


@pytest.fixture()
def square():
    return make_polygon(UNIT_SQUARE)


@pytest.fixture()
def quad():
    return make_polygon(PRESET_VERTICES["paper-quad"])


@pytest.fixture()
def square_spaces(square):
    """P0-P1 pair on the unit square with 8 panels"""
    return build_spaces(mesh_polygon(square, 0.5), 0)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240611)
