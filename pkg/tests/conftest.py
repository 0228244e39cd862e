import numpy as np
import pytest

from uwtransport.coefficients import ConstantField, constant_inflow, constant_velocity, inflow_data, permeability, reaction
from uwtransport.darcy import solve_pressure
from uwtransport.mesh import CHANNEL_GEOMETRY, FILTER_GEOMETRY, build_mesh
from uwtransport.reference_dg import solve_dg
from uwtransport.ultraweak import build_system, solve_ultraweak


class Pipeline:
    """Darcy + ultraweak solve of the catalytic filter on one grid."""

    def __init__(self, n, order, c0=0.5):
        self.mesh = build_mesh(n, n, FILTER_GEOMETRY)
        self.k = permeability(0.1, mesh=self.mesh)
        self.c = reaction(c0, mesh=self.mesh)
        self.g = inflow_data()
        self.pressure = solve_pressure(self.mesh, self.k)
        self.b = self.pressure.velocity
        self.system = build_system(self.mesh, order, self.b, self.c, g=self.g)
        self.sol = solve_ultraweak(self.system, tol=1e-10)
        self._dg = None

    @property
    def dg(self):
        if self._dg is None:
            self._dg = solve_dg(self.mesh, self.b, self.c, g=self.g)
        return self._dg


_cache = {}


def pipeline(n, order, c0=0.5):
    key = (n, order, c0)
    if key not in _cache:
        _cache[key] = Pipeline(n, order, c0)
    return _cache[key]


@pytest.fixture(scope="session")
def filter_q1_30():
    return pipeline(30, 1)


@pytest.fixture(scope="session")
def filter_q2_30():
    return pipeline(30, 2)


@pytest.fixture(scope="session")
def filter_q1_15():
    return pipeline(15, 1)


def one_d_problem(nx=1, order=1, g=1.0, c=0.0):
    """``u' + c u = 0`` on a strip one cell high, ``u(0) = g``."""
    mesh = build_mesh(nx, 1, CHANNEL_GEOMETRY)
    b = constant_velocity(1.0, 0.0)
    system = build_system(mesh, order, b, ConstantField(c), g=constant_inflow(g))
    return mesh, system


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
