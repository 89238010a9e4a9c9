import warnings

import numpy as np
import pytest

from landau.grid import Grid
from landau.kernels import Potential
from landau.solver import BiMaxwellian, Maxwellian, SolverConfig, run

warnings.filterwarnings("ignore", message="coefficient_fields called with negative parts")


BIMAX = BiMaxwellian(rho1=0.5, u1=(1.2, 0.0, 0.0), T1=1.0,
                     rho2=0.5, u2=(-1.2, 0.0, 0.0), T2=0.7)


@pytest.fixture(scope="session")
def grid12():
    return Grid(d=3, n=12, extent=6.0)


@pytest.fixture(scope="session")
def grid16():
    return Grid(d=3, n=16, extent=8.0)


@pytest.fixture(scope="session")
def short_traj():
    """Small bimaxwellian trajectory shared by the module tests."""
    cfg = SolverConfig(pot=Potential(-1.0), grid=Grid(d=3, n=12, extent=6.0),
                       t_end=0.1, initial_condition=BIMAX,
                       snapshot_times=tuple(np.linspace(0.01, 0.1, 6)))
    return run(cfg)


@pytest.fixture(scope="session")
def maxwellian_traj():
    cfg = SolverConfig(pot=Potential(-1.0), grid=Grid(d=3, n=12, extent=6.0),
                       t_end=0.1, initial_condition=Maxwellian(),
                       snapshot_times=tuple(np.linspace(0.01, 0.1, 6)))
    return run(cfg)
