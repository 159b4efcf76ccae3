"""Shared fixtures.  The reference trajectory and the epsilon sweep are the
expensive pieces, so they are built once per session."""
import numpy as np
import pytest

from lp_lab.adiabatic import AdiabaticPath, adiabatic_bound_check
from lp_lab.decomposition import run_decomposition
from lp_lab.dynamics import LPParams
from lp_lab.grid import Grid
from lp_lab.dispersive import evolve_projected
from lp_lab.presets import bump, poschl_teller, sech2_well, translated_well
from lp_lab.reference import chi_and_rate, march_reference

SWEEP_EPS = (0.1, 0.05, 0.025)


@pytest.fixture(scope="session")
def grid():
    return Grid(40.0, 4096)


@pytest.fixture(scope="session")
def small_grid():
    return Grid(20.0, 512)


@pytest.fixture(scope="session")
def pt(grid):
    return poschl_teller(grid)


@pytest.fixture(scope="session")
def reference(pt):
    ref = march_reference(pt.grid, pt.phi0, pt.phi_dot0, 1.0, 1e-3, 1.0)
    return chi_and_rate(ref)


@pytest.fixture(scope="session")
def sweep(pt, reference):
    """{eps: (LPRun, DecompositionSeries)} at c_psi = 0.02 over t in [0, 1]."""
    out = {}
    for eps in SWEEP_EPS:
        out[eps] = run_decomposition(pt.state(), reference, LPParams.from_ratio(eps, 0.02), 1.0)
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def translated_path(grid):
    return AdiabaticPath(grid, translated_well(grid, 1.5, 0.3), 1.0, 1e-3).compute_xi()


@pytest.fixture(scope="session")
def adiabatic_reports(translated_path):
    return {eps: adiabatic_bound_check(translated_path, eps, 0.02 * eps) for eps in SWEEP_EPS}


@pytest.fixture(scope="session")
def wide_grid():
    return Grid(320.0, 8192)


@pytest.fixture(scope="session")
def dispersive_run(wide_grid):
    """Static -1.5 sech^2 well, psi_0 = P_c(bump), eps = 0.02, t in [0, 1]."""
    V0 = sech2_well(wide_grid, 1.5)
    path = AdiabaticPath(wide_grid, lambda t: V0, 1.0, deflate=True, static=True)
    return evolve_projected(path, bump(wide_grid), 0.02, 0.02 * 0.02, 1.0, store_every=0)
