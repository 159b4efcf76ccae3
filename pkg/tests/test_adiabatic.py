import numpy as np
import pytest

from lp_lab.adiabatic import AdiabaticPath, PathStepper, adiabatic_bound_check, evolve_adiabatic, time_derivative
from lp_lab.decomposition import loglog_slope
from lp_lab.errors import HorizonMismatch
from lp_lab.presets import sech2_well, translated_well


@pytest.fixture(scope="module")
def static_path(grid):
    V0 = sech2_well(grid, 1.5)
    return AdiabaticPath(grid, lambda t: V0, 0.5, static=True).compute_xi()


def test_static_stationary_state(static_path):
    eps, dt = 0.05, 1e-3
    run = evolve_adiabatic(static_path, eps, dt)
    E0, Phi0 = static_path.E[0], static_path.Phi[0]
    g = static_path.grid
    err = [g.l2(psi - np.exp(-1j * E0 * t / eps) * Phi0) for t, psi in zip(run.times, run.states)]
    assert max(err) < 1e-8


def test_static_report_zero(static_path):
    rep = adiabatic_bound_check(static_path, 0.05, 1e-3)
    assert not np.any(rep.rhs_l2)
    assert rep.lhs_l2.max() < 1e-8 and rep.proj_l2.max() < 1e-8


@pytest.mark.parametrize("eps", [0.05, 0.2])
def test_static_error_is_splitting_error(static_path, eps):
    """Phi is an eigenvector of H, not of the Strang propagator: the deviation
    is O((dt/eps)^2)."""
    g = static_path.grid
    E0, Phi0 = static_path.E[0], static_path.Phi[0]
    err = []
    for c in (0.04, 0.02, 0.01):
        run = evolve_adiabatic(static_path, eps, c * eps)
        err.append(max(g.l2(p - np.exp(-1j * E0 * t / eps) * Phi0) for t, p in zip(run.times, run.states)))
    assert np.allclose(np.array(err[:-1]) / err[1:], 4.0, rtol=0.05)


def test_time_derivative_exact_on_quadratics():
    t = 0.1 * np.arange(7)
    f = np.stack([1 + 2 * t - 3 * t**2, t**2], axis=1)
    d = np.stack([2 - 6 * t, 2 * t], axis=1)
    assert np.allclose(time_derivative(f, 0.1), d, atol=1e-12)


def test_path_eigendata(translated_path):
    p = translated_path
    g = p.grid
    assert np.allclose([g.l2(f) for f in p.Phi], 1.0, atol=1e-14)
    assert min(g.inner(a, b).real for a, b in zip(p.Phi[:-1], p.Phi[1:])) > 0.99
    # a translated well keeps its spectrum
    assert np.ptp(p.E) < 1e-9
    assert not np.any(p.beta)


def test_xi_orthogonal(translated_path):
    g = translated_path.grid
    ov = [abs(g.inner(f, x)) for f, x in zip(translated_path.Phi, translated_path.Xi)]
    assert max(ov) < 1e-10


def test_xi_matches_reference_chi(reference):
    """For a real ground state the corrector of the linear theory is chi."""
    ref = reference
    T = 0.1
    path = AdiabaticPath(ref.grid, lambda t: ref.interpolate("V", t), T, ref.dt_ref).compute_xi()
    n = len(path.times)
    assert np.allclose(path.times, ref.times[:n], atol=1e-15)
    assert np.max(np.abs(path.Phi - ref.Q[:n])) < 1e-9
    # interior nodes use the same centered differences
    assert np.max(np.abs(path.Xi[1:-1] - ref.chi[1 : n - 1])) < 1e-8


def test_eig_at_horizon(translated_path):
    with pytest.raises(HorizonMismatch):
        translated_path.eig_at(1.5)


@pytest.mark.parametrize("dt", [0.003, -0.003, 0.0])
def test_step_ratio(translated_path, dt):
    with pytest.raises(ValueError):
        PathStepper(translated_path, 0.05, dt)


def test_norm_preserved(adiabatic_reports):
    for rep in adiabatic_reports.values():
        assert np.max(np.abs(rep.norm - 1.0)) < 1e-12


def test_bound_holds_pointwise(adiabatic_reports):
    rep = adiabatic_reports[0.05]
    assert np.all(rep.lhs_l2 <= 1.1 * rep.rhs_l2 + 1e-14)
    assert np.all(rep.proj_l2 <= 1.1 * rep.rhs_l2 + 1e-14)
    assert rep.holds(0.1)
    assert np.all(rep.lhs_l2 >= 0) and np.all(rep.energy_lhs >= -1e-10)


def test_lhs_halves(adiabatic_reports):
    r = adiabatic_reports[0.025].lhs_l2.max() / adiabatic_reports[0.05].lhs_l2.max()
    assert 0.4 <= r <= 0.6


def test_energy_error_quadratic(adiabatic_reports):
    eps = sorted(adiabatic_reports)
    slope, _ = loglog_slope(eps, [adiabatic_reports[e].energy_lhs.max() for e in eps])
    assert 1.7 <= slope <= 2.3


def test_deflated_path_rejected(grid):
    V = translated_well(grid)
    p = AdiabaticPath(grid, V, 0.01, 1e-3, deflate=True)
    with pytest.raises(ValueError):
        adiabatic_bound_check(p, 0.05, 1e-3)


def test_report_csv(adiabatic_reports, tmp_path):
    lines = adiabatic_reports[0.1].write_csv(tmp_path / "a.csv").read_text().splitlines()
    assert lines[0] == "t,lhs_l2,rhs_l2,energy_lhs,ratio"
    assert len(lines) == len(adiabatic_reports[0.1].t) + 1
