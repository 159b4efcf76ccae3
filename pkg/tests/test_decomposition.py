import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lp_lab.decomposition import (
    Decomposer,
    DecompositionSeries,
    alpha_rate_envelope,
    alpha_residual_check,
    control_functions,
    decompose,
    loglog_slope,
    rate_envelope,
    run_decomposition,
    scaling_fit,
    sup_oversampled,
)
from lp_lab.dynamics import LPParams, PolaronState
from lp_lab.errors import HorizonMismatch, InsufficientSamples
from lp_lab.reference import chi_and_rate, march_reference

EPS = (0.1, 0.05, 0.025)


@pytest.fixture(params=EPS, ids=lambda e: f"eps={e}")
def series(request, sweep):
    return sweep[request.param][1]


def test_initial_stamp(series, reference):
    eps = series.epsilon
    assert series.t[0] == 0.0
    assert abs(series.alpha[0] - 1) < 1e-12
    assert series.nR_l2[0] < 1e-12
    chi0 = reference.grid.l2(reference.chi[0])
    assert series.chi0_l2 == pytest.approx(chi0, rel=1e-14)
    assert abs(series.nRt_l2[0] - eps * chi0) < 1e-10


def test_initial_corrector_exact(pt, reference):
    eps = 0.05
    dec = Decomposer(reference, eps, T=0.0)
    dec(pt.state())
    s = dec.series()
    assert abs(s.nRt_l2[0] - eps * reference.grid.l2(reference.chi[0])) < 1e-10


def test_mass_identity(series):
    rhs = np.sqrt(np.clip(1 - np.abs(series.alpha) ** 2, 0, None))
    assert np.max(np.abs(series.nR_l2 - rhs)) < 1e-8


def test_orthogonality(series):
    assert series.q_r_overlap.max() < 1e-10
    assert series.q_rt_overlap.max() < 1e-9


def test_R_order_eps(sweep):
    s = sweep[0.05][1]
    assert 0.1 <= s.nR_l2.max() / 0.05 <= 10


def test_controls_nondecreasing(series):
    for M in series.control():
        assert np.all(np.diff(M) >= 0)


def test_control_weights_vanish_at_zero():
    M1, M2, M3 = control_functions([0.0], 0.1, [1.0], [5.0], [7.0])
    assert M1[0] == 10.0 and M2[0] == 0.0 and M3[0] == 0.0


def test_control_weights():
    eps = 0.01
    t = np.array([0.0025, 0.04, 0.5])
    one = np.ones(3)
    _, M2, M3 = control_functions(t, eps, one, one, one)
    # M2 weight: 1/max(1, (eps/t)^(1/2)); M3 weight: 1/(eps + min((eps/t)^(1/2), (eps/t)^(3/2)))
    w2 = [0.5, 1.0, 1.0]
    w3 = [1 / (eps + 2.0), 1 / (eps + 0.125), 1 / (eps + 0.02**1.5)]
    assert np.allclose(M2, np.maximum.accumulate(np.array(w2) / eps), rtol=1e-14)
    assert np.allclose(M3, np.maximum.accumulate(np.array(w3) / eps), rtol=1e-14)


def test_field_derivative_two_ways(pt, reference, sweep):
    """The finite-difference and interpolated dW/dt agree up to O(dt^2) plus a
    dt-independent floor from the reference interpolation."""
    m = {0.02: np.nanmax(sweep[0.1][1].dW_mismatch)}
    for c in (0.04, 0.01):
        m[c] = np.nanmax(run_decomposition(pt.state(), reference, LPParams.from_ratio(0.1, c), 1.0)[1].dW_mismatch)
    ratio = (m[0.04] - m[0.02]) / (m[0.02] - m[0.01])
    assert 3.0 <= ratio <= 5.0
    assert m[0.02] < 1e-6


@pytest.fixture(scope="module")
def frozen_setup(pt):
    g = pt.grid
    ref = march_reference(g, pt.phi0, pt.phi_dot0, 1.0, 1e-3, 0.2, eigensolver=lambda V, q: (pt.E0, pt.psi0, 0.0))
    chi_and_rate(ref)
    eps = 0.05
    states = [
        PolaronState(g, t, np.exp(-1j * pt.E0 * t / eps) * pt.psi0, ref.V[n], ref.V_dot[n])
        for n, t in enumerate(ref.times)
    ]
    return ref, decompose(states, ref, eps)


def test_frozen_stub_alpha_equation(frozen_setup):
    _, s = frozen_setup
    assert np.max(np.abs(s.alpha - 1)) < 1e-12
    assert np.max(np.abs(s.alpha_rhs)) < 1e-12
    chk = alpha_residual_check(s)
    assert chk["sup_dalpha"] < 1e-9 and chk["sup_residual"] < 1e-9


def test_frozen_stub_envelope_zero(frozen_setup):
    _, s = frozen_setup
    v = alpha_rate_envelope(s.t, np.zeros_like(s.t), s.epsilon)
    assert v.C == 0.0
    assert alpha_rate_envelope(s.t, s.dalpha2, s.epsilon).C < 1e-6


def test_alpha_residual_budget(sweep):
    chk = alpha_residual_check(sweep[0.05][1])
    assert chk["sup_residual"] <= 0.05 * chk["sup_dalpha"]


def test_alpha_residual_second_order(pt, reference, sweep):
    r = [alpha_residual_check(sweep[0.1][1])["sup_residual"]]
    for c in (0.01, 0.005):
        r.append(alpha_residual_check(run_decomposition(pt.state(), reference, LPParams.from_ratio(0.1, c), 1.0)[1])["sup_residual"])
    orders = np.log2(np.array(r[:-1]) / r[1:])
    assert np.all((orders > 1.8) & (orders < 2.2)), orders


def test_alpha_residual_needs_samples():
    s = DecompositionSeries(0.1, 1.0, *([np.zeros(2)] * 14))
    with pytest.raises(InsufficientSamples):
        alpha_residual_check(s)


def test_envelope_oracle():
    eps = 0.05
    t = np.linspace(0, 1, 2001)
    v = alpha_rate_envelope(t, rate_envelope(t, eps), eps)
    assert abs(v.C - 1) < 1e-6
    assert abs(v.C_early - 1) < 1e-6 and abs(v.C_middle - 1) < 1e-6 and abs(v.C_late - 1) < 1e-6


def test_envelope_regimes():
    eps = 0.001
    e = rate_envelope([0.0005, 0.004, 0.5], eps)
    assert np.allclose(e, [eps, eps * 0.25**1.5, eps**2], rtol=1e-14)


def test_envelope_constant_stable(sweep):
    C = [alpha_rate_envelope(sweep[e][1].t, sweep[e][1].dalpha2, e).C for e in EPS]
    assert max(C) / min(C) <= 3


@settings(max_examples=30, deadline=None)
@given(st.floats(-3, 3), st.floats(0.01, 100))
def test_slope_oracle(p, c):
    eps = np.array([0.1, 0.05, 0.025, 0.0125])
    slope, icpt = loglog_slope(eps, c * eps**p)
    assert abs(slope - p) < 1e-10
    assert abs(icpt - np.log(c)) < 1e-9


class _Synthetic:
    def __init__(self, eps, p):
        self.epsilon = eps
        self._v = 2.0 * eps**p

    def sup(self, name):
        return self._v


def test_scaling_fit_oracle():
    reports = scaling_fit([_Synthetic(e, 2.0) for e in EPS], {"x": ("x", (1.7, 2.3))})
    assert abs(reports[0].slope - 2.0) < 1e-10 and reports[0].passed


def test_scaling_fit_needs_three():
    with pytest.raises(InsufficientSamples):
        scaling_fit([_Synthetic(e, 1.0) for e in EPS[:2]])


def test_scaling_targets_order(sweep):
    names = [r.observable for r in scaling_fit([s for _, s in sweep.values()])]
    assert names == ["psi_error", "field_error", "W_l2", "dW_l2", "one_minus_alpha2", "M1", "M2", "M3"]


def test_horizon_mismatch(reference):
    with pytest.raises(HorizonMismatch):
        Decomposer(reference, 0.1, T=1.5)


def test_requires_chi(pt):
    ref = march_reference(pt.grid, pt.phi0, pt.phi_dot0, 1.0, 1e-3, 0.01)
    with pytest.raises(ValueError):
        Decomposer(ref, 0.1)


def test_series_csv(sweep, tmp_path):
    s = sweep[0.1][1]
    lines = s.write_csv(tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "t,re_alpha,im_alpha,nR_l2,nRt_l2,nRt_linf,nRt_winf,nW_l2,dW_l2,dalpha2,M1,M2,M3"
    assert len(lines) == len(s.t) + 1


def test_oversampling(grid):
    f = np.cos(3 * grid.x) * np.exp(-(grid.x**2) / 2)
    assert sup_oversampled(grid, f, 4) >= sup_oversampled(grid, f) - 1e-15
    assert sup_oversampled(grid, f, 4) == pytest.approx(1.0, abs=1e-6)
