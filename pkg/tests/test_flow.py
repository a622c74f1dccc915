import math
import warnings

import numpy as np
import pytest

from g2flow import flow as F
from g2flow import grid as G
from g2flow import initial
from g2flow.errors import ConstraintDrift, NotIntegrable, ValidationError


@pytest.fixture(scope="module")
def cc_state():
    gr = G.Grid(16, (0,))
    fld, f = initial.conformally_coclosed(gr, np.random.default_rng(3), 0.01)
    return F.FlowState(fld, f)


def test_presets():
    het = F.preset("heterotic")
    assert (het.C, het.gamma, het.sigma) == (-4 / 3, 3.0, 42 / 144)
    mono = F.preset("monotone")
    assert (mono.C, mono.gamma, mono.sigma) == (-4 / 3, -2.0, -2.0)
    assert mono.is_monotone_regime and not het.is_monotone_regime
    assert mono.monotone_bound == pytest.approx(-7 * 30 / 144)
    with pytest.raises(ValidationError):
        F.preset("nope")


def test_wellposedness_gate():
    with pytest.raises(ValidationError) as err:
        F.FlowParams(C=0.0)
    assert err.value.field == "C"
    with warnings.catch_warnings(record=True) as seen:
        warnings.simplefilter("always")
        F.FlowParams(C=0.0, allow_illposed=True)
    assert any(issubclass(w.category, RuntimeWarning) for w in seen)
    for bad in (dict(dt_safety=0.0), dict(dt_safety=1.5), dict(scheme="rk2"),
                dict(t_end=-1.0), dict(snapshot_every=0), dict(gamma=math.nan)):
        with pytest.raises(ValidationError):
            F.FlowParams(**bad)


def test_flat_fixed_point():
    gr = G.Grid(8, (0,))
    st = F.FlowState(G.G2Field.flat(gr), np.full(gr.shape, 0.3))
    for name in ("heterotic", "monotone"):
        dphi, ddil = F.flow_rhs(st, F.preset(name))
        assert G.sup_norm(dphi) < 1e-10 and G.sup_norm(ddil) < 1e-10


def test_torsion_free_dilaton_is_a_heat_equation():
    gr = G.Grid(32, (0,))
    x = gr.coords[0]
    f = 0.1 * np.sin(x) + 0.05 * np.cos(2 * x)
    p = F.preset("heterotic")
    _, ddil = F.flow_rhs(F.FlowState(G.G2Field.flat(gr), f), p)
    # standalone spectral evaluation in the flat metric
    k = np.fft.fftfreq(32, 1.0 / 32)
    fx = np.fft.ifft(1j * k * np.fft.fft(f)).real
    fxx = np.fft.ifft(-(k ** 2) * np.fft.fft(f)).real
    oracle = np.exp(4 * f) * (fxx - p.gamma * fx ** 2)
    assert G.sup_norm(ddil - oracle) < 1e-12


def test_cross_route(cc_state):
    res, scale = F.cross_route_residual(cc_state, F.preset("heterotic"))
    assert res < 1e-8 and scale > 1e-3


def test_non_integrable_state_is_refused():
    gr = G.Grid(16, (0,))
    st = F.FlowState(initial.perturbed_field(gr, np.random.default_rng(0), 0.05),
                     np.zeros(gr.shape))
    with pytest.raises(NotIntegrable):
        F.flow_rhs(st, F.preset("heterotic"))


def test_flat_stays_fixed_over_many_steps():
    gr = G.Grid(8, (0,))
    st = F.FlowState(G.G2Field.flat(gr), np.zeros(gr.shape))
    p = F.preset("heterotic")
    s = st
    for _ in range(20):
        s = F.step(s, p)
    assert G.sup_norm(s.phi - st.phi) < 1e-12


def test_euler_rk4_gap_is_second_order(cc_state):
    p4 = F.preset("monotone")
    p1 = F.preset("monotone", scheme="euler")
    dt = F.stable_dt(cc_state, p4)
    gaps = []
    for h in (dt, dt / 2):
        a, b = F.step(cc_state, p4, h), F.step(cc_state, p1, h)
        gaps.append(G.sup_norm(a.phi - b.phi))
    assert 3.0 < gaps[0] / gaps[1] < 5.0


def test_run_lands_on_t_end_with_equal_steps(cc_state):
    p = F.preset("monotone", t_end=0.01, dt_safety=0.5)
    res = F.run(cc_state, p)
    assert res.final.t == pytest.approx(0.01, abs=1e-15)
    ts = [r["t"] for r in res.rows]
    assert np.allclose(np.diff(ts), ts[1] - ts[0])
    assert all(np.isfinite(r["dM_dt_fd"]) for r in res.rows)
    assert list(res.rows[0]) == list(F.COLUMNS)


def test_run_aborts_on_constraint_drift(cc_state):
    p = F.preset("monotone", t_end=0.01, dt_safety=0.5, abort_residual=1e-20)
    with pytest.raises(ConstraintDrift) as exc:
        F.run(cc_state, p)
    assert exc.value.partial.final is cc_state


def test_dilaton_functional_constant_on_fixed_point():
    gr = G.Grid(8, (0,))
    st = F.FlowState(G.G2Field.flat(gr), np.full(gr.shape, 0.1))
    res = F.run(st, F.preset("monotone", t_end=0.02, dt_safety=1.0))
    M = [r["M"] for r in res.rows]
    assert np.ptp(M) < 1e-9 * M[0]
    assert M[0] == pytest.approx(np.exp(-0.4) * (2 * np.pi) ** 7)


def test_to_coclosed_frame(cc_state):
    c = 0.2
    gr = cc_state.grid
    st = F.FlowState(G.G2Field.flat(gr), np.full(gr.shape, c))
    tilde, dil, res = F.to_coclosed_frame(st)
    assert np.allclose(tilde.phi, np.exp(-3 * c) * st.phi)
    assert np.allclose(tilde.metric.g, np.exp(-2 * c) * st.field.metric.g)
    assert res < 1e-14
    tilde, _, res = F.to_coclosed_frame(cc_state)
    assert np.allclose(tilde.psi, F.conformal_psi(cc_state))
    assert res < 1e-9


def test_fixed_point_residuals():
    gr = G.Grid(8, (0,))
    flat = F.FlowState(G.G2Field.flat(gr), np.zeros(gr.shape))
    assert max(F.fixed_point_residual(flat).as_tuple()) < 1e-10
    fld, f = initial.conformally_coclosed(G.Grid(16, (0,)), np.random.default_rng(3), 0.05)
    assert max(F.fixed_point_residual(F.FlowState(fld, f)).as_tuple()) > 1e-3


def test_dM_dt_formula_sign_in_monotone_regime(cc_state):
    p = F.preset("monotone")
    assert F.dM_dt_formula(cc_state, p) > 0
