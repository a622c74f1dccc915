import numpy as np
import pytest

from g2flow import forms
from g2flow import grid as G


def test_grid_validation():
    with pytest.raises(ValueError):
        G.Grid(16, (0, 0))
    with pytest.raises(ValueError):
        G.Grid(16, (7,))
    assert G.Grid(16, (1, 3)).shape == (16, 16)


def test_spectral_derivative_exact_on_trig():
    gr = G.Grid(32, (0, 2))
    x, z = gr.coords[0], gr.coords[2]
    f = np.sin(x) * np.cos(2 * z)
    assert np.allclose(G.partial_derivative(f, 0, gr), np.cos(x) * np.cos(2 * z), atol=1e-12)
    assert np.allclose(G.partial_derivative(f, 2, gr), -2 * np.sin(x) * np.sin(2 * z), atol=1e-12)
    assert not np.any(G.partial_derivative(f, 1, gr))


def test_d_squared_vanishes(rng):
    gr = G.Grid(16, (0, 2))
    x, z = gr.coords[0], gr.coords[2]
    a = (rng.normal(size=35) * np.sin(x + z)[..., None]
         + np.cos(2 * x)[..., None] * rng.normal(size=35))
    dd = G.exterior_derivative(G.exterior_derivative(a, 3, gr), 4, gr)
    assert G.sup_norm(dd) < 1e-12


def conformal_metric(gr):
    x, z = gr.coords[0], gr.coords[2]
    f = 0.2 * np.sin(x) + 0.1 * np.cos(z) * np.sin(x)
    return f, forms.Metric.from_matrix(np.exp(2 * f)[..., None, None] * np.eye(7))


def test_ricci_of_conformally_flat_metric():
    gr = G.Grid(32, (0, 2))
    f, m = conformal_metric(gr)
    Ric = G.ricci_from_riemann(G.riemann(m, G.christoffels(m, gr), gr), m)
    df = G.gradient(f, gr)
    hf = G.gradient(df, gr)
    lap = np.einsum("...ii", hf)
    dd = np.einsum("...i,...i", df, df)
    oracle = (-5 * (hf - np.einsum("...i,...j->...ij", df, df))
              - (lap + 5 * dd)[..., None, None] * np.eye(7))
    assert G.sup_norm(Ric - oracle) < 1e-10


def test_riemann_symmetries():
    gr = G.Grid(32, (0, 2))
    _, m = conformal_metric(gr)
    Rm = G.riemann(m, G.christoffels(m, gr), gr)
    assert G.sup_norm(Rm + np.swapaxes(Rm, -1, -2)) < 1e-10
    assert G.sup_norm(Rm - np.einsum("...rsmn->...mnrs", Rm)) < 1e-10


def test_laplacian_is_minus_codiff_d():
    gr = G.Grid(32, (0, 2))
    f, m = conformal_metric(gr)
    lap = G.laplacian(f, m, G.christoffels(m, gr), gr)
    cd = G.codifferential(G.exterior_derivative(f[..., None], 0, gr), 1, m, gr)[..., 0]
    assert G.sup_norm(lap + cd) < 1e-10


def test_codifferential_is_adjoint(rng):
    gr = G.Grid(16, (0, 2))
    _, m = conformal_metric(gr)
    x, z = gr.coords[0], gr.coords[2]
    a = (rng.normal(size=35) * np.sin(x + z)[..., None]
         + np.cos(2 * x)[..., None] * rng.normal(size=35))
    b = rng.normal(size=21) * np.cos(x - z)[..., None]
    lhs = G.integrate(forms.inner(G.exterior_derivative(b, 2, gr), a, 3, m), m.vol, gr)
    rhs = G.integrate(forms.inner(b, G.codifferential(a, 3, m, gr), 2, m), m.vol, gr)
    assert abs(lhs - rhs) < 1e-9 * (1 + abs(lhs))


def test_integrate_volume_of_torus():
    gr = G.Grid(8, (0,))
    m = forms.Metric.from_matrix(np.broadcast_to(np.eye(7), gr.shape + (7, 7)))
    assert np.isclose(G.integrate(np.ones(gr.shape), m.vol, gr), (2 * np.pi) ** 7)


def test_g2field_rejects_bad_input():
    gr = G.Grid(8, (0,))
    with pytest.raises(ValueError):
        G.G2Field.from_phi(np.zeros((4, 35)), gr)
    phi = np.broadcast_to(G.algebra.standard_phi0(), gr.shape + (35,)).copy()
    phi[0, 0] = np.nan
    with pytest.raises(G.NonFinite):
        G.G2Field.from_phi(phi, gr)


def flat_metric(gr):
    return forms.Metric.from_matrix(np.broadcast_to(np.eye(7), gr.shape + (7, 7)))


def test_d_of_sin_dx2():
    gr = G.Grid(32, (0,))
    x = gr.coords[0]
    a = np.zeros(gr.shape + (7,))
    a[..., 1] = np.sin(x)
    da = G.exterior_derivative(a, 1, gr)
    expect = np.cos(x)[..., None] * forms.unit(7, 2, (0, 1))
    assert G.sup_norm(da - expect) < 1e-12
    assert not np.any(G.exterior_derivative(np.ones(gr.shape + (21,)), 2, gr))


def test_codifferential_of_gradient_flat():
    gr = G.Grid(32, (0,))
    x = gr.coords[0]
    df = G.exterior_derivative(np.sin(x)[..., None], 0, gr)
    assert G.sup_norm(G.codifferential(df, 1, flat_metric(gr), gr)[..., 0] - np.sin(x)) < 1e-12
    const = np.ones(gr.shape + (7,))
    assert G.sup_norm(G.codifferential(const, 1, flat_metric(gr), gr)) < 1e-14


def test_integrate_scalings():
    gr = G.Grid(32, (0,))
    x = gr.coords[0]
    assert abs(G.integrate(np.sin(x), flat_metric(gr).vol, gr)) < 1e-12
    c = 0.3
    m = forms.Metric.from_matrix(np.exp(2 * c) * np.broadcast_to(np.eye(7), gr.shape + (7, 7)))
    assert np.isclose(G.integrate(np.ones(gr.shape), m.vol, gr), np.exp(7 * c) * (2 * np.pi) ** 7)


def test_christoffels_conformal_closed_form():
    gr = G.Grid(32, (0,))
    x = gr.coords[0]
    f = 0.2 * np.sin(x) + 0.05 * np.cos(2 * x)
    m = forms.Metric.from_matrix(np.exp(2 * f)[..., None, None] * np.eye(7))
    gam = G.christoffels(m, gr)
    df = G.gradient(f, gr)
    I = np.eye(7)
    oracle = (np.einsum("ki,...j->...kij", I, df) + np.einsum("kj,...i->...kij", I, df)
              - np.einsum("ij,...k->...kij", I, df))
    assert G.sup_norm(gam - oracle) < 1e-10
    assert np.array_equal(gam, np.swapaxes(gam, -1, -2))
    assert G.sup_norm(G.christoffels(flat_metric(gr), gr)) < 1e-12
