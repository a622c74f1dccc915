import itertools

import numpy as np
import pytest
from scipy.linalg import null_space

from g2flow import algebra, forms
from g2flow.errors import NotPositive

PHI0 = algebra.standard_phi0()


def brute_psi0():
    """*phi0 by an explicit 7-index epsilon contraction."""
    phi = forms.expand(PHI0, 3)
    eps = np.zeros((7,) * 7)
    for p in itertools.permutations(range(7)):
        eps[p] = forms.perm_sign(p)
    return forms.compress(np.einsum("abcdefg,efg->abcd", eps, phi) / 6.0, 4)


def test_phi0_components():
    assert algebra.component(PHI0, (1, 2, 7)) == 1.0
    assert algebra.component(PHI0, (2, 4, 5)) == -1.0
    assert algebra.component(PHI0, (2, 1, 7)) == -1.0
    assert np.count_nonzero(PHI0) == 7
    assert np.count_nonzero(forms.expand(PHI0, 3)) == 42


def test_metric_of_phi0():
    pt = algebra.PointG2.from_phi(PHI0)
    assert np.allclose(pt.g, np.eye(7), atol=1e-14)
    assert np.isclose(pt.vol, 1.0)


def test_metric_scales_conformally():
    f = 0.37
    pt = algebra.PointG2.from_phi(np.exp(3 * f) * PHI0)
    assert np.allclose(pt.g, np.exp(2 * f) * np.eye(7))
    assert np.isclose(pt.vol, np.exp(7 * f))


def test_psi0_matches_brute_force():
    pt = algebra.PointG2.from_phi(PHI0)
    assert np.allclose(pt.psi, brute_psi0(), atol=1e-14)
    assert algebra.component(pt.psi, (3, 4, 5, 6)) == pytest.approx(1.0)


def test_pullback_metric_is_utu(rng):
    phis, u = algebra.random_positive_phis(rng, 50)
    pt = algebra.PointG2.from_phi(phis)
    assert np.allclose(pt.g, np.einsum("nai,naj->nij", u, u), atol=1e-12)


def test_random_gl_condition_bound(rng):
    u = algebra.random_gl(rng, 200)
    assert np.all(np.linalg.det(u) > 0)
    assert np.linalg.cond(u).max() <= 4.0 + 1e-9


def test_star_involution_and_volume(rng):
    pt = algebra.PointG2.from_phi(algebra.random_positive_phis(rng, 100)[0])
    for k in range(8):
        a = rng.standard_normal((100, forms.ncomp(7, k)))
        assert np.allclose(pt.star(pt.star(a, k), 7 - k), a)
    one = np.ones((100, 1))
    assert np.allclose(pt.star(one, 0)[..., 0], pt.vol)
    assert np.allclose(pt.star(pt.vol[:, None], 7)[..., 0], 1.0)


def test_positive_mask():
    assert algebra.positive_mask(PHI0)
    assert not algebra.positive_mask(-PHI0)
    assert not algebra.positive_mask(np.zeros(35))
    with pytest.raises(NotPositive):
        algebra.PointG2.from_phi(-PHI0)


def test_identity_diamond():
    pt = algebra.PointG2.from_phi(PHI0)
    I = np.eye(7)
    assert np.allclose(algebra.diamond(I, "phi", pt), 3 * PHI0)
    assert np.allclose(algebra.diamond(I, "psi", pt), 4 * pt.psi)


def p_basis(pt):
    """Eigenspaces of P on 2-forms at a single point (dense oracle)."""
    M = np.zeros((21, 21))
    for i in range(21):
        e = np.zeros(21)
        e[i] = 1.0
        M[:, i] = algebra.matrix_two_form(algebra.p_operator(algebra.two_form_matrix(e), pt))
    return null_space(M - 4 * np.eye(21)), null_space(M + 2 * np.eye(21))


def test_p_eigenspaces_and_decomposition(rng):
    pt = algebra.PointG2.from_phi(PHI0)
    V7, V14 = p_basis(pt)
    assert V7.shape[1] == 7 and V14.shape[1] == 14
    beta = rng.standard_normal(21)
    b7, b14 = algebra.decompose_two_form(beta, pt)
    assert np.allclose(b7, V7 @ (V7.T @ beta))
    assert np.allclose(b14, V14 @ (V14.T @ beta))
    X = rng.standard_normal(7)
    xphi = algebra.contract_phi(X, pt)
    assert np.allclose(algebra.decompose_two_form(xphi, pt)[1], 0, atol=1e-14)
    z7, z14 = algebra.decompose_two_form(np.zeros(21), pt)
    assert not np.any(z7) and not np.any(z14)


def test_p_norm_identity(rng):
    pt = algebra.PointG2.from_phi(algebra.random_positive_phis(rng, 100)[0])
    A, B = rng.standard_normal((2, 100, 7, 7))
    ip = pt.endo_inner
    PA, PB = algebra.p_operator(A, pt), algebra.p_operator(B, pt)
    rhs = 4 * ip(A, B) - 4 * ip(A, np.swapaxes(B, 1, 2)) + 2 * ip(A, PB)
    assert np.allclose(ip(PA, PB), rhs, rtol=1e-12, atol=1e-10)


def test_decompose_endo(rng):
    pt = algebra.PointG2.from_phi(algebra.random_positive_phis(rng, 20)[0])
    parts = algebra.decompose_endo(pt.g, pt)
    assert np.allclose(parts.A1, pt.g)
    for piece in (parts.A27, parts.A7, parts.A14):
        assert np.allclose(piece, 0, atol=1e-12)
    A = rng.standard_normal((20, 7, 7))
    parts = algebra.decompose_endo(A, pt)
    assert np.allclose(parts.A1 + parts.A27 + parts.A7 + parts.A14, A, atol=1e-12)
    again = algebra.decompose_endo(parts.A14, pt)
    assert np.allclose(again.A14, parts.A14, atol=1e-12)
    assert np.allclose(again.A7, 0, atol=1e-12)


def test_decompose_four_form(rng):
    pt = algebra.PointG2.from_phi(PHI0)
    parts = algebra.decompose_four_form(pt.psi, pt)
    assert np.isclose(parts.a, 1.0)
    assert np.allclose(parts.X, 0) and np.allclose(parts.S, 0)
    e1 = forms.unit(7, 1, (0,))
    g4 = forms.wedge(e1, 1, PHI0, 3)
    assert np.isclose(forms.inner(g4, g4, 4, pt.metric), 4.0)
    parts = algebra.decompose_four_form(g4, pt)
    assert np.allclose(parts.reassemble(pt), g4)
    S = rng.standard_normal((7, 7))
    S = S + S.T
    S -= np.trace(S) / 7 * np.eye(7)
    parts = algebra.decompose_four_form(algebra.diamond(S, "psi", pt), pt)
    assert np.isclose(parts.a, 0, atol=1e-12) and np.allclose(parts.X, 0, atol=1e-12)
    # Gamma = a psi + X∧phi + *(S⋄phi) and *(S⋄phi) = -S⋄psi here
    assert np.allclose(parts.S, -S, atol=1e-12)


def test_phi_from_psi_roundtrip(rng):
    phis, _ = algebra.random_positive_phis(rng, 200)
    psi = algebra.PointG2.from_phi(phis).psi
    assert np.allclose(algebra.phi_from_psi_closed(psi), phis, atol=1e-12)
    assert np.allclose(algebra.phi_from_psi(psi), phis, atol=1e-12)
    near = phis + 1e-3 * rng.standard_normal(phis.shape)
    assert np.allclose(algebra.phi_from_psi(psi, near), phis, atol=1e-12)


def test_phi_from_psi_rejects_negative():
    with pytest.raises(NotPositive):
        algebra.phi_from_psi(-algebra.PointG2.from_phi(PHI0).psi[None])


def test_psi_and_metric_variation(rng):
    pt = algebra.PointG2.from_phi(algebra.random_positive_phis(rng, 30)[0])
    eta = rng.standard_normal((30, 35))
    h = 1e-6
    plus = algebra.PointG2.from_phi(pt.phi + h * eta)
    minus = algebra.PointG2.from_phi(pt.phi - h * eta)
    assert np.allclose((plus.psi - minus.psi) / (2 * h), algebra.psi_variation(eta, pt), atol=1e-6)
    assert np.allclose((plus.g - minus.g) / (2 * h), algebra.metric_variation(eta, pt), atol=1e-6)
    S, X = algebra.split_three_form(eta, pt)
    assert np.allclose(algebra.diamond(S, "phi", pt) + algebra.contract_psi(X, pt), eta)
