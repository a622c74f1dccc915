"""Point-local G2 linear algebra.

Everything here acts on batches: a 3-form is an array of shape (..., 35),
a metric (..., 7, 7), an endomorphism A_ij (..., 7, 7) with both indices
down. Orientation is e^1...e^7, for which the model form phi0 has
psi0 = *phi0 with psi0_{3456} = +1 and metric the identity.
"""

from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np

from . import forms
from .errors import NotPositive

N = 7

# (i, j, k) one-based, sign
PHI0_TERMS = (
    ((1, 2, 7), 1.0), ((3, 4, 7), 1.0), ((5, 6, 7), 1.0), ((1, 3, 5), 1.0),
    ((1, 4, 6), -1.0), ((2, 3, 6), -1.0), ((2, 4, 5), -1.0),
)


def standard_phi0():
    phi = np.zeros(forms.ncomp(N, 3))
    for idx, s in PHI0_TERMS:
        phi += s * forms.unit(N, 3, tuple(i - 1 for i in idx))
    return phi


def component(alpha, idx, k=None):
    """Read a component by one-based index tuple, e.g. component(phi, (1,2,7))."""
    k = len(idx) if k is None else k
    zero = tuple(i - 1 for i in idx)
    s = forms.perm_sign(zero)
    if not s:
        return np.zeros(np.shape(alpha)[:-1])
    return s * np.asarray(alpha)[..., forms.slot(N, k)[tuple(sorted(zero))]]


def hitchin_B(phi):
    """B_ij with (e_i⌟phi)∧(e_j⌟phi)∧phi = 6 B_ij e^{1..7}."""
    phi = np.asarray(phi, dtype=float)
    contracted = forms.interior(np.eye(N), phi[..., None, :], 3)
    ww = forms.wedge(contracted[..., :, None, :], 2,
                     contracted[..., None, :, :], 2)
    top = forms.wedge(ww, 4, phi[..., None, None, :], 3)
    return top[..., 0] / 6.0


def metric_from_phi(phi, check=True):
    """Metric and volume density of a positive 3-form.

    Raises NotPositive when B is not positive definite.
    """
    B = hitchin_B(phi)
    B = 0.5 * (B + np.swapaxes(B, -1, -2))
    detB = np.linalg.det(B)
    if check:
        bad = ~(detB > 0)
        if not bad.any():
            # det > 0 also admits an even number of negative directions
            bad = np.linalg.eigvalsh(B)[..., 0] <= 0
        if bad.any():
            raise NotPositive(f"{int(np.sum(bad))} point(s) with indefinite B")
    scale = detB ** (-1.0 / 9.0)
    g = B * scale[..., None, None]
    metric = forms.Metric.from_matrix(g)
    vol = detB ** (1.0 / 9.0)
    return forms.Metric(metric.g, metric.ginv, vol), vol


@dataclass(eq=False)
class PointG2:
    """A G2-structure at a batch of points: phi, its metric and psi."""

    phi: np.ndarray
    metric: forms.Metric
    psi: np.ndarray

    @classmethod
    def from_phi(cls, phi, check=True):
        phi = np.asarray(phi, dtype=float)
        metric, _ = metric_from_phi(phi, check=check)
        psi = forms.hodge_star(phi, 3, metric)
        return cls(phi, metric, psi)

    @property
    def g(self):
        return self.metric.g

    @property
    def ginv(self):
        return self.metric.ginv

    @property
    def vol(self):
        return self.metric.vol

    @property
    def batch_shape(self):
        return self.phi.shape[:-1]

    @cached_property
    def phi_t(self):
        return forms.expand(self.phi, 3)

    @cached_property
    def psi_t(self):
        return forms.expand(self.psi, 4)

    @cached_property
    def phi_up(self):
        return forms.expand(forms.raise_form(self.phi, 3, self.metric), 3)

    @cached_property
    def psi_up(self):
        return forms.expand(forms.raise_form(self.psi, 4, self.metric), 4)

    def sharp(self, one_form):
        return np.einsum("...ij,...j->...i", self.ginv, one_form)

    def flat(self, vector):
        return np.einsum("...ij,...j->...i", self.g, vector)

    def star(self, alpha, k):
        return forms.hodge_star(alpha, k, self.metric)

    def inner(self, a, b, k):
        return forms.inner(a, b, k, self.metric)

    def raise_endo(self, A):
        return np.einsum("...ia,...ab,...jb->...ij", self.ginv, A, self.ginv)

    def trace(self, A):
        return np.einsum("...ij,...ij->...", self.ginv, A)

    def endo_inner(self, A, B):
        """Unweighted A_ij B^ij."""
        return np.einsum("...ij,...ij->...", A, self.raise_endo(B))


def hodge_star(pt, alpha, k=None):
    k = forms.degree_of(alpha, N) if k is None else k
    return pt.star(alpha, k)


# ----------------------------------------------------------- diamond, P

def _mixed(A, pt):
    # A_i^l = A_im g^{ml}
    return np.einsum("...im,...ml->...il", A, pt.ginv)


def diamond_form(A, alpha, k, pt):
    return forms.derivation(_mixed(A, pt), alpha, k, N)


def diamond(A, target, pt):
    """A⋄phi or A⋄psi; ``target`` is "phi" or "psi"."""
    if target == "phi":
        return diamond_form(A, pt.phi, 3, pt)
    if target == "psi":
        return diamond_form(A, pt.psi, 4, pt)
    raise ValueError("target must be 'phi' or 'psi'")


def p_operator(A, pt):
    """(PA)_ij = A^ab psi_abij."""
    return np.einsum("...ab,...abij->...ij", pt.raise_endo(A), pt.psi_t)


def two_form_matrix(beta):
    return forms.expand(beta, 2)


def matrix_two_form(mat):
    return forms.compress(mat, 2)


def contract_phi(X, pt):
    """X⌟phi for a contravariant vector, as a 2-form."""
    return forms.interior(X, pt.phi, 3)


def contract_psi(X, pt):
    return forms.interior(X, pt.psi, 4)


def vector_of_two_form(beta_mat, pt):
    """Lower-index X_a = (1/6) beta_bc phi_a^bc, inverse of X -> X⌟phi on Ω²₇."""
    up = np.einsum("...ib,...jc,...abc->...aij", pt.ginv, pt.ginv, pt.phi_t)
    return np.einsum("...bc,...abc->...a", beta_mat, up) / 6.0


def decompose_two_form(beta, pt):
    """Split a 2-form into its Ω²₇ and Ω²₁₄ parts."""
    B = two_form_matrix(beta)
    PB = p_operator(B, pt)
    b7 = (PB + 2.0 * B) / 6.0
    b14 = (4.0 * B - PB) / 6.0
    return matrix_two_form(b7), matrix_two_form(b14)


class EndoParts(NamedTuple):
    A1: np.ndarray
    A27: np.ndarray
    A7: np.ndarray
    A14: np.ndarray
    trace: np.ndarray


def decompose_endo(A, pt):
    """A = A1 + A27 + A7 + A14 with A1 = (tr A / 7) g."""
    A = np.asarray(A, dtype=float)
    tr = pt.trace(A)
    A1 = tr[..., None, None] / 7.0 * pt.g
    sym = 0.5 * (A + np.swapaxes(A, -1, -2))
    skew = 0.5 * (A - np.swapaxes(A, -1, -2))
    Ps = p_operator(skew, pt)
    return EndoParts(A1, sym - A1, (Ps + 2.0 * skew) / 6.0,
                     (4.0 * skew - Ps) / 6.0, tr)


class FourFormParts(NamedTuple):
    a: np.ndarray
    X: np.ndarray
    S: np.ndarray

    def reassemble(self, pt):
        """a psi + X♭∧phi + *(S⋄phi)."""
        Xb = pt.flat(self.X)
        return (self.a[..., None] * pt.psi
                + forms.wedge(Xb, 1, pt.phi, 3)
                + pt.star(diamond(self.S, "phi", pt), 3))


def decompose_four_form(Gamma, pt):
    """Components of a 4-form in the 1 + 7 + 27 splitting.

    Returns (a, X, S) with X contravariant and S symmetric traceless such
    that Gamma = a psi + X♭∧phi + *(S⋄phi). Since *(S⋄phi) = -S⋄psi on
    traceless symmetric S, feeding Gamma = S'⋄psi returns S = -S'.
    """
    Gamma = np.asarray(Gamma, dtype=float)
    a = pt.inner(Gamma, pt.psi, 4) / 7.0
    # <Gamma, e^i∧phi> = g^ij <e_j⌟Gamma, phi>
    cut = forms.interior(np.eye(N), Gamma[..., None, :], 4)
    Y = np.einsum("...jI,...I->...j", cut,
                  forms.raise_form(pt.phi, 3, pt.metric))
    X = pt.sharp(Y) / 4.0
    G = forms.expand(Gamma, 4)
    c = np.einsum("...iabc,...mabc,...mj->...ij", G, pt.psi_up, pt.g)
    S = 2.0 * a[..., None, None] * pt.g - (c + np.swapaxes(c, -1, -2)) / 24.0
    return FourFormParts(a, X, S)


# ------------------------------------------------------ variations of psi

def split_three_form(eta, pt):
    """Write a 3-form as S⋄phi + X⌟psi (S symmetric, X contravariant)."""
    E = forms.expand(eta, 3)
    M = np.einsum("...ijk,...ljk->...il", E,
                  np.einsum("...lab,...aj,...bk->...ljk",
                            pt.phi_t, pt.ginv, pt.ginv))
    sym = 0.5 * (M + np.swapaxes(M, -1, -2))
    trS = pt.trace(sym) / 18.0
    S = (sym - 2.0 * trS[..., None, None] * pt.g) / 4.0
    Xlow = np.einsum("...bcd,...abcd->...a",
                     forms.expand(forms.raise_form(eta, 3, pt.metric), 3),
                     pt.psi_t) / 24.0
    return S, pt.sharp(Xlow)


def psi_variation(eta, pt):
    """Derivative of psi along the 3-form variation eta of phi."""
    S, X = split_three_form(eta, pt)
    return diamond(S, "psi", pt) - forms.wedge(pt.flat(X), 1, pt.phi, 3)


def metric_variation(eta, pt):
    """Derivative of g along eta (twice the symmetric part S)."""
    S, _ = split_three_form(eta, pt)
    return 2.0 * S


def positive_mask(phi):
    """Points where phi is a positive 3-form."""
    B = hitchin_B(phi)
    B = 0.5 * (B + np.swapaxes(B, -1, -2))
    return np.linalg.eigvalsh(B)[..., 0] > 0


def phi_from_psi_closed(psi):
    """Closed-form inverse of phi -> *phi.

    For psi = u^*psi0 the flat complement of psi is det(u) times the
    pullback of phi0 by u^{-T}; its metric g' = c^{2/3} g^{-1} with
    c = det(u) = det(g')^{3/8}, so g and then phi = *_g psi follow.
    """
    chi = forms.complement(np.asarray(psi, dtype=float), 4)
    gp = metric_from_phi(chi)[0].g
    c = np.linalg.det(gp) ** (3.0 / 8.0)
    g = c[..., None, None] ** (2.0 / 3.0) * np.linalg.inv(gp)
    return forms.hodge_star(psi, 4, forms.Metric.from_matrix(g))


def phi_from_psi(psi, guess=None, tol=1e-14, maxiter=60):
    """Positive 3-form whose dual 4-form is ``psi`` (orientation e^1..7).

    Damped Newton iteration on phi -> *phi, inverted through the 4-form
    decomposition; the step is halved per point until positivity holds
    and the residual drops. Without a guess the closed form seeds it.
    """
    psi = np.asarray(psi, dtype=float)
    if guess is None:
        guess = phi_from_psi_closed(psi)
    phi = np.array(guess, dtype=float)
    scale = 1.0 + np.max(np.abs(psi)) if psi.size else 1.0

    def residual(ph):
        ok = positive_mask(ph)
        safe = np.where(ok[..., None], ph, standard_phi0())
        pt = PointG2.from_phi(safe, check=False)
        err = np.max(np.abs(psi - pt.psi), axis=-1)
        return pt, np.where(ok, err, np.inf)

    pt, err = residual(phi)
    for _ in range(maxiter):
        if np.all(err <= tol * scale):
            return phi
        parts = decompose_four_form(psi - pt.psi, pt)
        # res = a psi + Y∧phi - S0⋄psi,  Dpsi(S⋄phi + X⌟psi) = S⋄psi - X∧phi
        S = parts.a[..., None, None] / 4.0 * pt.g - parts.S
        eta = diamond(S, "phi", pt) + contract_psi(-parts.X, pt)
        lam = np.ones(err.shape)
        for _halving in range(30):
            trial = phi + lam[..., None] * eta
            tpt, terr = residual(trial)
            worse = ~(terr < err) & (err > tol * scale)
            if not worse.any():
                break
            lam = np.where(worse, 0.5 * lam, lam)
        phi = np.where((terr < err)[..., None], trial, phi)
        pt, err = residual(phi)
    raise NotPositive("Newton inversion of psi did not converge")


# ----------------------------------------------------------- random data

def random_gl(rng, count, spread=np.log(2.0)):
    """Random orientation-preserving matrices U diag(s) V.

    U, V are Haar-random orthogonal and log s is uniform on [-spread, spread]
    (natural log, so spread = log 2 keeps the condition number <= 4).
    """
    def orth():
        q, r = np.linalg.qr(rng.standard_normal((count, N, N)))
        return q * np.sign(np.diagonal(r, axis1=-2, axis2=-1))[..., None, :]
    s = np.exp(rng.uniform(-spread, spread, size=(count, N)))
    u = np.einsum("...ij,...j,...jk->...ik", orth(), s, orth())
    flip = np.linalg.det(u) < 0
    u[flip, 0, :] *= -1.0
    return u


def random_positive_phis(rng, count, spread=np.log(2.0)):
    """Random GL pullbacks u^*phi0 together with the matrices u."""
    u = random_gl(rng, count, spread)
    return forms.pullback(u, standard_phi0(), 3), u
