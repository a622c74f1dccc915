"""Torsion, characteristic torsion and curvature of grid G2-structures.

Two independent torsion routes are provided: the full torsion tensor T
from the covariant derivative of phi, and type projections of dphi and
dpsi. Curvature comes either from T (the index formula for Ric) or from the
metric alone through Christoffel symbols; the latter is the oracle.
"""

from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np

from . import algebra, forms
from . import grid as gridmod
from .errors import NotIntegrable

INTEGRABILITY_TOL = 1e-6


@dataclass(eq=False)
class TorsionPackage:
    T: np.ndarray
    tau0: np.ndarray
    tau1: np.ndarray        # lower-index 1-form
    tau2: np.ndarray        # 2-form
    tau27: np.ndarray       # symmetric traceless endomorphism
    tau3: np.ndarray        # 3-form, tau27⋄phi
    trT: np.ndarray
    H: Optional[np.ndarray] = None
    route: str = "T"

    def tau1_contract_phi(self, pt):
        return algebra.contract_phi(pt.sharp(self.tau1), pt)


@dataclass(eq=False)
class CurvaturePackage:
    Ric: np.ndarray
    R: np.ndarray
    R_forms: np.ndarray
    R_curl: np.ndarray
    Splus: Optional[np.ndarray] = None
    dH: Optional[np.ndarray] = None
    dH_psi: Optional[np.ndarray] = None
    extra: dict = dc_field(default_factory=dict)


# ------------------------------------------------------------ torsion

def nabla_phi(field):
    """∇_a phi_ijk as a full tensor [..., a, i, j, k]."""
    return field.nabla(forms.expand(field.phi, 3))


def _psi_one_down(pt):
    # psi_b^{ijk}
    return np.einsum("...bm,...mijk->...bijk", pt.g, pt.psi_up)


def full_torsion(field):
    """T_ab = (1/24) ∇_a phi_ijk psi_b^ijk."""
    return np.einsum("...aijk,...bijk->...ab", nabla_phi(field),
                     _psi_one_down(field.point)) / 24.0


def torsion_forms_from_T(T, field):
    pt = field.point if hasattr(field, "point") else field
    T = np.asarray(T, dtype=float)
    Tt = np.swapaxes(T, -1, -2)
    trT = pt.trace(T)
    PT = algebra.p_operator(T, pt)
    tau0 = 4.0 / 7.0 * trT
    tau27 = -0.5 * (T + Tt) + trT[..., None, None] / 7.0 * pt.g
    t1phi = -(T - Tt) / 6.0 - PT / 6.0
    tau2 = algebra.matrix_two_form(-2.0 / 3.0 * (T - Tt) + PT / 3.0)
    tau1 = algebra.vector_of_two_form(t1phi, pt)
    tau3 = algebra.diamond(tau27, "phi", pt)
    return TorsionPackage(T, tau0, tau1, tau2, tau27, tau3, trT, route="T")


def assemble_T(tp, pt):
    """T = (tau0/4) g - tau27 - tau1⌟phi - tau2/2."""
    t1phi = algebra.two_form_matrix(tp.tau1_contract_phi(pt))
    return (tp.tau0[..., None, None] / 4.0 * pt.g - tp.tau27 - t1phi
            - 0.5 * algebra.two_form_matrix(tp.tau2))


def torsion_forms_from_derivatives(field):
    """Torsion forms by type projection of dphi and dpsi."""
    pt = field.point
    dphi = field.d(pt.phi, 3)
    dpsi = field.d(pt.psi, 4)
    parts = algebra.decompose_four_form(dphi, pt)
    tau0 = parts.a
    tau1_up = parts.X / 3.0
    tau1 = pt.flat(tau1_up)
    tau27 = parts.S
    tau3 = algebra.diamond(tau27, "phi", pt)
    rest = dpsi - 4.0 * forms.wedge(tau1, 1, pt.psi, 4)
    _, tau2 = algebra.decompose_two_form(-pt.star(rest, 5), pt)
    trT = 7.0 / 4.0 * tau0
    tp = TorsionPackage(None, tau0, tau1, tau2, tau27, tau3, trT, route="forms")
    tp.T = assemble_T(tp, pt)
    return tp


def tau1_from_dpsi(field):
    """Lower tau1 from <dpsi, e^i∧psi> = 12 tau1^i."""
    pt = field.point
    dpsi = field.d(pt.psi, 4)
    n = algebra.N
    e = np.broadcast_to(np.eye(n), pt.batch_shape + (n, n))
    up = np.stack([pt.inner(dpsi, forms.wedge(e[..., i, :], 1, pt.psi, 4), 5)
                   for i in range(n)], -1)
    return pt.flat(up / 12.0)


def norm_identity_residuals(tp, pt):
    """Pointwise norm relations between T and its torsion forms.

    Endomorphism norms are full contractions; form norms use the 1/k!
    convention. Residuals are relative to 1 + |T|^2.
    """
    T = tp.T
    endo = pt.endo_inner
    TT, TTt = endo(T, T), endo(T, np.swapaxes(T, -1, -2))
    TPT = endo(T, algebra.p_operator(T, pt))
    trT = tp.trT
    t1phi = algebra.two_form_matrix(tp.tau1_contract_phi(pt))
    t2 = algebra.two_form_matrix(tp.tau2)
    scale = 1.0 + np.max(np.abs(TT))
    pairs = {
        "tau0^2": (tp.tau0 ** 2, 16.0 / 49.0 * trT ** 2),
        "|tau27|^2": (endo(tp.tau27, tp.tau27), 0.5 * TT + 0.5 * TTt - trT ** 2 / 7.0),
        "|tau1⌟phi|^2": (endo(t1phi, t1phi), (TT - TTt + TPT) / 6.0),
        "|tau2|^2": (endo(t2, t2), 4.0 / 3.0 * (TT - TTt) - 2.0 / 3.0 * TPT),
        "|tau1⌟phi|^2 = 6|tau1|^2": (endo(t1phi, t1phi), 6.0 * pt.inner(tp.tau1, tp.tau1, 1)),
        "|tau27|^2 = |tau3|^2/2": (endo(tp.tau27, tp.tau27),
                                   0.5 * pt.inner(tp.tau3, tp.tau3, 3)),
    }
    return {k: float(np.max(np.abs(a - b)) / scale) for k, (a, b) in pairs.items()}


def tau2_residual(tp):
    return gridmod.sup_norm(tp.tau2)


def check_integrable(tp, tol=INTEGRABILITY_TOL):
    bound = tol * (1.0 + gridmod.sup_norm(tp.T))
    res = tau2_residual(tp)
    if res > bound:
        raise NotIntegrable(f"|tau2|_inf = {res:.3e} exceeds {bound:.3e}")
    return res


def characteristic_torsion(tp, field, tol=INTEGRABILITY_TOL, check=True):
    """H = tau0 phi / 6 - tau1⌟psi - tau3; stored on the package."""
    pt = field.point
    if check:
        check_integrable(tp, tol)
    H = (tp.tau0[..., None] * pt.phi / 6.0
         - algebra.contract_psi(pt.sharp(tp.tau1), pt) - tp.tau3)
    tp.H = H
    return H


def H_squared(H, pt):
    """(H^2)_ij = H_iab H_j^ab."""
    Hf = forms.expand(H, 3)
    Hup = np.einsum("...jcd,...ca,...db->...jab", Hf, pt.ginv, pt.ginv)
    return np.einsum("...iab,...jab->...ij", Hf, Hup)


# ---------------------------------------------------------- curvature

def _phi_j_up(pt):
    # phi_j^{mn}
    return np.einsum("...jab,...am,...bn->...jmn", pt.phi_t, pt.ginv, pt.ginv)


def ricci_from_torsion(tp, field):
    pt = field.point
    T = tp.T
    nT = field.nabla(T)                          # ∇_a T_bc
    A = nT - np.swapaxes(nT, -3, -2)             # ∇_i T_mn - ∇_m T_in
    Ric = np.einsum("...imn,...jmn->...ij", A, _phi_j_up(pt))
    Ric = Ric + tp.trT[..., None, None] * T
    Ric = Ric - np.einsum("...ia,...ab,...bj->...ij", T, pt.ginv, T)
    Tmix = np.einsum("...ia,...am->...im", T, pt.ginv)
    Ric = Ric + np.einsum("...im,...np,...mnpj->...ij", Tmix,
                          pt.raise_endo(T), pt.psi_t)
    Ric_sym = 0.5 * (Ric + np.swapaxes(Ric, -1, -2))
    # scalar by the index formula
    divT = np.einsum("...imn,...imn->...", nT,
                     np.einsum("...abc,...ai,...bm,...cn->...imn", pt.phi_t,
                               pt.ginv, pt.ginv, pt.ginv))
    Tup = pt.raise_endo(T)
    trTT = np.einsum("...im,...mi->...", T, Tup)
    TTpsi = np.einsum("...im,...np,...mnpi->...", Tup, Tup, pt.psi_t)
    R = 2.0 * divT + tp.trT ** 2 - trTT + TTpsi
    R_forms = scalar_from_forms(tp, field)
    R_curl = scalar_from_curl(tp, field)
    return CurvaturePackage(Ric_sym, R, R_forms, R_curl,
                            extra={"Ric_raw": Ric, "nablaT": nT})


def scalar_from_forms(tp, field):
    """R = 12 d*tau1 + 21/8 tau0^2 + 30|tau1|^2 - |tau2|^2/2 - |tau3|^2/2."""
    pt = field.point
    dstar = field.codiff(tp.tau1, 1)[..., 0]
    return (12.0 * dstar + 21.0 / 8.0 * tp.tau0 ** 2
            + 30.0 * pt.inner(tp.tau1, tp.tau1, 1)
            - 0.5 * pt.inner(tp.tau2, tp.tau2, 2)
            - 0.5 * pt.inner(tp.tau3, tp.tau3, 3))


def scalar_from_curl(tp, field):
    """R = -2 d*(T⌟phi) + <T,PT> + (tr T)^2 - <T,T^t>."""
    pt = field.point
    T = tp.T
    # (T⌟phi)_a = T_bc phi_a^bc
    Tphi = np.einsum("...bc,...abc->...a", T, _phi_j_up(pt))
    dstar = field.codiff(Tphi, 1)[..., 0]
    PT = algebra.p_operator(T, pt)
    return (-2.0 * dstar + pt.endo_inner(T, PT) + tp.trT ** 2
            - pt.endo_inner(T, np.swapaxes(T, -1, -2)))


def metric_curvature(field):
    """Riemann, Ricci and scalar curvature straight from the metric."""
    Rm = gridmod.riemann(field.metric, field.gamma, field.grid)
    Ric = gridmod.ricci_from_riemann(Rm, field.metric)
    R = np.einsum("...ij,...ij->...", field.metric.ginv, Ric)
    return Rm, Ric, R


def lie_derivative_metric(one_form, field):
    """L_X g for X = one_form^♯: ∇_i X_j + ∇_j X_i."""
    nX = field.nabla(one_form)
    return nX + np.swapaxes(nX, -1, -2)


def dH_assembled(tp, curv, field):
    """Right-hand side of the dH decomposition in terms of Ric, H, tau1."""
    pt = field.point
    H = tp.H
    trT = tp.trT
    dtr = field.d(trT[..., None], 0)
    H2 = H_squared(H, pt)
    Hn = pt.inner(H, H, 3)
    dstar = field.codiff(tp.tau1, 1)[..., 0]
    scal = curv.R - 4.0 * dstar - 1.5 * Hn
    A = (curv.Ric - 0.25 * H2 + 2.0 * lie_derivative_metric(tp.tau1, field)
         - scal[..., None, None] / 8.0 * pt.g)
    return (-forms.wedge(dtr, 1, pt.phi, 3) / 3.0
            + algebra.diamond(A, "psi", pt))


def dH_psi_formula(tp, field):
    """4 d*tau1 + 49/36 tau0^2 + 16|tau1|^2 - |H|^2."""
    pt = field.point
    dstar = field.codiff(tp.tau1, 1)[..., 0]
    return (4.0 * dstar + 49.0 / 36.0 * tp.tau0 ** 2
            + 16.0 * pt.inner(tp.tau1, tp.tau1, 1) - pt.inner(tp.H, tp.H, 3))


def dH_psi_coclosed(tp, field, dilaton):
    """-4 Δf + 7/6 tau0^2 + 12|df|^2 - |tau3|^2 for conformally coclosed data."""
    pt = field.point
    df = field.grad(dilaton)
    return (-4.0 * field.laplacian(dilaton) + 7.0 / 6.0 * tp.tau0 ** 2
            + 12.0 * pt.inner(df, df, 1) - pt.inner(tp.tau3, tp.tau3, 3))


@dataclass
class DHResiduals:
    dH: float
    dH_psi: float
    scale: float


def dH_decomposition_check(tp, field, curv=None, tol=INTEGRABILITY_TOL):
    """L∞ gaps between discrete dH and its assembled decomposition."""
    if tp.H is None:
        characteristic_torsion(tp, field, tol)
    else:
        check_integrable(tp, tol)
    if curv is None:
        curv = ricci_from_torsion(tp, field)
    dH = field.d(tp.H, 3)
    rhs = dH_assembled(tp, curv, field)
    dHpsi = field.point.inner(dH, field.psi, 4)
    curv.dH = dH
    curv.dH_psi = dHpsi
    return DHResiduals(gridmod.sup_norm(dH - rhs),
                       gridmod.sup_norm(dHpsi - dH_psi_formula(tp, field)),
                       gridmod.sup_norm(dH))


def generalized_scalar(tp, field, dilaton=None, curv=None):
    """S+ = R - |H|^2/2 - 8 d*tau1 - 16|tau1|^2.

    ``dilaton`` is accepted for symmetry with the flow code; on conformally
    coclosed data tau1 = d(dilaton) and the two readings coincide.
    """
    pt = field.point
    if tp.H is None:
        characteristic_torsion(tp, field)
    if curv is None:
        curv = ricci_from_torsion(tp, field)
    tau1 = tp.tau1 if dilaton is None else field.grad(dilaton)
    dstar = field.codiff(tau1, 1)[..., 0]
    Sp = (curv.R - 0.5 * pt.inner(tp.H, tp.H, 3) - 8.0 * dstar
          - 16.0 * pt.inner(tau1, tau1, 1))
    curv.Splus = Sp
    return Sp


def lichnerowicz_residual(tp, field, curv):
    """49/36 tau0^2 - (S+ - <dH, psi>) in sup norm."""
    if curv.Splus is None:
        generalized_scalar(tp, field, curv=curv)
    if curv.dH_psi is None:
        dH_decomposition_check(tp, field, curv)
    return gridmod.sup_norm(49.0 / 36.0 * tp.tau0 ** 2
                            - (curv.Splus - curv.dH_psi))


def g2_bianchi_check(tp, field, Rm=None):
    """sup|∇_i T_jk - ∇_j T_ik - (R_ijmn/2 - T_im T_jn) phi^mn_k|."""
    pt = field.point
    if Rm is None:
        Rm, _, _ = metric_curvature(field)
    nT = field.nabla(tp.T)
    lhs = nT - np.swapaxes(nT, -3, -2)
    Tup = np.einsum("...im,...ma->...ia", tp.T, pt.ginv)
    TT = np.einsum("...im,...jn->...ijmn", Tup, Tup)
    # R_ij^{mn}: our Rm[r,s,m,n] has the derivative pair last
    Rup = np.einsum("...mnij,...ma,...nb->...ijab", Rm, pt.ginv, pt.ginv)
    rhs = np.einsum("...ijmn,...mnk->...ijk", 0.5 * Rup - TT, pt.phi_t)
    return gridmod.sup_norm(lhs - rhs)
