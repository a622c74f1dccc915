"""Circle reduction: S^1-invariant G2-structures from SU(3)-structures.

On T^6 x S^1 with the circle along manifold axis 6 (x^7), an invariant
G2-structure is written phi = h^{-3/4} omega∧theta + rho_+ with
theta = dx^7 + a and a a 1-form potential on the base. All 6D forms live on
a Grid with dim = 6 whose active axes are a subset of 0..5.

The reduced flow evolves the two pieces of e^{-4f} psi = Omega + R∧dx^7
together with the dilaton. Its rates are exact when h = 1 and F = da = 0.
"""

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import algebra, forms
from . import grid as gridmod
from . import torsion as tors
from .errors import (IncompatibleSU3, NonFinite, NotIntegrable, NotPositive,
                     NumericalAbort, PositivityLost,
                     ReductionHypothesisViolated)

N6 = 6
AXIS = 6            # circle direction in the 7D index range
COMPAT_TOL = 1e-10
HYPOTHESIS_TOL = 1e-8


# ----------------------------------------------------- 6D <-> 7D forms

def lift(alpha, k):
    """A base k-form as a 7D k-form with no dx^7 leg."""
    alpha = np.asarray(alpha)
    out = np.zeros(alpha.shape[:-1] + (forms.ncomp(7, k),))
    s7 = forms.slot(7, k)
    idx = [s7[I] for I in forms.basis(N6, k)]
    out[..., idx] = alpha
    return out


def lift_theta(alpha, k):
    """alpha∧dx^7 for a base k-form."""
    alpha = np.asarray(alpha)
    out = np.zeros(alpha.shape[:-1] + (forms.ncomp(7, k + 1),))
    s7 = forms.slot(7, k + 1)
    idx = [s7[I + (AXIS,)] for I in forms.basis(N6, k)]
    out[..., idx] = alpha
    return out


def split(alpha, k):
    """7D k-form = lift(base) + lift_theta(leg); returns (base, leg)."""
    alpha = np.asarray(alpha)
    s7 = forms.slot(7, k)
    base = alpha[..., [s7[I] for I in forms.basis(N6, k)]] if k <= N6 else \
        np.zeros(alpha.shape[:-1] + (0,))
    leg = alpha[..., [s7[I + (AXIS,)] for I in forms.basis(N6, k - 1)]]
    return base, leg


def standard_su3():
    """(omega0, rho_plus0) with phi0 = omega0∧dx^7 + rho_plus0."""
    return split(algebra.standard_phi0(), 3)[::-1]


# -------------------------------------------------------------- fields

@dataclass(eq=False)
class SU3Field:
    grid: gridmod.Grid           # dim 6
    omega: np.ndarray
    rho_plus: np.ndarray
    h: np.ndarray
    a: np.ndarray                # connection potential, theta = dx^7 + a
    dilaton: np.ndarray

    def __post_init__(self):
        if self.grid.dim != N6:
            raise ValueError("SU3Field needs a grid with dim = 6")
        shape = self.grid.shape
        self.h = np.broadcast_to(np.asarray(self.h, dtype=float), shape)
        self.dilaton = np.broadcast_to(np.asarray(self.dilaton, dtype=float),
                                       shape)
        self.a = np.broadcast_to(np.asarray(self.a, dtype=float), shape + (6,))
        if np.any(self.h <= 0):
            raise IncompatibleSU3("h must be positive")

    @classmethod
    def flat(cls, grid, dilaton=0.0, h=1.0):
        om, rp = standard_su3()
        shape = grid.shape
        return cls(grid, np.broadcast_to(om, shape + om.shape).copy(),
                   np.broadcast_to(rp, shape + rp.shape).copy(), h,
                   np.zeros(shape + (6,)), dilaton)

    @classmethod
    def from_g2(cls, field, dilaton=0.0):
        """Read (omega, rho_plus, h, a) off an invariant 7D structure."""
        g = field.metric.g
        g77 = g[..., AXIS, AXIS]
        h = g77 ** (-2.0 / 3.0)
        a = g[..., :AXIS, AXIS] / g77[..., None]
        base, leg = split(field.phi, 3)
        omega = h[..., None] ** 0.75 * leg
        rho = base - h[..., None] ** -0.75 * forms.wedge(omega, 2, a, 1, N6)
        grid6 = gridmod.Grid(field.grid.n, field.grid.active_axes, N6)
        if AXIS in field.grid.active_axes:
            raise ReductionHypothesisViolated("field depends on the circle coordinate")
        return cls(grid6, omega, rho, h, a, dilaton)

    @cached_property
    def _embedded(self):
        # omega∧dx^7 + rho_+ carries the metric g6 + (dx^7)^2
        phi = lift_theta(self.omega, 2) + lift(self.rho_plus, 3)
        return algebra.metric_from_phi(phi)[0]

    @cached_property
    def metric(self):
        return forms.Metric.from_matrix(self._embedded.g[..., :N6, :N6])

    @cached_property
    def rho_minus(self):
        return forms.hodge_star(self.rho_plus, 3, self.metric)

    @cached_property
    def Ftheta(self):
        return gridmod.exterior_derivative(self.a, 1, self.grid)

    @cached_property
    def J(self):
        """J_i^k = omega_ij g^jk."""
        return np.einsum("...ij,...jk->...ik", forms.expand(self.omega, 2, N6),
                         self.metric.ginv)

    def J_one_form(self, alpha):
        """(J alpha)_i = J_i^k alpha_k."""
        return np.einsum("...ik,...k->...i", self.J, alpha)

    @cached_property
    def gamma(self):
        return gridmod.christoffels(self.metric, self.grid)

    def d(self, alpha, k):
        return gridmod.exterior_derivative(alpha, k, self.grid)

    def star(self, alpha, k):
        return forms.hodge_star(alpha, k, self.metric)

    def inner(self, a, b, k):
        return forms.inner(a, b, k, self.metric)

    def sharp(self, one_form):
        return np.einsum("...ij,...j->...i", self.metric.ginv, one_form)

    def flat_vec(self, vec):
        return np.einsum("...ij,...j->...i", self.metric.g, vec)

    def wedge(self, a, k, b, l):
        return forms.wedge(a, k, b, l, N6)


def compatibility_residuals(su3):
    om, rp, rm = su3.omega, su3.rho_plus, su3.rho_minus
    om2 = forms.wedge(om, 2, om, 2, N6)
    om3 = forms.wedge(om2, 4, om, 2, N6)[..., 0] / 6.0
    rr = forms.wedge(rp, 3, rm, 3, N6)[..., 0] / 4.0
    g7 = su3._embedded.g
    return {
        "volume": gridmod.sup_norm(om3 - rr),
        "metric_volume": gridmod.sup_norm(om3 - su3.metric.vol),
        "omega_rho_plus": gridmod.sup_norm(forms.wedge(om, 2, rp, 3, N6)),
        "omega_rho_minus": gridmod.sup_norm(forms.wedge(om, 2, rm, 3, N6)),
        "normalization": gridmod.sup_norm(g7[..., AXIS, AXIS] - 1.0)
        + gridmod.sup_norm(g7[..., :AXIS, AXIS]),
        "dF": gridmod.sup_norm(su3.d(su3.Ftheta, 2)),
    }


def check_compatible(su3, tol=COMPAT_TOL):
    res = compatibility_residuals(su3)
    bad = {k: v for k, v in res.items() if v > tol}
    if bad:
        raise IncompatibleSU3("SU(3) invariants fail: " + ", ".join(
            f"{k}={v:.2e}" for k, v in bad.items()))
    return res


# ----------------------------------------------------- 7D from 6D data

def theta7(su3):
    """theta = dx^7 + a as a 7D 1-form."""
    th = lift(su3.a, 1)
    th[..., AXIS] = 1.0
    return th


def build_invariant_g2(su3, check=True):
    """(G2Field, dilaton) for phi = h^{-3/4} omega∧theta + rho_+."""
    if check:
        check_compatible(su3)
    hq = su3.h[..., None] ** -0.75
    om7 = lift(su3.omega, 2)
    phi = hq * forms.wedge(om7, 2, theta7(su3), 1) + lift(su3.rho_plus, 3)
    grid7 = gridmod.Grid(su3.grid.n, su3.grid.active_axes, 7)
    return gridmod.G2Field.from_phi(phi, grid7), np.array(su3.dilaton)


def invariant_psi(su3):
    """omega^2/2 + h^{-3/4} rho_-∧theta assembled from 6D pieces."""
    om7 = lift(su3.omega, 2)
    hq = su3.h[..., None] ** -0.75
    return (0.5 * forms.wedge(om7, 2, om7, 2)
            + hq * forms.wedge(lift(su3.rho_minus, 3), 3, theta7(su3), 1))


# ------------------------------------------------------------ torsion

@dataclass(eq=False)
class SU3Torsion:
    sigma0: np.ndarray
    pi0: np.ndarray
    nu1: np.ndarray
    pi1: np.ndarray
    pi2: np.ndarray
    sigma2: np.ndarray
    nu3: np.ndarray
    Homega: np.ndarray
    reassembly: dict


def _frame_products(su3, form, k):
    # e^i∧form for each coordinate covector e^i (list over i)
    e = np.eye(N6)
    return [forms.wedge(np.broadcast_to(e[i], form.shape[:-1] + (6,)), 1,
                        form, k, N6) for i in range(N6)]


def _project_vector(su3, target, form, k, norm):
    """Lower 1-form alpha with <target, e^i∧form> = norm * alpha^i."""
    up = np.stack([su3.inner(target, w, k + 1)
                   for w in _frame_products(su3, form, k)], -1) / norm
    return su3.flat_vec(up)


def split_two_form(su3, beta):
    """(beta_1, beta_6, beta_8) using *(beta∧omega) = 2b1 + b6 - b8."""
    b1 = (su3.inner(beta, su3.omega, 2) / 3.0)[..., None] * su3.omega
    s = su3.star(su3.wedge(beta, 2, su3.omega, 2), 4)
    b6 = 0.5 * (beta + s - 3.0 * b1)
    return b1, b6, beta - b1 - b6


def su3_torsion_forms(su3):
    om, rp, rm = su3.omega, su3.rho_plus, su3.rho_minus
    dom = su3.d(om, 2)
    drp = su3.d(rp, 3)
    drm = su3.d(rm, 3)
    om2 = su3.wedge(om, 2, om, 2)
    sigma0 = su3.inner(dom, rp, 3) / 4.0
    pi0 = su3.inner(dom, rm, 3) / 4.0
    nu1 = _project_vector(su3, dom, om, 2, 2.0)
    nu1om = su3.wedge(nu1, 1, om, 2)
    nu3 = dom - sigma0[..., None] * rp - pi0[..., None] * rm - nu1om
    pi1 = _project_vector(su3, drp, rp, 3, 2.0)
    rest_p = drp - 2.0 / 3.0 * pi0[..., None] * om2 - su3.wedge(pi1, 1, rp, 3)
    pi2 = split_two_form(su3, su3.star(rest_p, 4))[2]
    rest_m = drm + 2.0 / 3.0 * sigma0[..., None] * om2 - su3.wedge(pi1, 1, rm, 3)
    sigma2 = split_two_form(su3, su3.star(rest_m, 4))[2]
    H = (-sigma0[..., None] * rm / 3.0 + pi0[..., None] * rp / 3.0
         - su3.star(nu1om, 3) + su3.star(nu3, 3))
    re = {
        "domega": gridmod.sup_norm(dom - (sigma0[..., None] * rp + pi0[..., None] * rm
                                          + nu1om + nu3)),
        "drho_plus": gridmod.sup_norm(drp - (2.0 / 3.0 * pi0[..., None] * om2
                                             + su3.wedge(pi1, 1, rp, 3)
                                             - su3.wedge(pi2, 2, om, 2))),
        "drho_minus": gridmod.sup_norm(drm - (-2.0 / 3.0 * sigma0[..., None] * om2
                                              + su3.wedge(pi1, 1, rm, 3)
                                              - su3.wedge(sigma2, 2, om, 2))),
        "nu3_type": gridmod.sup_norm(su3.wedge(nu3, 3, om, 2))
        + gridmod.sup_norm(su3.inner(nu3, rp, 3))
        + gridmod.sup_norm(su3.inner(nu3, rm, 3)),
    }
    return SU3Torsion(sigma0, pi0, nu1, pi1, pi2, sigma2, nu3, H, re)


def omega_contract(su3, beta):
    """omega⌟beta = <omega, beta> for a 2-form beta."""
    return su3.inner(su3.omega, beta, 2)


def reduced_tau0(su3, st):
    hq = su3.h ** -0.75
    return 2.0 / 7.0 * (hq * omega_contract(su3, su3.Ftheta) + 4.0 * st.pi0)


def reduced_tau1(su3, st, rho=None):
    """tau1 as a 7D 1-form; ``rho`` picks rho_plus (default) or rho_minus."""
    rho = su3.rho_plus if rho is None else rho
    hq = su3.h ** -0.75
    FR = su3.star(su3.wedge(su3.Ftheta, 2, rho, 3), 5)
    base = 0.5 * st.nu1 - 0.25 * hq[..., None] * FR
    return lift(base, 1) - (st.sigma0 * hq / 3.0)[..., None] * theta7(su3)


def integrability_residual(su3, st):
    """-h^{3/4} d h^{-3/4} + 2 nu1 - pi1 - h^{-3/4} *(F∧rho_+), and sigma2."""
    hq = su3.h ** -0.75
    dhq = gridmod.gradient(hq, su3.grid)
    FR = su3.star(su3.wedge(su3.Ftheta, 2, su3.rho_plus, 3), 5)
    r = (-dhq / hq[..., None] + 2.0 * st.nu1 - st.pi1 - hq[..., None] * FR)
    return gridmod.sup_norm(r), gridmod.sup_norm(st.sigma2)


def interior6(su3, vec, alpha, k):
    return forms.interior(vec, alpha, k, N6)


def _H_pieces(su3):
    hq = su3.h ** -0.75
    F = su3.Ftheta
    dlog = gridmod.gradient(hq, su3.grid) / hq[..., None]    # h^{3/4} d h^{-3/4}
    FR = su3.star(su3.wedge(F, 2, su3.rho_plus, 3), 5)
    return hq, F, omega_contract(su3, F), dlog, FR


def _sharp_into_omega2(su3, one_form):
    om2h = 0.5 * su3.wedge(su3.omega, 2, su3.omega, 2)
    return interior6(su3, su3.sharp(one_form), om2h, 4)


def H_parts(su3, st):
    """(B, L) with H_phi = B + L∧theta for integrable invariant data."""
    hq, F, wF, dlog, FR = _H_pieces(su3)
    F1, F6, F8 = split_two_form(su3, F)
    B = (st.Homega + (wF * hq / 3.0)[..., None] * su3.rho_plus
         + _sharp_into_omega2(su3, dlog + hq[..., None] * FR))
    R = su3.star(su3.wedge(dlog, 1, su3.rho_plus, 3), 4)
    L = -hq[..., None] * (hq[..., None] * (F1 + F6 - F8) + st.pi2 - R)
    return B, L


def H_parts_alt(su3, st):
    """The same split with the h^{-3/2} weight and (omega⌟F)omega/3 - F leg."""
    hq, F, wF, dlog, FR = _H_pieces(su3)
    B = (st.Homega + (wF * hq / 3.0)[..., None] * su3.rho_plus
         + _sharp_into_omega2(su3, dlog + hq[..., None] ** 2 * FR))
    L = -hq[..., None] * (hq[..., None] * (wF[..., None] * su3.omega / 3.0 - F)
                          + st.pi2)
    return B, L


def assemble_theta(su3, base, leg, k):
    """lift(base) + lift(leg)∧theta for a base k-form and (k-1)-form leg."""
    return lift(base, k) + forms.wedge(lift(leg, k - 1), k - 1, theta7(su3), 1)


def split_theta(su3, alpha, k):
    """Inverse of assemble_theta: leg = d/dx^7 ⌟ alpha, base = rest."""
    _, leg = split(alpha, k)
    rest = alpha - forms.wedge(lift(leg, k - 1), k - 1, theta7(su3), 1)
    return split(rest, k)[0], leg


def reduced_H(su3, st, alt=False):
    """H_phi from SU(3) data as a 7D 3-form."""
    B, L = (H_parts_alt if alt else H_parts)(su3, st)
    return assemble_theta(su3, B, L, 3)


def reduction_torsion_check(su3, g2=None, dilaton=None):
    """Compare 7D torsion of the built structure with the reduced formulas."""
    if g2 is None:
        g2, _ = build_invariant_g2(su3, check=False)
    st = su3_torsion_forms(su3)
    tp = tors.torsion_forms_from_T(tors.full_torsion(g2), g2)
    out = {}
    out["tau0"] = gridmod.sup_norm(tp.tau0 - reduced_tau0(su3, st))
    out["tau1"] = gridmod.sup_norm(tp.tau1 - reduced_tau1(su3, st))
    out["tau1_rho_minus"] = gridmod.sup_norm(
        tp.tau1 - reduced_tau1(su3, st, su3.rho_minus))
    out["integrability"], out["sigma2"] = integrability_residual(su3, st)
    out["tau2_7d"] = gridmod.sup_norm(tp.tau2)
    try:
        tors.characteristic_torsion(tp, g2)
        out["H"] = gridmod.sup_norm(tp.H - reduced_H(su3, st))
        out["H_alt"] = gridmod.sup_norm(tp.H - reduced_H(su3, st, alt=True))
    except NotIntegrable:
        out["H"] = out["H_alt"] = float("nan")
    if dilaton is not None:
        hq, F, wF, dlog, FR = _H_pieces(su3)
        df = gridmod.gradient(dilaton, su3.grid)
        w = (np.exp(-4.0 * dilaton) * hq)[..., None]
        out["cc_closed"] = gridmod.sup_norm(su3.d(w * su3.rho_minus, 3))
        out["cc_dilaton"] = gridmod.sup_norm(df - 0.5 * st.nu1
                                             + 0.25 * hq[..., None] * FR)
        out["cc_pi1"] = gridmod.sup_norm(st.pi1 - 2.0 * st.nu1 + dlog
                                         + hq[..., None] * FR)
        out["cc_pi1_alt"] = gridmod.sup_norm(st.pi1 - 2.0 * st.nu1 + dlog)
        out["cc_sigma0"] = gridmod.sup_norm(st.sigma0)
    out["reassembly"] = max(st.reassembly.values())
    return out


# -------------------------------------------------- general reduced rates

def form_contract(alpha, k, beta, l, metric):
    """alpha⌟beta: (1/k!) alpha^{I} beta_{I J}, a (l-k)-form."""
    n = metric.n
    up = forms.expand(forms.raise_form(alpha, k, metric), k, n)
    full = forms.expand(beta, l, n)
    A = up.reshape(up.shape[:-k] + (-1,))
    Bm = full.reshape(full.shape[:-l] + (n ** k, n ** (l - k)))
    out = np.einsum("...a,...ab->...b", A, Bm) / math.factorial(k)
    out = out.reshape(out.shape[:-1] + (n,) * (l - k))
    return forms.compress(out, l - k, n)


def general_rates(su3, C, alt=False):
    """(gamma, lam) with d/dt(e^{-4f} psi) = gamma + lam∧theta.

    Built from -dH_phi + (7/4) C d(tau0 phi) with H_phi = B + L∧theta:
    gamma = -dB - L∧F + (7/4)C (d(tau0 rho_+) + tau0 h^{-3/4} omega∧F) and
    lam = -dL + (7/4)C d(tau0 h^{-3/4} omega). ``alt`` swaps in the
    unmodified H_phi pieces.
    """
    st = su3_torsion_forms(su3)
    B, L = (H_parts_alt if alt else H_parts)(su3, st)
    hq = (su3.h ** -0.75)[..., None]
    t0 = reduced_tau0(su3, st)[..., None]
    F = su3.Ftheta
    c = 1.75 * C
    gam = (-su3.d(B, 3) - su3.wedge(L, 2, F, 2)
           + c * (su3.d(t0 * su3.rho_plus, 3)
                  + su3.wedge(t0 * hq * su3.omega, 2, F, 2)))
    lam = -su3.d(L, 2) + c * su3.d(t0 * hq * su3.omega, 2)
    return gam, lam


def theta_rate(su3, gam, lam):
    """e^{4f} (h^{3/2} omega⌟lam + h^{-3/4} rho_-⌟gam) / 2."""
    w = np.exp(4.0 * su3.dilaton)[..., None]
    h = su3.h[..., None]
    return 0.5 * w * (h ** 1.5 * form_contract(su3.omega, 2, lam, 3, su3.metric)
                      + h ** -0.75 * form_contract(su3.rho_minus, 3, gam, 4,
                                                   su3.metric))


def general_rates_check(field, dilaton, params):
    """General reduced rates against the 7D flow of an invariant structure."""
    from . import flow
    su3 = SU3Field.from_g2(field, dilaton)
    st = flow.FlowState(field, dilaton)
    rhs = flow.flow_rhs(st, params)
    G7, L7 = split_theta(su3, flow.psi_rate_assembled(st, rhs), 4)
    dg = 2.0 * algebra.split_three_form(rhs.dphi3, field.point)[0]
    g = field.metric.g
    g77 = g[..., AXIS, AXIS][..., None]
    da = (dg[..., :AXIS, AXIS] - g[..., :AXIS, AXIS] / g77 * dg[..., AXIS, AXIS][..., None]) / g77
    out = {"scale": gridmod.sup_norm(G7) + gridmod.sup_norm(L7)}
    for alt in (False, True):
        gam, lam = general_rates(su3, params.C, alt=alt)
        tag = "_alt" if alt else ""
        out["gamma" + tag] = gridmod.sup_norm(G7 - gam)
        out["lambda" + tag] = gridmod.sup_norm(L7 - lam)
        out["theta" + tag] = gridmod.sup_norm(da - theta_rate(su3, gam, lam))
    return out


# --------------------------------------------------------- reduced flow

@dataclass(eq=False)
class ReducedRates:
    d_omega2: np.ndarray      # d/dt of e^{-4f} omega^2/2 (4-form)
    d_rho_minus: np.ndarray   # d/dt of e^{-4f} rho_-    (3-form)
    d_dilaton: np.ndarray
    torsion: SU3Torsion


def check_hypotheses(su3, tol=HYPOTHESIS_TOL):
    dh = gridmod.sup_norm(su3.h - 1.0)
    dF = gridmod.sup_norm(su3.Ftheta)
    if dh > tol or dF > tol:
        raise ReductionHypothesisViolated(
            f"reduced flow needs h = 1 and F = 0 (|h-1| = {dh:.2e}, |F| = {dF:.2e})")


def reduced_flow_rhs(su3, params, check=True, tol=HYPOTHESIS_TOL):
    """Rates of (e^{-4f} omega^2/2, e^{-4f} rho_-, f) for h = 1, F = 0.

    Needs an integrable reduced structure (pi1 = 2 nu1, sigma2 = 0). The
    dilaton rate is the 7D one rewritten with |tau3|^2 = |H|^2 - 7 tau0^2/36
    - 4|tau1|^2, H = H_omega - pi2∧dx^7, tau0 = 8 pi0 / 7 and
    tau1 = nu1/2 - sigma0 dx^7 / 3.
    """
    if check:
        check_hypotheses(su3, tol)
    st = su3_torsion_forms(su3)
    if check:
        res, s2 = integrability_residual(su3, st)
        bound = params.integrability_tol * (1.0 + gridmod.sup_norm(st.nu1))
        if max(res, s2) > bound:
            raise NotIntegrable(f"reduced structure not integrable ({res:.2e}, {s2:.2e})")
    C = params.C
    pi0 = st.pi0[..., None]
    d_om2 = -su3.d(st.Homega, 3) + 2.0 * C * su3.d(pi0 * su3.rho_plus, 3)
    d_rm = su3.d(st.pi2, 2) + 2.0 * C * su3.d(pi0 * su3.omega, 2)
    f = su3.dilaton
    df = gridmod.gradient(f, su3.grid)
    lap = gridmod.laplacian(f, su3.metric, su3.gamma, su3.grid)
    src = (lap - params.gamma * su3.inner(df, df, 1)
           - 0.25 * su3.inner(st.nu1, st.nu1, 1) - st.sigma0 ** 2 / 9.0
           + 0.25 * su3.inner(st.Homega, st.Homega, 3)
           + 0.25 * su3.inner(st.pi2, st.pi2, 2)
           - (4.0 / 63.0 + 64.0 * params.sigma / 49.0) * st.pi0 ** 2)
    return ReducedRates(d_om2, d_rm, np.exp(4.0 * f) * src, st)


def alt_dilaton_rate(su3, params, st=None):
    """The dilaton rate with the (4 - gamma) and (28/63 + sigma) weights.

    Kept for comparison only; it disagrees with the 7D equation on
    conformally coclosed data.
    """
    st = su3_torsion_forms(su3) if st is None else st
    f = su3.dilaton
    df = gridmod.gradient(f, su3.grid)
    lap = gridmod.laplacian(f, su3.metric, su3.gamma, su3.grid)
    return np.exp(4.0 * f) * (
        lap + (4.0 - params.gamma) * su3.inner(df, df, 1)
        + 0.25 * su3.inner(st.Homega, st.Homega, 3)
        + 0.25 * su3.inner(st.pi2, st.pi2, 2)
        - (28.0 / 63.0 + params.sigma) * st.pi0 ** 2)


@dataclass(eq=False)
class ReducedState:
    grid: gridmod.Grid     # dim 6
    Omega: np.ndarray      # e^{-4f} omega^2/2
    R: np.ndarray          # e^{-4f} rho_-
    dilaton: np.ndarray
    t: float = 0.0
    guess: np.ndarray = None

    @classmethod
    def from_su3(cls, su3, t=0.0):
        w = np.exp(-4.0 * su3.dilaton)[..., None]
        om2 = 0.5 * su3.wedge(su3.omega, 2, su3.omega, 2)
        guess = lift_theta(su3.omega, 2) + lift(su3.rho_plus, 3)
        return cls(su3.grid, w * om2, w * su3.rho_minus,
                   np.array(su3.dilaton), t, guess)

    @classmethod
    def from_g2(cls, field, dilaton, t=0.0):
        """Split e^{-4f} psi of an invariant 7D structure along dx^7."""
        w = np.exp(-4.0 * dilaton)[..., None]
        base, leg = split(w * field.psi, 4)
        grid6 = gridmod.Grid(field.grid.n, field.grid.active_axes, N6)
        return cls(grid6, base, leg, np.array(dilaton), t, field.phi)


def reconstruct_phi(state):
    """The 7D 3-form whose e^{-4f} psi splits into (Omega, R)."""
    w = np.exp(4.0 * state.dilaton)[..., None]
    psi7 = lift(w * state.Omega, 4) + lift_theta(w * state.R, 3)
    try:
        return algebra.phi_from_psi(psi7, state.guess)
    except NotPositive as exc:
        raise PositivityLost(
            f"reduced state left the positive cone at t = {state.t:.6g}") from exc


def reconstruct(state):
    """SU3Field whose reduced variables are ``state`` (h and a read back)."""
    phi = reconstruct_phi(state)
    grid7 = gridmod.Grid(state.grid.n, state.grid.active_axes, 7)
    return SU3Field.from_g2(gridmod.G2Field.from_phi(phi, grid7), state.dilaton)


def _advance(state, rates, dt, t):
    return ReducedState(state.grid, state.Omega + dt * rates[0],
                        state.R + dt * rates[1], state.dilaton + dt * rates[2],
                        t, state.guess)


def reduced_step(state, params, dt, check=True):
    """One rk4/euler step of the reduced flow.

    With ``check`` the hypotheses h = 1, F = 0 are enforced at the start of
    the step. Elsewhere h and a are recovered from the reconstruction but
    not fed back: the evolved pair (Omega, R) generally stops being of that
    form at O(dt), so one step agrees with the 7D flow only to O(dt^2).
    """
    def rates(s, first):
        su3 = reconstruct(s)
        r = reduced_flow_rhs(su3, params, check=first)
        return (r.d_omega2, r.d_rho_minus, r.d_dilaton)

    k1 = rates(state, check)
    if params.scheme == "euler":
        return _advance(state, k1, dt, state.t + dt)
    k2 = rates(_advance(state, k1, 0.5 * dt, state.t + 0.5 * dt), False)
    k3 = rates(_advance(state, k2, 0.5 * dt, state.t + 0.5 * dt), False)
    k4 = rates(_advance(state, k3, dt, state.t + dt), False)
    comb = tuple((a + 2 * b + 2 * c + d) / 6.0 for a, b, c, d in zip(k1, k2, k3, k4))
    return _advance(state, comb, dt, state.t + dt)


def reduced_rhs_from_7d(field, dilaton, params):
    """The 7D flow rates split along dx^7, in the reduced variables."""
    from . import flow
    st = flow.FlowState(field, dilaton)
    rhs = flow.flow_rhs(st, params)
    rate = flow.psi_rate_assembled(st, rhs)
    base, leg = split(rate, 4)
    return base, leg, rhs.ddilaton


def reduced_rhs_residuals(su3, params):
    """Componentwise sup distance of the reduced rates from the 7D rates."""
    g2, f = build_invariant_g2(su3)
    r = reduced_flow_rhs(su3, params)
    base, leg, dd = reduced_rhs_from_7d(g2, f, params)
    return {"omega2": gridmod.sup_norm(base - r.d_omega2),
            "rho_minus": gridmod.sup_norm(leg - r.d_rho_minus),
            "dilaton": gridmod.sup_norm(dd - r.d_dilaton)}


def matched_step_residuals(su3, params, dt=None):
    """One 7D step and one reduced step from the same data, compared.

    dt defaults to the stable 7D step. Returns sup distances of the reduced
    variables and the step size used.
    """
    from . import flow
    g2, f = build_invariant_g2(su3)
    st7 = flow.FlowState(g2, f)
    dt = flow.stable_dt(st7, params) if dt is None else dt
    s7 = flow.step(st7, params, dt)
    red7 = ReducedState.from_g2(s7.field, s7.dilaton)
    red6 = reduced_step(ReducedState.from_su3(su3), params, dt)
    return {"Omega": gridmod.sup_norm(red7.Omega - red6.Omega),
            "R": gridmod.sup_norm(red7.R - red6.R),
            "dilaton": gridmod.sup_norm(red7.dilaton - red6.dilaton),
            "dt": dt}


REDUCED_COLUMNS = ("t", "M", "compat_residual", "h_deviation", "F_norm",
                   "closed_residual", "integrability_residual", "pi0_norm",
                   "pi2_norm", "Homega_norm", "dHomega_norm")


def reduced_functional(su3):
    """∫ e^{-4f} vol over T^6 x S^1 for h = 1."""
    return 2.0 * np.pi * gridmod.integrate(np.exp(-4.0 * su3.dilaton),
                                           su3.metric.vol, su3.grid)


def reduced_diagnostics(state, su3=None):
    su3 = reconstruct(state) if su3 is None else su3
    st = su3_torsion_forms(su3)
    comp = compatibility_residuals(su3)
    l2 = lambda a, k: np.sqrt(max(gridmod.integrate(
        forms.norm2(a, k, su3.metric), su3.metric.vol, su3.grid), 0.0))
    return {
        "t": state.t,
        "M": reduced_functional(su3),
        "compat_residual": comp["volume"] + comp["omega_rho_plus"],
        "h_deviation": gridmod.sup_norm(su3.h - 1.0),
        "F_norm": gridmod.sup_norm(su3.Ftheta),
        "closed_residual": gridmod.sup_norm(su3.d(state.Omega, 4))
        + gridmod.sup_norm(su3.d(state.R, 3)),
        "integrability_residual": max(integrability_residual(su3, st)),
        "pi0_norm": l2(st.pi0[..., None], 0),
        "pi2_norm": l2(st.pi2, 2),
        "Homega_norm": l2(st.Homega, 3),
        "dHomega_norm": l2(su3.d(st.Homega, 3), 4),
    }


def reduced_fixed_point_residuals(su3):
    """dH_omega, d pi2, pi0, sigma0, sigma2 (sup norms)."""
    st = su3_torsion_forms(su3)
    return {
        "dHomega": gridmod.sup_norm(su3.d(st.Homega, 3)),
        "dpi2": gridmod.sup_norm(su3.d(st.pi2, 2)),
        "pi0": gridmod.sup_norm(st.pi0),
        "sigma0": gridmod.sup_norm(st.sigma0),
        "sigma2": gridmod.sup_norm(st.sigma2),
    }


def stable_dt_reduced(state, params):
    return params.dt_safety * state.grid.spacing ** 2 * float(
        np.min(np.exp(-4.0 * state.dilaton)))


def run_reduced(initial, params, dt=None, on_sample=None):
    """Integrate the reduced flow to params.t_end; returns (rows, final).

    The hypotheses are checked on the initial state only; their later drift
    is reported in the h_deviation and F_norm columns. On a numerical abort
    the exception carries ``partial = (rows, last good state)``.
    """
    state, rows, nsteps = initial, [], 0

    def sample(s):
        row = reduced_diagnostics(s)
        rows.append(row)
        if on_sample is not None:
            on_sample(s, row)

    sample(state)
    try:
        while state.t < params.t_end * (1.0 - 1e-12):
            h = dt if dt is not None else stable_dt_reduced(state, params)
            left = params.t_end - state.t
            h = left / math.ceil(left / h * (1.0 - 1e-12))
            nxt = reduced_step(state, params, h, check=nsteps == 0)
            if not all(np.all(np.isfinite(a)) for a in (nxt.Omega, nxt.R, nxt.dilaton)):
                raise NonFinite(f"non-finite reduced state at t = {nxt.t:.6g}")
            nxt.guess = reconstruct_phi(nxt)
            state = nxt
            nsteps += 1
            if nsteps % params.snapshot_every == 0 or state.t >= params.t_end * (1 - 1e-12):
                sample(state)
    except NumericalAbort as exc:
        exc.partial = (rows, state)
        raise
    return rows, state


# ------------------------------------------------------------ test data

def coframe_su3(grid, rng, eps, modes=2):
    """Conformally coclosed invariant data with h = 1 and F = 0.

    Only grid axis 0 may be active. The coframe E^0 = l dx^0,
    E^j = w^j dx^0 + K^j_k dx^k with K = diag(e^{2f}, e^f S) and S in the
    symplectic group of sigma' (rho_-0 restricted away from index 0 is
    e^1∧sigma'), so the parts of e^{-4f} omega^2/2 and e^{-4f} rho_- with no
    dx^0 leg are constant, hence closed.
    """
    from scipy.linalg import expm
    from .initial import band_limited

    if grid.active_axes != (0,) or grid.dim != N6:
        raise ValueError("coframe data needs a 6D grid with active axis 0")
    bl = lambda m: band_limited(grid, rng, m, modes, eps)
    f = bl(1)[..., 0]
    lam = np.exp(bl(1)[..., 0])
    w = bl(5)
    Jp = np.zeros((4, 4))
    Jp[0, 2], Jp[2, 0], Jp[1, 3], Jp[3, 1] = 1.0, -1.0, -1.0, 1.0
    A = np.zeros(grid.shape + (4, 4))
    iu = np.triu_indices(4)
    A[..., iu[0], iu[1]] = bl(10)
    A = A + np.swapaxes(A, -1, -2)
    X = np.einsum("ij,...jk->...ik", np.linalg.inv(Jp), A)
    S = np.array([expm(x) for x in X.reshape(-1, 4, 4)]).reshape(X.shape)
    u = np.zeros(grid.shape + (6, 6))
    u[..., 0, 0] = lam
    u[..., 1:, 0] = w
    u[..., 1, 1] = np.exp(2.0 * f)
    u[..., 2:, 2:] = np.exp(f)[..., None, None] * S
    om0, rp0 = standard_su3()
    return SU3Field(grid, forms.pullback(u, om0, 2, N6),
                    forms.pullback(u, rp0, 3, N6), 1.0,
                    np.zeros(grid.shape + (6,)), f)


def invariant_coclosed(grid7, rng, eps, dilaton_amplitude=None, modes=2):
    """Invariant conformally coclosed 7D data (h, a and F generally nonzero)."""
    from .initial import conformally_coclosed
    if AXIS in grid7.active_axes:
        raise ValueError("the circle axis must be inactive")
    return conformally_coclosed(grid7, rng, eps, dilaton_amplitude, modes)
