"""Named identity checks with tolerances.

Each check returns a Check(name, residual, tol). Suites bundle checks so
the ``verify`` command and the test-suite run the same code. Pointwise
tensor residuals are measured relative to the size of the terms involved,
max |lhs - rhs| / (1 + max |rhs|), because random GL pullbacks produce
metrics whose entries range over a few orders of magnitude.
"""

from dataclasses import dataclass

import numpy as np

from . import algebra, forms
from . import grid as gridmod
from . import torsion as tors
from .initial import coclosed_field, random_dilaton

N = 7


@dataclass(frozen=True)
class Check:
    name: str
    residual: float
    tol: float

    @property
    def ok(self):
        return bool(np.isfinite(self.residual) and self.residual <= self.tol)

    def line(self):
        tag = "PASS" if self.ok else "FAIL"
        return f"{tag}  {self.name:<26s} {self.residual:.3e}  (tol {self.tol:.0e})"


def rel(lhs, rhs):
    """Pointwise relative residual, worst over the batch."""
    lhs, rhs = np.asarray(lhs), np.asarray(rhs)
    diff = np.abs(lhs - rhs).reshape(lhs.shape[:1] + (-1,)).max(axis=1)
    size = np.abs(rhs).reshape(rhs.shape[:1] + (-1,)).max(axis=1)
    return float(np.max(diff / (1.0 + size)))


# ------------------------------------------------------------ pointwise

def contraction_checks(pt):
    g, gi = pt.g, pt.ginv
    P3, P4 = pt.phi_t, pt.psi_t
    P3m = np.einsum("...ij,...jbc->...ibc", gi, P3, optimize=True)          # first slot up
    P4m = np.einsum("...ij,...jbcd->...ibcd", gi, P4, optimize=True)
    P4mm = np.einsum("...ij,...ajcd->...aicd", gi, P4m, optimize=True)      # first two up
    gg = np.einsum("...ai,...bj->...abij", g, g, optimize=True)
    out = {}
    # phi_abc phi_ij^c
    lhs = np.einsum("...abc,...ijd,...cd->...abij", P3, P3, gi, optimize=True)
    out["phi.phi (one index)"] = rel(lhs, gg - np.swapaxes(gg, -1, -2) + P4)
    out["phi.phi (two indices)"] = rel(
        np.einsum("...abc,...ibc->...ai", P3, np.einsum("...bp,...cq,...ipq->...ibc",
                                                        gi, gi, P3)), 6 * g)
    full = np.einsum("...abc,...abc->...", P3, pt.phi_up, optimize=True)
    out["phi.phi (full)"] = rel(full[:, None], np.full((P3.shape[0], 1), 42.0))
    lhs = np.einsum("...abcd,...abmn->...cdmn", P4mm, P4, optimize=True)
    rhs = (4 * np.einsum("...cm,...dn->...cdmn", g, g, optimize=True)
           - 4 * np.einsum("...cn,...dm->...cdmn", g, g, optimize=True) + 2 * P4)
    out["psi.psi (two indices)"] = rel(lhs, rhs)
    out["psi.psi (three indices)"] = rel(
        np.einsum("...abcd,...mbcd->...am", P4,
                  np.einsum("...bp,...cq,...dr,...mpqr->...mbcd", gi, gi, gi, P4, optimize=True)),
        24 * g)
    full = np.einsum("...abcd,...abcd->...", P4, pt.psi_up, optimize=True)
    out["psi.psi (full)"] = rel(full[:, None], np.full((P4.shape[0], 1), 168.0))
    lhs = np.einsum("...ipq,...ijkl->...pqjkl", P3m, P4, optimize=True)
    rhs = (np.einsum("...pj,...qkl->...pqjkl", g, P3, optimize=True)
           - np.einsum("...jq,...pkl->...pqjkl", g, P3, optimize=True)
           + np.einsum("...pk,...jql->...pqjkl", g, P3, optimize=True)
           - np.einsum("...kq,...jpl->...pqjkl", g, P3, optimize=True)
           + np.einsum("...pl,...jkq->...pqjkl", g, P3, optimize=True)
           - np.einsum("...lq,...jkp->...pqjkl", g, P3, optimize=True))
    out["phi.psi"] = rel(lhs, rhs)
    return out


def p_matrix(pt):
    """Matrix of P acting on compressed 2-forms, batched: (..., 21, 21)."""
    cols = []
    for I in range(21):
        e = np.zeros(pt.batch_shape + (21,))
        e[..., I] = 1.0
        cols.append(algebra.matrix_two_form(
            algebra.p_operator(algebra.two_form_matrix(e), pt)))
    return np.stack(cols, -1)


def p_spectrum_residual(pt):
    """Distance of the sorted P spectrum from {-2 x14, 4 x7}."""
    target = np.array([-2.0] * 14 + [4.0] * 7)
    ev = np.sort(np.linalg.eigvals(p_matrix(pt)).real, axis=-1)
    return float(np.max(np.abs(ev - target)))


def diamond_checks(pt, rng):
    shape = pt.batch_shape
    A = rng.standard_normal(shape + (N, N))
    parts = algebra.decompose_endo(A, pt)
    X = rng.standard_normal(shape + (N,))
    Xphi = algebra.two_form_matrix(algebra.contract_phi(X, pt))
    tr = parts.trace[..., None]
    out = {
        "(X⌟phi)⋄phi = 3 X⌟psi": rel(algebra.diamond(Xphi, "phi", pt),
                                     3 * algebra.contract_psi(X, pt)),
        "(X⌟phi)⋄psi = -3 X∧phi": rel(algebra.diamond(Xphi, "psi", pt),
                                      -3 * forms.wedge(pt.flat(X), 1, pt.phi, 3)),
        "A14⋄phi = A14⋄psi = 0": max(
            rel(algebra.diamond(parts.A14, "phi", pt), 0 * pt.phi),
            rel(algebra.diamond(parts.A14, "psi", pt), 0 * pt.psi)),
        "A1⋄phi, A1⋄psi": max(
            rel(algebra.diamond(parts.A1, "phi", pt), 3 / 7 * tr * pt.phi),
            rel(algebra.diamond(parts.A1, "psi", pt), 4 / 7 * tr * pt.psi)),
        "*(A⋄phi)": rel(pt.star(algebra.diamond(A, "phi", pt), 3),
                        algebra.diamond(0.75 * parts.A1 - parts.A27 + parts.A7,
                                        "psi", pt)),
    }
    return out


def defining_relation_residual(pt):
    """(e_i⌟phi)∧(e_j⌟phi)∧phi = 6 g_ij vol, relative."""
    e = np.eye(N)
    cut = [forms.interior(np.broadcast_to(e[i], pt.batch_shape + (N,)), pt.phi, 3)
           for i in range(N)]
    lhs = np.zeros(pt.batch_shape + (N, N))
    for i in range(N):
        for j in range(N):
            lhs[..., i, j] = forms.wedge(forms.wedge(cut[i], 2, cut[j], 2), 4,
                                         pt.phi, 3)[..., 0]
    return rel(lhs, 6 * pt.g * pt.vol[..., None, None])


def algebra_suite(count=1000, seed=0):
    """Pointwise identities on random GL pullbacks of phi0."""
    rng = np.random.default_rng(seed)
    phis, _ = algebra.random_positive_phis(rng, count)
    pt = algebra.PointG2.from_phi(phis)
    checks = [Check(k, v, 1e-12) for k, v in contraction_checks(pt).items()]
    checks.append(Check("P spectrum {4 x7, -2 x14}", p_spectrum_residual(pt), 1e-10))
    checks += [Check(k, v, 1e-12) for k, v in diamond_checks(pt, rng).items()]
    checks.append(Check("defining relation", defining_relation_residual(pt), 1e-12))
    return checks


# ------------------------------------------------------- conformal table

def conformal_checks(field, dilaton):
    """Conformal scaling table for phi = e^{3f} phi~ on a grid."""
    f = dilaton[..., None]
    big = gridmod.G2Field.from_phi(np.exp(3 * f) * field.phi, field.grid)
    tp_s = tors.torsion_forms_from_T(tors.full_torsion(field), field)
    tp_b = tors.torsion_forms_from_T(tors.full_torsion(big), big)
    tors.characteristic_torsion(tp_s, field)
    tors.characteristic_torsion(tp_b, big)
    df = field.grad(dilaton)
    e = np.exp(dilaton)
    ps = field.point
    Hs = tp_s.H - algebra.contract_psi(ps.sharp(df), ps)
    flat = lambda x: x.reshape(x.shape[0], -1) if x.ndim > 1 else x[:, None]
    out = {
        "g = e^{2f} g~": rel(flat(big.metric.g), flat(e[..., None, None] ** 2 * field.metric.g)),
        "vol = e^{7f} vol~": rel(flat(big.metric.vol), flat(e ** 7 * field.metric.vol)),
        "psi = e^{4f} psi~": rel(flat(big.psi), flat(e[..., None] ** 4 * field.psi)),
        "tau0 = e^{-f} tau0~": rel(flat(tp_b.tau0), flat(tp_s.tau0 / e)),
        "tau1 = tau1~ + df": rel(flat(tp_b.tau1), flat(tp_s.tau1 + df)),
        "tau2 = e^{f} tau2~": rel(flat(tp_b.tau2), flat(e[..., None] * tp_s.tau2)),
        "tau3 = e^{2f} tau3~": rel(flat(tp_b.tau3), flat(e[..., None] ** 2 * tp_s.tau3)),
        "H = e^{2f}(H~ - df⌟psi~)": rel(flat(tp_b.H), flat(e[..., None] ** 2 * Hs)),
    }
    return out


def conformal_suite(factors=20, n=64, eps=0.05, amplitude=0.3, seed=1):
    grid = gridmod.Grid(n, (0,))
    rng = np.random.default_rng(seed)
    field = coclosed_field(grid, rng, eps)
    worst = {}
    for _ in range(factors):
        f = random_dilaton(grid, rng, amplitude)
        for k, v in conformal_checks(field, f).items():
            worst[k] = max(worst.get(k, 0.0), v)
    return [Check(k, v, 1e-10) for k, v in worst.items()]


SUITES = {"algebra": algebra_suite, "conformal": conformal_suite}


def run_suites(names=None, **kw):
    names = list(SUITES) if names is None else names
    out = []
    for name in names:
        out += SUITES[name](**kw.get(name, {}))
    return out
