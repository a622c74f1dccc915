"""The generic heterotic G2 flow on grid fields.

The state is (phi, dilaton). The 3-form rate is assembled pointwise as
S⋄phi + X⌟psi, which on conformally coclosed data is equivalent to the
exact-form evolution of e^{-4 dilaton} psi; that exact-form route is kept
as a cross-check.
"""

import math
import warnings
from dataclasses import dataclass, field as dc_field, replace

import numpy as np

from . import algebra
from . import grid as gridmod
from . import torsion as tors
from .errors import (ConstraintDrift, G2FlowError, NonFinite, NotPositive,
                     PositivityLost, ValidationError)

ILLPOSED_BOUND = -1.0 / 3.0
ABORT_RESIDUAL = 1e-3
SCHEMES = ("rk4", "euler")


@dataclass(frozen=True)
class FlowParams:
    C: float = -4.0 / 3.0
    gamma: float = 3.0
    sigma: float = 42.0 / 144.0
    dt_safety: float = 0.1
    t_end: float = 0.1
    scheme: str = "rk4"
    snapshot_every: int = 1
    allow_illposed: bool = False
    integrability_tol: float = tors.INTEGRABILITY_TOL
    abort_residual: float = ABORT_RESIDUAL

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in ("C", "gamma", "sigma", "dt_safety", "t_end"):
            if not math.isfinite(getattr(self, name)):
                raise ValidationError(name, "must be finite")
        if not 0.0 < self.dt_safety <= 1.0:
            raise ValidationError("dt_safety", "must lie in (0, 1]")
        if self.t_end < 0:
            raise ValidationError("t_end", "must be non-negative")
        if self.scheme not in SCHEMES:
            raise ValidationError("scheme", f"must be one of {SCHEMES}")
        if int(self.snapshot_every) < 1:
            raise ValidationError("snapshot_every", "must be >= 1")
        if self.C >= ILLPOSED_BOUND:
            msg = f"C = {self.C} is not below -1/3; the flow is not known to be well posed"
            if not self.allow_illposed:
                raise ValidationError("C", msg)
            warnings.warn(msg, RuntimeWarning, stacklevel=3)

    @property
    def monotone_bound(self):
        """sigma must stay below this for the dilaton functional to increase."""
        return 7.0 * (21.0 * self.C - 2.0) / 144.0

    @property
    def is_monotone_regime(self):
        return self.gamma < -1.0 and self.sigma < self.monotone_bound


PRESETS = {
    "heterotic": dict(C=-4.0 / 3.0, gamma=3.0, sigma=42.0 / 144.0),
    "monotone": dict(C=-4.0 / 3.0, gamma=-2.0, sigma=-2.0),
}


def preset(name, **overrides):
    try:
        base = dict(PRESETS[name])
    except KeyError:
        raise ValidationError("preset", f"unknown preset {name!r}") from None
    base.update(overrides)
    return FlowParams(**base)


@dataclass(eq=False)
class FlowState:
    field: gridmod.G2Field
    dilaton: np.ndarray
    t: float = 0.0

    @property
    def grid(self):
        return self.field.grid

    @property
    def phi(self):
        return self.field.phi

    @classmethod
    def from_arrays(cls, phi, dilaton, grid, t=0.0):
        return cls(gridmod.G2Field.from_phi(phi, grid), np.asarray(dilaton), t)


@dataclass(eq=False)
class RHS:
    """Rates plus the intermediate geometry they were built from."""

    dphi3: np.ndarray
    ddilaton: np.ndarray
    torsion: tors.TorsionPackage
    curvature: tors.CurvaturePackage
    S: np.ndarray
    V: np.ndarray

    def __iter__(self):
        return iter((self.dphi3, self.ddilaton))


def geometry(state, params=None):
    """Torsion package with H, and curvature, of the current state."""
    tol = params.integrability_tol if params else tors.INTEGRABILITY_TOL
    fld = state.field
    tp = tors.torsion_forms_from_T(tors.full_torsion(fld), fld)
    tors.characteristic_torsion(tp, fld, tol)
    curv = tors.ricci_from_torsion(tp, fld)
    return tp, curv


def flow_rhs(state, params):
    """(d phi/dt, d dilaton/dt) for conformally coclosed states."""
    fld = state.field
    pt = fld.point
    tp, curv = geometry(state, params)
    f = state.dilaton
    e4 = np.exp(4.0 * f)
    df = fld.grad(f)
    hess = fld.hessian(f)
    lap = np.einsum("...ij,...ij->...", pt.ginv, hess)
    df2 = pt.inner(df, df, 1)
    tau0 = tp.tau0
    C = params.C
    Tsym = 0.5 * (tp.T + np.swapaxes(tp.T, -1, -2))
    scal = (7.0 / 24.0 - params.sigma) * tau0 ** 2 + (3.0 - params.gamma) * df2
    S = (-curv.Ric + 0.25 * tors.H_squared(tp.H, pt) - 4.0 * hess
         + 1.75 * C * tau0[..., None, None] * Tsym
         + scal[..., None, None] * pt.g) * e4[..., None, None]
    V = 7.0 / 12.0 * e4[..., None] * ((1.0 + 3.0 * C) * fld.grad(tau0)
                                      + 9.0 * C * tau0[..., None] * df)
    dphi3 = (algebra.diamond(S, "phi", pt)
             - algebra.contract_psi(pt.sharp(V), pt))
    ddil = e4 * (lap - params.gamma * df2
                 + 0.25 * pt.inner(tp.tau3, tp.tau3, 3)
                 - params.sigma * tau0 ** 2)
    return RHS(dphi3, ddil, tp, curv, S, V)


def conformal_psi(state):
    """e^{-4 dilaton} psi."""
    return np.exp(-4.0 * state.dilaton)[..., None] * state.field.psi


def psi_rate_assembled(state, rhs):
    """d/dt(e^{-4f} psi) by the chain rule through (dphi3, ddilaton)."""
    pt = state.field.point
    dpsi = algebra.psi_variation(rhs.dphi3, pt)
    return np.exp(-4.0 * state.dilaton)[..., None] * (
        dpsi - 4.0 * rhs.ddilaton[..., None] * pt.psi)


def psi_rate_exact(state, params, tp=None):
    """-dH + (7/4) C d(tau0 phi)."""
    fld = state.field
    if tp is None:
        tp, _ = geometry(state, params)
    return (-fld.d(tp.H, 3)
            + 1.75 * params.C * fld.d(tp.tau0[..., None] * fld.phi, 3))


def cross_route_residual(state, params):
    rhs = flow_rhs(state, params)
    a = psi_rate_assembled(state, rhs)
    b = psi_rate_exact(state, params, rhs.torsion)
    return gridmod.sup_norm(a - b), gridmod.sup_norm(b)


# -------------------------------------------------------- time stepping

def stable_dt(state, params):
    h = state.grid.spacing
    return params.dt_safety * h * h * float(np.min(np.exp(-4.0 * state.dilaton)))


def _make_state(phi, dil, grid, t):
    if not (np.all(np.isfinite(phi)) and np.all(np.isfinite(dil))):
        raise NonFinite(f"non-finite values at t = {t:.6g}")
    try:
        return FlowState(gridmod.G2Field.from_phi(phi, grid), dil, t)
    except NotPositive as exc:
        raise PositivityLost(f"phi left the positive cone at t = {t:.6g}") from exc


def step(state, params, dt=None):
    """Advance one explicit step (rk4 or euler)."""
    if dt is None:
        dt = stable_dt(state, params)
    grid = state.grid
    phi0, f0, t0 = state.phi, state.dilaton, state.t
    k1 = flow_rhs(state, params)
    if params.scheme == "euler":
        return _make_state(phi0 + dt * k1.dphi3, f0 + dt * k1.ddilaton,
                           grid, t0 + dt)
    s2 = _make_state(phi0 + 0.5 * dt * k1.dphi3, f0 + 0.5 * dt * k1.ddilaton,
                     grid, t0 + 0.5 * dt)
    k2 = flow_rhs(s2, params)
    s3 = _make_state(phi0 + 0.5 * dt * k2.dphi3, f0 + 0.5 * dt * k2.ddilaton,
                     grid, t0 + 0.5 * dt)
    k3 = flow_rhs(s3, params)
    s4 = _make_state(phi0 + dt * k3.dphi3, f0 + dt * k3.ddilaton, grid,
                     t0 + dt)
    k4 = flow_rhs(s4, params)
    phi = phi0 + dt / 6.0 * (k1.dphi3 + 2 * k2.dphi3 + 2 * k3.dphi3 + k4.dphi3)
    dil = f0 + dt / 6.0 * (k1.ddilaton + 2 * k2.ddilaton + 2 * k3.ddilaton
                           + k4.ddilaton)
    return _make_state(phi, dil, grid, t0 + dt)


# ---------------------------------------------------------- diagnostics

COLUMNS = ("t", "M", "dM_dt_formula", "dM_dt_fd", "coclosed_residual",
           "tau2_residual", "tau0_norm", "tau1_norm", "tau3_norm", "H_norm",
           "min_detB", "max_T2", "Splus_min", "Splus_max")


def dilaton_functional(state):
    """M = ∫ e^{-4f} Vol."""
    return state.field.integrate(np.exp(-4.0 * state.dilaton))


def dM_dt_formula(state, params, tp=None):
    fld = state.field
    pt = fld.point
    if tp is None:
        tp, _ = geometry(state, params)
    df = fld.grad(state.dilaton)
    dens = (-(3.0 * params.gamma + 3.0) * pt.inner(df, df, 1)
            + pt.inner(tp.tau3, tp.tau3, 3)
            + 3.0 * (params.monotone_bound - params.sigma) * tp.tau0 ** 2)
    return fld.integrate(dens)


def coclosed_residual(state):
    """‖d(e^{-4f} psi)‖ in L2."""
    fld = state.field
    return gridmod.l2_norm(fld.d(conformal_psi(state), 4), 5, fld.metric,
                           fld.grid)


def diagnostics(state, params):
    """One DiagnosticsRow as a dict (dM_dt_fd is filled in after the run)."""
    fld = state.field
    pt = fld.point
    T = tors.full_torsion(fld)
    tp = tors.torsion_forms_from_T(T, fld)
    tau2 = tors.tau2_residual(tp)
    tors.characteristic_torsion(tp, fld, params.integrability_tol)
    curv = tors.ricci_from_torsion(tp, fld)
    Sp = tors.generalized_scalar(tp, fld, curv=curv)
    l2 = lambda a, k: gridmod.l2_norm(a, k, pt.metric, fld.grid)
    detB = np.linalg.det(algebra.hitchin_B(fld.phi))
    return {
        "t": state.t,
        "M": dilaton_functional(state),
        "dM_dt_formula": dM_dt_formula(state, params, tp),
        "dM_dt_fd": float("nan"),
        "coclosed_residual": coclosed_residual(state),
        "tau2_residual": tau2,
        "tau0_norm": l2(tp.tau0[..., None], 0),
        "tau1_norm": l2(tp.tau1, 1),
        "tau3_norm": l2(tp.tau3, 3),
        "H_norm": l2(tp.H, 3),
        "min_detB": float(np.min(detB)),
        "max_T2": float(np.max(pt.endo_inner(T, T))),
        "Splus_min": float(np.min(Sp)),
        "Splus_max": float(np.max(Sp)),
    }


def fill_fd(rows):
    """Centered differences of M (one-sided at the ends)."""
    if len(rows) < 2:
        return rows
    t = np.array([r["t"] for r in rows])
    M = np.array([r["M"] for r in rows])
    fd = np.gradient(M, t, edge_order=2 if len(rows) > 2 else 1)
    for r, v in zip(rows, fd):
        r["dM_dt_fd"] = float(v)
    return rows


@dataclass(eq=False)
class RunResult:
    rows: list
    states: list
    final: FlowState
    steps: int = 0
    aborted: BaseException = None
    meta: dict = dc_field(default_factory=dict)


def run(initial, params, dt=None, on_sample=None, keep_states=True,
        raise_on_abort=True):
    """Integrate to params.t_end, sampling every params.snapshot_every steps.

    ``on_sample(state, row)`` is called at each sample (t = 0 included). On
    a numerical abort the last good state is sampled before re-raising, so
    callers can flush a final snapshot.
    """
    state = initial
    rows, states = [], []
    nsteps = 0

    def sample(s):
        row = diagnostics(s, params)
        rows.append(row)
        if keep_states:
            states.append(s)
        if on_sample is not None:
            on_sample(s, row)
        if row["coclosed_residual"] > params.abort_residual:
            raise ConstraintDrift(
                f"coclosed residual {row['coclosed_residual']:.3e} at t = {s.t:.6g}")

    aborted = None
    try:
        sample(state)
        while state.t < params.t_end * (1.0 - 1e-12):
            h = dt if dt is not None else stable_dt(state, params)
            # equal steps that land on t_end
            left = params.t_end - state.t
            h = left / math.ceil(left / h * (1.0 - 1e-12))
            state = step(state, params, h)
            nsteps += 1
            if nsteps % params.snapshot_every == 0 or state.t >= params.t_end * (1 - 1e-12):
                sample(state)
    except G2FlowError as exc:  # numerical aborts and integrability failures
        aborted = exc
        if raise_on_abort:
            fill_fd(rows)
            exc.partial = RunResult(rows, states, state, nsteps, exc)
            raise
    fill_fd(rows)
    return RunResult(rows, states, state, nsteps, aborted)


# ------------------------------------------------------------- frames

def to_coclosed_frame(state):
    """(phi~ = e^{-3f} phi as a G2Field, dilaton, ‖d psi~‖ in L2)."""
    fld = state.field
    tilde = gridmod.G2Field.from_phi(
        np.exp(-3.0 * state.dilaton)[..., None] * fld.phi, fld.grid)
    res = gridmod.l2_norm(tilde.d(tilde.psi, 4), 5, tilde.metric, tilde.grid)
    return tilde, state.dilaton, res


@dataclass
class FixedPointResidual:
    dH: float
    tau0: float
    Splus: float
    coclosed: float

    def as_tuple(self):
        return (self.dH, self.tau0, self.Splus, self.coclosed)


def fixed_point_residual(state, params=None):
    """L2 norms of dH, tau0, S+ and d(e^{-4f} psi).

    All four vanish at a fixed point of the flow with gamma = 3 and
    sigma = 42/144; the norms themselves do not depend on the parameters.
    """
    fld = state.field
    tp = tors.torsion_forms_from_T(tors.full_torsion(fld), fld)
    tol = params.integrability_tol if params else tors.INTEGRABILITY_TOL
    tors.characteristic_torsion(tp, fld, tol)
    Sp = tors.generalized_scalar(tp, fld)
    l2 = lambda a, k: gridmod.l2_norm(a, k, fld.metric, fld.grid)
    return FixedPointResidual(l2(fld.d(tp.H, 3), 4), l2(tp.tau0[..., None], 0),
                              l2(Sp[..., None], 0), coclosed_residual(state))


def conformal_field_state(state, c):
    """Shift the dilaton by a constant c and rescale phi by e^{3c}."""
    phi = math.exp(3.0 * c) * state.phi
    return replace(state, field=gridmod.G2Field.from_phi(phi, state.grid),
                   dilaton=state.dilaton + c)
