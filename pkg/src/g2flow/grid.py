"""Periodic grids on T^7 with k active axes and spectral calculus on them.

Field arrays have the grid axes first, then component axes. A k-form field
on a 7D grid is (n,)*k_active + (C(7,k),). Fields are constant along the
inactive axes, so derivatives along those vanish identically.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import algebra, forms
from .errors import NonFinite

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class Grid:
    n: int
    active_axes: tuple
    dim: int = 7

    def __post_init__(self):
        axes = tuple(int(a) for a in self.active_axes)
        object.__setattr__(self, "active_axes", axes)
        if not 1 <= len(axes) <= 3:
            raise ValueError("between one and three active axes are supported")
        if len(set(axes)) != len(axes) or any(not 0 <= a < self.dim for a in axes):
            raise ValueError(f"active axes must be distinct in [0, {self.dim})")
        if self.n < 8 or self.n & (self.n - 1):
            raise ValueError("n must be a power of two >= 8")

    @property
    def k(self):
        return len(self.active_axes)

    @property
    def shape(self):
        return (self.n,) * self.k

    @property
    def spacing(self):
        return TWO_PI / self.n

    @cached_property
    def coords(self):
        """Coordinate arrays x[a] for every manifold axis (zeros if inactive)."""
        x1 = np.arange(self.n) * self.spacing
        mesh = np.meshgrid(*([x1] * self.k), indexing="ij")
        out = [np.zeros(self.shape) for _ in range(self.dim)]
        for pos, ax in enumerate(self.active_axes):
            out[ax] = mesh[pos]
        return out

    @cached_property
    def _wavenumbers(self):
        kk = np.fft.rfftfreq(self.n, d=1.0 / self.n)
        odd = kk.copy()
        odd[-1] = 0.0  # Nyquist mode carries no odd derivative
        return kk, odd

    def sub(self, dim):
        return Grid(self.n, self.active_axes, dim)

    def volume_factor(self):
        """Weight per sample: h^k times 2π for every inactive axis."""
        return self.spacing ** self.k * TWO_PI ** (self.dim - self.k)


def partial_derivative(f, axis, grid, order=1):
    """Spectral ∂_axis of a field (grid axes leading)."""
    f = np.asarray(f, dtype=float)
    if axis not in grid.active_axes:
        return np.zeros_like(f)
    pos = grid.active_axes.index(axis)
    kk, odd = grid._wavenumbers
    mult = (1j * (odd if order % 2 else kk)) ** order
    shape = [1] * f.ndim
    shape[pos] = mult.size
    F = np.fft.rfft(f, axis=pos)
    return np.fft.irfft(F * mult.reshape(shape), n=grid.n, axis=pos)


def gradient(f, grid):
    """∂_c f for every manifold axis c, inserted right after the grid axes."""
    f = np.asarray(f, dtype=float)
    parts = [partial_derivative(f, c, grid) for c in range(grid.dim)]
    return np.stack(parts, axis=grid.k)


def exterior_derivative(alpha, k, grid):
    if k >= grid.dim:
        return np.zeros(np.shape(alpha)[:-1] + (0,))
    return forms.exterior_from_gradient(gradient(alpha, grid), k, grid.dim)


def codifferential(alpha, k, metric, grid):
    """d*α = (-1)^{n(k+1)+1} *d* α, so that d*df = -Δf."""
    if k < 1:
        raise ValueError("codifferential needs k >= 1")
    n = grid.dim
    s = forms.hodge_star(alpha, k, metric)
    ds = exterior_derivative(s, n - k, grid)
    return (-1) ** (n * (k + 1) + 1) * forms.hodge_star(ds, n - k + 1, metric)


def integrate(f, vol, grid):
    """∫ f vol over T^dim (equal-weight periodic rule)."""
    return float(np.sum(np.asarray(f) * vol) * grid.volume_factor())


def christoffels(metric, grid):
    """Γ[..., k, i, j] = ½ g^{kl}(∂_i g_jl + ∂_j g_il − ∂_l g_ij)."""
    dg = gradient(metric.g, grid)         # [..., c, i, j] = ∂_c g_ij
    low = 0.5 * (np.einsum("...ijl->...ijl", dg)           # ∂_i g_jl
                 + np.einsum("...jil->...ijl", dg)         # ∂_j g_il
                 - np.einsum("...lij->...ijl", dg))        # ∂_l g_ij
    return np.einsum("...kl,...ijl->...kij", metric.ginv, low)


def covariant_derivative(T, gamma, grid):
    """∇_a T_{b1..br} for a covariant tensor field with r trailing axes."""
    T = np.asarray(T, dtype=float)
    r = T.ndim - grid.k
    out = gradient(T, grid)
    letters = "bcdefgh"[:r]
    for s in range(r):
        src = letters[:s] + "m" + letters[s + 1:]
        out = out - np.einsum(f"...ma{letters[s]},...{src}->...a{letters}",
                              gamma, T)
    return out


def hessian(f, gamma, grid):
    return covariant_derivative(gradient(f, grid), gamma, grid)


def laplacian(f, metric, gamma, grid):
    """Δf = g^ij ∇_i ∇_j f."""
    return np.einsum("...ij,...ij->...", metric.ginv, hessian(f, gamma, grid))


def riemann(metric, gamma, grid):
    """Rm[..., r, s, m, n] = R_{rsmn} = g_{ra} R^a_{smn}.

    R^a_{smn} = ∂_m Γ^a_{ns} − ∂_n Γ^a_{ms} + Γ^a_{mλ}Γ^λ_{ns} − Γ^a_{nλ}Γ^λ_{ms},
    and Ric_{sn} = R^a_{san}.
    """
    dG = gradient(gamma, grid)            # [..., m, a, n, s] = ∂_m Γ^a_ns
    up = (np.einsum("...mans->...asmn", dG) - np.einsum("...nams->...asmn", dG)
          + np.einsum("...aml,...lns->...asmn", gamma, gamma)
          - np.einsum("...anl,...lms->...asmn", gamma, gamma))
    return np.einsum("...ra,...asmn->...rsmn", metric.g, up)


def ricci_from_riemann(Rm, metric):
    # Ric_sn = R^a_san = g^{ar} R_rsan
    return np.einsum("...ar,...rsan->...sn", metric.ginv, Rm)


@dataclass(eq=False)
class G2Field:
    """A G2-structure sampled on a grid."""

    grid: Grid
    point: algebra.PointG2

    @classmethod
    def from_phi(cls, phi, grid):
        phi = np.asarray(phi, dtype=float)
        if phi.shape != grid.shape + (35,):
            raise ValueError(f"phi must have shape {grid.shape + (35,)}")
        if not np.all(np.isfinite(phi)):
            raise NonFinite("phi has non-finite entries")
        return cls(grid, algebra.PointG2.from_phi(phi))

    @classmethod
    def flat(cls, grid):
        phi = np.broadcast_to(algebra.standard_phi0(), grid.shape + (35,))
        return cls.from_phi(phi.copy(), grid)

    @property
    def phi(self):
        return self.point.phi

    @property
    def psi(self):
        return self.point.psi

    @property
    def metric(self):
        return self.point.metric

    @cached_property
    def gamma(self):
        return christoffels(self.metric, self.grid)

    def d(self, alpha, k):
        return exterior_derivative(alpha, k, self.grid)

    def codiff(self, alpha, k):
        return codifferential(alpha, k, self.metric, self.grid)

    def integrate(self, f):
        return integrate(f, self.metric.vol, self.grid)

    def grad(self, f):
        return gradient(f, self.grid)

    def nabla(self, T):
        return covariant_derivative(T, self.gamma, self.grid)

    def laplacian(self, f):
        return laplacian(f, self.metric, self.gamma, self.grid)

    def hessian(self, f):
        return hessian(f, self.gamma, self.grid)


def l2_norm(alpha, k, metric, grid):
    """(∫ |α|² vol)^{1/2} with the 1/k! form norm."""
    return np.sqrt(max(integrate(forms.norm2(alpha, k, metric), metric.vol,
                                 grid), 0.0))


def sup_norm(x):
    x = np.asarray(x)
    return float(np.max(np.abs(x))) if x.size else 0.0
