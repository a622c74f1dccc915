"""Seeded initial data on symmetry-reduced grids.

The conformally coclosed generator perturbs the flat 4-form by an exact
form, psi~ = psi0 + eps * d(chi), so d psi~ = 0 holds to roundoff, then
recovers the positive 3-form with that dual and rescales by the dilaton:
phi = e^{3f} phi~, psi = e^{4f} psi~, hence d(e^{-4f} psi) = 0.
"""

import numpy as np

from . import algebra, forms
from .errors import NotPositive
from .grid import G2Field, exterior_derivative

DEFAULT_MODES = 2


def band_limited(grid, rng, ncomp, modes=DEFAULT_MODES, amplitude=1.0):
    """Random real trigonometric polynomial with |wavenumbers| <= modes.

    Returns an array of shape grid.shape + (ncomp,), normalized so the sup
    over the sampled coefficients is ``amplitude``.
    """
    ks = np.arange(-modes, modes + 1)
    mesh = np.meshgrid(*([ks] * grid.k), indexing="ij")
    waves = np.stack([m.ravel() for m in mesh], axis=-1)
    waves = waves[np.any(waves != 0, axis=1)]
    x = np.stack([grid.coords[a] for a in grid.active_axes], axis=-1)
    phase = np.einsum("...p,wp->...w", x, waves)
    c = rng.normal(size=(len(waves), ncomp))
    s = rng.normal(size=(len(waves), ncomp))
    val = np.cos(phase) @ c + np.sin(phase) @ s
    val /= np.max(np.abs(val)) if np.max(np.abs(val)) > 0 else 1.0
    return amplitude * val


def flat_field(grid):
    return G2Field.flat(grid)


def conformal_field(grid, dilaton):
    """phi = e^{3f} phi0 for a scalar field f."""
    phi = np.exp(3.0 * dilaton)[..., None] * algebra.standard_phi0()
    return G2Field.from_phi(phi, grid)


def coclosed_psi(grid, rng, eps, modes=DEFAULT_MODES):
    """psi0 + eps d(chi) for a band-limited random 3-form chi."""
    chi = band_limited(grid, rng, 35, modes)
    psi0 = algebra.PointG2.from_phi(algebra.standard_phi0()).psi
    return psi0 + eps * exterior_derivative(chi, 3, grid)


def coclosed_field(grid, rng, eps, modes=DEFAULT_MODES):
    """A coclosed (d psi = 0) G2Field near the flat structure."""
    psi = coclosed_psi(grid, rng, eps, modes)
    guess = np.broadcast_to(algebra.standard_phi0(), psi.shape).copy()
    phi = algebra.phi_from_psi(psi, guess)
    return G2Field.from_phi(phi, grid)


def random_dilaton(grid, rng, amplitude, modes=DEFAULT_MODES):
    if amplitude == 0:
        return np.zeros(grid.shape)
    return band_limited(grid, rng, 1, modes, amplitude)[..., 0]


def conformally_coclosed(grid, rng, eps, dilaton_amplitude=None,
                         modes=DEFAULT_MODES):
    """(G2Field, dilaton) with d(e^{-4 dilaton} psi) = 0 by construction."""
    if dilaton_amplitude is None:
        dilaton_amplitude = eps
    tilde = coclosed_field(grid, rng, eps, modes)
    f = random_dilaton(grid, rng, dilaton_amplitude, modes)
    phi = np.exp(3.0 * f)[..., None] * tilde.phi
    return G2Field.from_phi(phi, grid), f


def perturbed_field(grid, rng, eps, modes=DEFAULT_MODES):
    """phi0 plus a random band-limited 3-form (generally not integrable)."""
    phi = algebra.standard_phi0() + band_limited(grid, rng, 35, modes, eps)
    if not np.all(algebra.positive_mask(phi)):
        raise NotPositive("perturbation left the positive cone; lower eps")
    return G2Field.from_phi(phi, grid)


def pullback_field(grid, rng, eps, modes=DEFAULT_MODES):
    """phi = u^* phi0 for a band-limited frame u = I + eps * noise."""
    u = np.eye(7) + band_limited(grid, rng, 49, modes, eps).reshape(
        grid.shape + (7, 7))
    phi = forms.pullback(u, algebra.standard_phi0(), 3)
    return G2Field.from_phi(phi, grid)
