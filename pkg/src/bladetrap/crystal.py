"""Linear Coulomb-crystal equilibria and normal modes.

Everything is computed in the secular approximation: axial positions
minimise  sum u_i^2/2 + sum_{i<j} 1/|u_i - u_j|  in units of the length
scale l = (q^2 / (4 pi eps0 m w_z^2))^(1/3).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .constants import COULOMB_CONSTANT
from .errors import ValidationError, NumericalError
from .trapmodel import IonSpecies


class NoConvergence(NumericalError):
    def __init__(self, message, gradient_norm=None):
        super().__init__(message)
        self.gradient_norm = gradient_norm


class NonPositiveHessian(NumericalError):
    """The chain is not at a stable axial minimum."""


GRADIENT_TOL = 1e-12


def length_scale_um(omega_z: float, species: IonSpecies) -> float:
    """Coulomb length scale l in micrometres."""
    q = species.charge_c
    ell = (COULOMB_CONSTANT * q * q / (species.mass_kg * omega_z**2)) ** (1.0 / 3.0)
    return ell * 1e6


@dataclass(frozen=True)
class IonChain:
    n: int
    positions_um: np.ndarray      # sorted ascending
    scaled_positions: np.ndarray  # same, in units of the length scale
    length_scale: float           # um
    omega_z: float                # rad/s
    species: IonSpecies


def _gradient(u: np.ndarray) -> np.ndarray:
    """Scaled force balance residual: u_i - sum_j sign(u_i-u_j)/(u_i-u_j)^2."""
    d = u[:, None] - u[None, :]
    np.fill_diagonal(d, np.inf)
    inv2 = np.sign(d) / d**2
    return u - inv2.sum(axis=1)


def _hessian(u: np.ndarray) -> np.ndarray:
    d = np.abs(u[:, None] - u[None, :])
    np.fill_diagonal(d, np.inf)
    inv3 = 1.0 / d**3
    h = -2.0 * inv3
    np.fill_diagonal(h, 1.0 + 2.0 * inv3.sum(axis=1))
    return h


def equilibrium_positions(n: int, omega_z: float,
                          species: IonSpecies = IonSpecies("Yb-174", 174.0),
                          max_iter: int = 200) -> IonChain:
    """Newton iteration for the axial equilibrium of an n-ion chain.

    Seeded with uniform spacing over a 2.02 n^0.56 span; positions are
    symmetrised after convergence to remove centre-of-mass drift.
    """
    if n < 1:
        raise ValidationError("need at least one ion")
    if omega_z <= 0:
        raise ValidationError("omega_z must be positive")
    ell = length_scale_um(omega_z, species)
    if n == 1:
        u = np.zeros(1)
        return IonChain(1, u.copy(), u, ell, omega_z, species)

    span = 2.02 * n**0.56
    u = np.linspace(-span / 2.0, span / 2.0, n)
    for _ in range(max_iter):
        g = _gradient(u)
        gnorm = float(np.max(np.abs(g)))
        if gnorm < GRADIENT_TOL:
            break
        step = np.linalg.solve(_hessian(u), g)
        # keep the ordering: damp steps that would cross neighbours
        scale = 1.0
        while scale > 1e-6:
            trial = u - scale * step
            if np.all(np.diff(trial) > 0):
                break
            scale *= 0.5
        u = u - scale * step
    else:
        raise NoConvergence(
            f"Newton iteration did not converge for n={n}", gradient_norm=gnorm)

    u = 0.5 * (u - u[::-1])           # enforce mirror symmetry
    g = _gradient(u)
    if np.max(np.abs(g)) > 100 * GRADIENT_TOL:
        raise NoConvergence("symmetrised solution lost convergence",
                            gradient_norm=float(np.max(np.abs(g))))
    return IonChain(n, u * ell, u, ell, omega_z, species)


def chain_length(chain: IonChain) -> float:
    """Extent max - min of the chain in micrometres."""
    return float(chain.positions_um.max() - chain.positions_um.min())


def axial_modes(chain: IonChain):
    """Axial normal modes: (frequencies rad/s ascending, eigenvectors).

    Eigenvectors are returned as columns of an orthonormal matrix; the
    lowest mode is the centre of mass at w_z.  Raises NonPositiveHessian
    when the input is not a converged minimum (stale force residual or a
    non-positive curvature).
    """
    residual = float(np.max(np.abs(_gradient(chain.scaled_positions))))
    if residual > 1e-8:
        raise NonPositiveHessian(
            f"input chain is not at equilibrium (force residual {residual:.2e})")
    h = _hessian(chain.scaled_positions)
    evals, evecs = np.linalg.eigh(h)
    if evals[0] <= 0:
        raise NonPositiveHessian(
            f"lowest axial eigenvalue {evals[0]:.3e} is not positive")
    freqs = np.sqrt(evals) * chain.omega_z
    return freqs, evecs


def transverse_hessian(scaled_positions: np.ndarray, anisotropy_sq: float) -> np.ndarray:
    """Scaled transverse Hessian at radial anisotropy (w_r/w_z)^2."""
    u = scaled_positions
    d = np.abs(u[:, None] - u[None, :])
    np.fill_diagonal(d, np.inf)
    inv3 = 1.0 / d**3
    h = inv3.copy()
    np.fill_diagonal(h, anisotropy_sq - inv3.sum(axis=1))
    return h


def zigzag_threshold(n: int, omega_z: float,
                     species: IonSpecies = IonSpecies("Yb-174", 174.0),
                     rel_tol: float = 1e-10) -> float:
    """Critical radial frequency below which the linear chain buckles.

    Bisection on w_r of the minimum transverse-Hessian eigenvalue.
    """
    if n < 3:
        raise ValidationError("zigzag threshold is defined for n >= 3")
    chain = equilibrium_positions(n, omega_z, species)
    u = chain.scaled_positions

    def min_eig(anisotropy_sq):
        return float(np.linalg.eigvalsh(transverse_hessian(u, anisotropy_sq))[0])

    lo, hi = 0.0, 4.0
    while min_eig(hi) < 0:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if min_eig(mid) < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < rel_tol * hi:
            break
    return omega_z * math.sqrt(hi)


def chain_csv(chain: IonChain) -> str:
    lines = ["index,z_um"]
    for i, z in enumerate(chain.positions_um):
        lines.append(f"{i},{z:.9g}")
    return "\n".join(lines) + "\n"
