"""Ground state of the discrete stationary Gross-Pitaevskii equation.

On the lattice the field amplitude ``phi_i`` (normalized so that
``sum |phi_i|**2 dx = N``) solves

    mu phi_i = (Upsilon phi)_i + g1d |phi_i|**2 phi_i,

which is the same on-site nonlinearity that the noiseless positive-P
drift applies to the cell amplitudes ``alpha_i = phi_i sqrt(dx)``. The
coherent state built from this solution is therefore stationary under
that drift.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import eigh_tridiagonal, solve_banded

from .core import Lattice, PhysicalParams, hopping_bands

log = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    pass


class CoverageError(ValueError):
    pass


@dataclass(frozen=True)
class GroundState:
    amplitudes: np.ndarray = field(repr=False)
    chemical_potential: float
    variance: float
    residual: float = 0.0
    iterations: int = 0
    energies: np.ndarray = field(default=None, repr=False)


def _apply_hamiltonian(phi, diag, off, g):
    h = diag * phi + g * phi**3
    h[1:] += off * phi[:-1]
    h[:-1] += off * phi[1:]
    return h


def _energy(phi, diag, off, g, dx):
    kin_trap = phi @ (diag * phi) + 2.0 * off * (phi[1:] @ phi[:-1])
    return float((kin_trap + 0.5 * g * np.sum(phi**4)) * dx)


def _measure(phi, diag, off, g, dx, n_atoms):
    phi = phi * np.sqrt(n_atoms / (np.sum(phi**2) * dx))
    hphi = _apply_hamiltonian(phi, diag, off, g)
    mu = float(phi @ hphi * dx / n_atoms)
    return phi, mu, float(np.max(np.abs(hphi - mu * phi)))


def _polish(phi, diag, off, g, dx, n_atoms, max_sweeps=20):
    """Refine by repeated lowest eigenvectors of the frozen Hamiltonian.

    Exact in one sweep at ``g = 0``; for ``g > 0`` sweeps are kept only
    while they lower the residual, so the relaxed state is never made worse.
    """
    best = _measure(phi, diag, off, g, dx, n_atoms)
    offd = np.full(len(phi) - 1, off)
    for _ in range(max_sweeps):
        _, vec = eigh_tridiagonal(diag + g * best[0] ** 2, offd, select="i", select_range=(0, 0))
        v = np.abs(vec[:, 0])
        trial = _measure(0.5 * (v + v[::-1]), diag, off, g, dx, n_atoms)
        if not trial[2] < best[2]:
            break
        best = trial
    return best


def solve_ground_state(
    lattice: Lattice,
    params: PhysicalParams,
    dtau: float = 1e-3,
    tol: float = 1e-10,
    residual_tol: float = 1e-8,
    max_iter: int = 200_000,
    check_coverage: bool = True,
) -> GroundState:
    """Imaginary-time relaxation with renormalization to ``N`` after every step.

    Each step solves ``(1 + dtau H[phi_n]) phi' = phi_n`` with the
    nonlinearity frozen at the previous iterate (backward Euler), then
    rescales. Stops once the chemical potential moves by less than
    ``tol`` between sweeps and the stationary-equation residual is below
    ``residual_tol`` in max norm.
    """
    x, dx = lattice.positions, lattice.dx
    n_atoms, g = params.n_atoms, params.g1d
    diag, off = hopping_bands(lattice)

    # start from a Gaussian wide enough for the Thomas-Fermi extent
    mu_tf = 0.5 * (1.5 * params.gN) ** (2.0 / 3.0)
    sigma = max(np.sqrt(0.5), np.sqrt(0.4 * mu_tf))
    phi = np.exp(-(x**2) / (4 * sigma**2))
    phi *= np.sqrt(n_atoms / (np.sum(phi**2) * dx))

    ab = np.zeros((3, lattice.m_cells))
    ab[0, 1:] = dtau * off
    ab[2, :-1] = dtau * off

    mu_old = np.inf
    energies = []
    for it in range(1, max_iter + 1):
        ab[1] = 1.0 + dtau * (diag + g * phi**2)
        phi = solve_banded((1, 1), ab, phi, check_finite=False)
        phi *= np.sqrt(n_atoms / (np.sum(phi**2) * dx))
        if it % 50 and it < max_iter:
            continue
        hphi = _apply_hamiltonian(phi, diag, off, g)
        mu = float(phi @ hphi * dx / n_atoms)
        energies.append(_energy(phi, diag, off, g, dx))
        if abs(mu - mu_old) < tol:
            residual = float(np.max(np.abs(hphi - mu * phi)))
            if residual < residual_tol:
                break
        mu_old = mu
    else:
        raise ConvergenceError(f"GPE relaxation did not converge in {max_iter} steps")

    # symmetrize away roundoff; the ground state is even and nodeless
    phi = 0.5 * np.abs(phi + phi[::-1])
    phi, mu, residual = _polish(phi, diag, off, g, dx, n_atoms)

    if check_coverage:
        reach = np.sqrt(2 * max(mu, 0.0)) + 4.0
        if not lattice.covers(reach):
            raise CoverageError(
                f"cloud extent {reach:.2f} exceeds lattice edge {x[-1]:.2f}"
            )

    dens = phi**2
    variance = float(np.sum(x**2 * dens) * dx / n_atoms)
    log.debug("GPE converged: mu=%.10f after %d steps, residual %.2e", mu, it, residual)
    phi.setflags(write=False)
    return GroundState(phi, mu, variance, residual, it, np.asarray(energies))


def ground_state_density(gs: GroundState, lattice: Lattice) -> np.ndarray:
    """Atoms per unit length ``|phi(x_i)|**2``."""
    if gs.amplitudes.shape != lattice.positions.shape:
        raise ValueError("ground state and lattice sizes differ")
    return gs.amplitudes**2


def thomas_fermi_mu(gN: float) -> float:
    """Chemical potential of the 1D Thomas-Fermi profile ``n = (mu - x**2/2)/g``."""
    return 0.5 * (1.5 * gN) ** (2.0 / 3.0)


def write_ground_state_csv(path, gs: GroundState, lattice: Lattice) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "phi", "density"])
        for xi, p in zip(lattice.positions, gs.amplitudes):
            w.writerow([repr(float(xi)), repr(float(p)), repr(float(p * p))])
