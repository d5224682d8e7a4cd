"""Real phase-space form of the positive-P equations.

The 4M real vector is laid out as ``(alpha', beta', alpha'', beta'')``:
real parts of both amplitude sets first, then imaginary parts. These
functions are the readable reference; the integrators in ``_pykernel``
and ``_ckernel`` work on the equivalent complex amplitudes.

Interaction convention: the lattice Hamiltonian is

    H = sum_ij Upsilon_ij a_i^+ a_j + (U/2) sum_i a_i^+2 a_i^2,  U = g1d/dx,

whose positive-P drift is ``-i U alpha^2 beta`` and whose diffusion is
``-i U alpha^2``. A noise matrix with diagonal ``sqrt(U/2) (1 - i) alpha``
reproduces that diffusion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import Lattice, PhysicalParams
from ..gpe import GroundState


class DivergenceError(RuntimeError):
    """A trajectory left the region where the positive-P sampling is trustworthy."""

    def __init__(self, message, events=()):
        super().__init__(message)
        self.events = list(events)  # (trajectory index, time) pairs


@dataclass
class TrajectoryState:
    alpha_re: np.ndarray
    alpha_im: np.ndarray
    beta_re: np.ndarray
    beta_im: np.ndarray
    t: float = 0.0

    @classmethod
    def from_complex(cls, alpha, beta, t=0.0):
        alpha = np.asarray(alpha, dtype=complex)
        beta = np.asarray(beta, dtype=complex)
        return cls(alpha.real.copy(), alpha.imag.copy(), beta.real.copy(), beta.imag.copy(), t)

    @classmethod
    def from_vector(cls, vec, t=0.0):
        a1, b1, a2, b2 = np.split(np.asarray(vec, dtype=float), 4)
        return cls(a1.copy(), a2.copy(), b1.copy(), b2.copy(), t)

    @property
    def alpha(self) -> np.ndarray:
        return self.alpha_re + 1j * self.alpha_im

    @property
    def beta(self) -> np.ndarray:
        return self.beta_re + 1j * self.beta_im

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.alpha_re, self.beta_re, self.alpha_im, self.beta_im])

    def occupations(self):
        """Real and imaginary parts of the complex cell occupation ``alpha_i beta_i``."""
        n_re = self.alpha_re * self.beta_re - self.alpha_im * self.beta_im
        n_im = self.alpha_re * self.beta_im + self.alpha_im * self.beta_re
        return n_re, n_im

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.as_vector())))


def init_coherent(gs: GroundState, lattice: Lattice) -> TrajectoryState:
    """Product coherent state with cell amplitudes ``phi(x_i) sqrt(dx)``, ``beta = alpha*``."""
    phi = np.asarray(gs.amplitudes, dtype=complex)
    if phi.shape != lattice.positions.shape:
        raise ValueError("ground state was computed on a different lattice")
    alpha = phi * np.sqrt(lattice.dx)
    return TrajectoryState.from_complex(alpha, alpha.conj())


def drift(state: TrajectoryState, params: PhysicalParams, lattice: Lattice, hopping) -> np.ndarray:
    """Itô drift of the real 4M-dimensional phase-space vector."""
    ups = np.asarray(hopping)
    u = params.g1d / lattice.dx
    kx2 = params.kappa_tilde * lattice.positions**2
    a1, a2, b1, b2 = state.alpha_re, state.alpha_im, state.beta_re, state.beta_im
    n1, n2 = state.occupations()
    da1 = ups @ a2 + u * (n2 * a1 + n1 * a2) - kx2 * a1
    da2 = -ups @ a1 - u * (n1 * a1 - n2 * a2) - kx2 * a2
    db1 = -ups.T @ b2 - u * (n2 * b1 + n1 * b2) - kx2 * b1
    db2 = ups.T @ b1 + u * (n1 * b1 - n2 * b2) - kx2 * b2
    return np.concatenate([da1, db1, da2, db2])


def interaction_noise_matrix(state: TrajectoryState, params: PhysicalParams, lattice: Lattice):
    """Real 4M x 2M noise matrix of the interaction (one column per alpha/beta component)."""
    m = lattice.m_cells
    s = np.sqrt(params.g1d / (2.0 * lattice.dx))
    a1, a2, b1, b2 = state.alpha_re, state.alpha_im, state.beta_re, state.beta_im
    mat = np.zeros((4 * m, 2 * m))
    i = np.arange(m)
    mat[i, i] = s * (a1 + a2)
    mat[m + i, m + i] = s * (b1 - b2)
    mat[2 * m + i, i] = s * (-a1 + a2)
    mat[3 * m + i, m + i] = s * (b1 + b2)
    return mat


def measurement_noise_column(state: TrajectoryState, params: PhysicalParams, lattice: Lattice, sign=1.0):
    """The single real noise column of the collective position measurement.

    ``sign=-1`` flips the column; only its outer product enters the
    Fokker-Planck equation, so observables are unaffected.
    """
    sig = sign * np.sqrt(2.0 * params.kappa_tilde)
    x = lattice.positions
    a1, a2, b1, b2 = state.alpha_re, state.alpha_im, state.beta_re, state.beta_im
    return sig * np.concatenate([-x * a2, x * b2, x * a1, -x * b1])


def noise_increment(state, params, lattice, dW_int, dW_meas) -> np.ndarray:
    """``B_int dW_int + B_meas dW_meas`` for one step.

    ``dW_int`` has 2M entries (one per alpha cell, then one per beta
    cell); ``dW_meas`` is the scalar increment shared by all cells.
    """
    dW_int = np.asarray(dW_int, dtype=float)
    if dW_int.shape != (2 * lattice.m_cells,):
        raise ValueError("dW_int must have 2M entries")
    out = interaction_noise_matrix(state, params, lattice) @ dW_int
    if params.kappa_tilde > 0:
        out += measurement_noise_column(state, params, lattice) * float(dW_meas)
    return out


def diffusion_matrix(state, params, lattice) -> np.ndarray:
    """Total real diffusion ``B B^T`` (interaction plus measurement)."""
    b = interaction_noise_matrix(state, params, lattice)
    c = measurement_noise_column(state, params, lattice)
    return b @ b.T + np.outer(c, c)
