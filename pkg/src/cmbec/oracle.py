"""Independent reference solutions used to validate the solver tiers.

* closed-form moments of the non-interacting Wigner Fokker-Planck equation,
* the same moments for any restoring coefficient, via a matrix exponential,
* exact single-particle evolution under the lattice operator,
* the single-particle density matrix of a non-interacting measured gas,
* a dense master-equation integrator in a truncated Fock space.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.integrate import solve_ivp
from scipy.linalg import eigh, expm

from .core import Lattice, PhysicalParams, hopping_matrix
from .meanfield import MomentState


def analytic_moments_noninteracting(t: float, kappa_tilde: float, initial: MomentState) -> MomentState:
    """Exact second moments of the non-interacting measured oscillator (m = omega0 = 1).

    Free rotation of the initial covariance plus the contribution of the
    momentum diffusion started from zero; see ``docs/derivations.md``.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    vx, vp, c = initial
    s2, c2 = math.sin(2 * t), math.cos(2 * t)
    cos2, sin2 = math.cos(t) ** 2, math.sin(t) ** 2
    return MomentState(
        vx * cos2 + vp * sin2 + 0.5 * c * s2 + kappa_tilde * (t - 0.5 * s2),
        vx * sin2 + vp * cos2 - 0.5 * c * s2 + kappa_tilde * (t + 0.5 * s2),
        (vp - vx) * s2 + c * c2 + kappa_tilde * (1 - c2),
    )


def linear_moments(t: float, kappa_tilde: float, initial: MomentState, restoring: float = 2.0) -> MomentState:
    """Moments of the g = 0 closure with an arbitrary restoring coefficient.

    The system is affine, so ``expm`` of the augmented 4x4 generator is exact.
    """
    gen = np.array(
        [
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, -1.0, 2.0 * kappa_tilde],
            [-restoring, 2.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0],
        ]
    )
    y = expm(gen * t) @ np.array([*initial, 1.0])
    return MomentState(*map(float, y[:3]))


def single_particle_evolve(hopping, amplitudes, t: float) -> np.ndarray:
    """``exp(-i Upsilon t) amplitudes`` via a dense eigendecomposition."""
    w, v = eigh(np.asarray(hopping, dtype=float))
    amps = np.asarray(amplitudes, dtype=complex)
    return v @ (np.exp(-1j * w * t) * (v.T @ amps))


def single_particle_density_matrix(lattice: Lattice, rho0, kappa_tilde: float, t: float,
                                   rtol: float = 1e-10, atol: float = 1e-12) -> np.ndarray:
    """One-body density matrix ``rho_ij = <a_j^+ a_i>`` of the non-interacting measured gas.

    Solves ``d rho/dt = -i[Upsilon, rho] - kappa_tilde [x, [x, rho]]``,
    which is closed for g = 0.
    """
    ups = hopping_matrix(lattice)
    x = lattice.positions
    damp = kappa_tilde * (x[:, None] - x[None, :]) ** 2
    m = lattice.m_cells

    def rhs(_, y):
        r = y.reshape(m, m)
        return (-1j * (ups @ r - r @ ups) - damp * r).ravel()

    sol = solve_ivp(rhs, (0.0, t), np.asarray(rho0, dtype=complex).ravel(),
                    method="DOP853", rtol=rtol, atol=atol)
    if not sol.success:
        raise RuntimeError(sol.message)
    return sol.y[:, -1].reshape(m, m)


# --- truncated Fock-space master equation -------------------------------------

MAX_DIMENSION = 4096


@dataclass(frozen=True)
class FockConfig:
    """Cutoff for the master-equation oracle.

    ``n_max`` bounds the *total* atom number. Every occupation pattern
    with at most ``n_max`` atoms is kept, so the number-conserving
    dynamics is exact inside the truncated space; only the initial
    coherent state is cut. This space is a subset of the per-cell box
    ``(n_max + 1)**m_cells``, whose size is what the bound checks.
    """

    m_cells: int
    n_max: int

    def __post_init__(self):
        if not 1 <= self.m_cells <= 4:
            raise ValueError("master-equation oracle supports 1..4 cells")
        if self.n_max < 1:
            raise ValueError("n_max must be positive")
        if (self.n_max + 1) ** self.m_cells > MAX_DIMENSION:
            raise ValueError(
                f"(n_max+1)^M = {(self.n_max + 1) ** self.m_cells} exceeds {MAX_DIMENSION}"
            )

    def basis(self) -> np.ndarray:
        states = [
            s for s in itertools.product(range(self.n_max + 1), repeat=self.m_cells)
            if sum(s) <= self.n_max
        ]
        return np.array(states, dtype=int)


class TruncationError(ValueError):
    pass


@dataclass
class MasterResult:
    t: float
    occupations: np.ndarray
    g2_numerator: np.ndarray  # <a_c^+ a_i^+ a_i a_c> for every i
    x_mean: float
    x2_mean: float
    rho: np.ndarray = field(repr=False)
    truncation_loss: float = 0.0
    step: float = 0.0

    @property
    def total_number(self) -> float:
        return float(self.occupations.sum())


class FockSpace:
    def __init__(self, fock: FockConfig):
        self.fock = fock
        self.states = fock.basis()
        self.dim = len(self.states)
        self.index = {tuple(s): k for k, s in enumerate(self.states)}
        self.occ = self.states.astype(float)  # (dim, M)

    def annihilation(self, i: int) -> sparse.csr_matrix:
        rows, cols, vals = [], [], []
        for k, s in enumerate(self.states):
            if s[i] > 0:
                t = s.copy()
                t[i] -= 1
                rows.append(self.index[tuple(t)])
                cols.append(k)
                vals.append(math.sqrt(s[i]))
        return sparse.csr_matrix((vals, (rows, cols)), shape=(self.dim, self.dim))

    def hamiltonian(self, hopping: np.ndarray, u: float) -> sparse.csr_matrix:
        """``sum Upsilon_ij a_i^+ a_j + (u/2) sum a_i^+2 a_i^2``."""
        m = self.fock.m_cells
        ops = [self.annihilation(i) for i in range(m)]
        h = sparse.csr_matrix((self.dim, self.dim), dtype=float)
        for i in range(m):
            for j in range(m):
                if hopping[i, j] != 0.0:
                    h = h + hopping[i, j] * (ops[i].T @ ops[j])
        n = self.occ
        h = h + sparse.diags(0.5 * u * np.sum(n * (n - 1), axis=1))
        return h.tocsr()

    def coherent_state(self, amplitudes) -> tuple[np.ndarray, float]:
        """Truncated, renormalized product coherent state and the weight that was cut."""
        amps = np.asarray(amplitudes, dtype=complex)
        logfact = np.array([math.lgamma(k + 1) for k in range(self.fock.n_max + 1)])
        psi = np.exp(-0.5 * np.sum(np.abs(amps) ** 2)) * np.ones(self.dim, dtype=complex)
        for i, a in enumerate(amps):
            k = self.states[:, i]
            psi *= np.where(k > 0, a ** k, 1.0) * np.exp(-0.5 * logfact[k])
        kept = float(np.sum(np.abs(psi) ** 2))
        return psi / math.sqrt(kept), 1.0 - kept


def _rk4_run(rhs, rho, t, n_steps):
    h = t / n_steps
    for _ in range(n_steps):
        k1 = rhs(rho)
        k2 = rhs(rho + 0.5 * h * k1)
        k3 = rhs(rho + 0.5 * h * k2)
        k4 = rhs(rho + h * k3)
        rho = rho + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return rho


def evolve_density_matrix(space: FockSpace, ham: sparse.csr_matrix, xdiag: np.ndarray,
                          kappa: float, rho0: np.ndarray, t: float,
                          tol: float = 1e-8, n_steps: int = 16):
    """RK4 for ``-i[H, rho] - kappa [X, [X, rho]]`` with diagonal ``X``.

    The step is halved until every entry of the diagonal and of the
    number-conserving observables changes by less than ``tol``.
    """
    damp = kappa * (xdiag[:, None] - xdiag[None, :]) ** 2
    hT = ham.T.tocsr()

    def rhs(r):
        return -1j * (ham @ r - (hT @ r.T).T) - damp * r

    if t == 0:
        return rho0.copy(), 0.0
    prev = _rk4_run(rhs, rho0, t, n_steps)
    while True:
        n_steps *= 2
        cur = _rk4_run(rhs, rho0, t, n_steps)
        if np.max(np.abs(cur - prev)) < tol:
            return cur, t / n_steps
        if n_steps > 1 << 20:
            raise RuntimeError("master-equation step refinement did not converge")
        prev = cur


def master_equation_evolve(fock: FockConfig, params: PhysicalParams, lattice: Lattice,
                           amplitudes, t: float, max_loss: float = 1e-6,
                           tol: float = 1e-8) -> MasterResult:
    """Evolve a product coherent state of cell amplitudes under the lattice master equation."""
    if fock.m_cells != lattice.m_cells:
        raise ValueError("Fock cutoff and lattice have different cell counts")
    space = FockSpace(fock)
    psi, loss = space.coherent_state(amplitudes)
    if loss >= max_loss:
        raise TruncationError(f"coherent-state weight beyond cutoff {loss:.2e} >= {max_loss:.0e}")
    ham = space.hamiltonian(hopping_matrix(lattice), params.g1d / lattice.dx)
    xdiag = space.occ @ lattice.positions / params.n_atoms
    rho, h = evolve_density_matrix(space, ham, xdiag, params.kappa, np.outer(psi, psi.conj()), t, tol)
    res = expectations(space, rho, lattice, params.n_atoms)
    res.t, res.truncation_loss, res.step = t, loss, h
    return res


def expectations(space: FockSpace, rho: np.ndarray, lattice: Lattice, n_atoms: float) -> MasterResult:
    p = np.real(np.diag(rho))
    n = space.occ
    occ = p @ n
    c = lattice.m_cells // 2
    g2 = p @ (n[:, [c]] * n - np.where(np.arange(lattice.m_cells) == c, n[:, [c]], 0.0))
    xop = n @ lattice.positions / n_atoms
    return MasterResult(0.0, occ, g2, float(p @ xop), float(p @ xop**2), rho)


# --- archived reference values -------------------------------------------------

def fixture_key(fock: FockConfig, params: PhysicalParams, lattice: Lattice, amplitudes, t: float) -> str:
    from .io import config_hash

    amps = np.asarray(amplitudes, dtype=complex)
    return config_hash({
        "m_cells": fock.m_cells, "n_max": fock.n_max,
        "n_atoms": params.n_atoms, "g1d": params.g1d, "kappa_tilde": params.kappa_tilde,
        "dx": lattice.dx, "positions": [round(v, 12) for v in lattice.positions],
        "amplitudes": [[round(a.real, 12), round(a.imag, 12)] for a in amps],
        "t": t,
    })[:16]


def cached_master_equation(directory, fock: FockConfig, params: PhysicalParams, lattice: Lattice,
                           amplitudes, t: float, regenerate: bool = False) -> MasterResult:
    """Master-equation expectations, read from ``<directory>/master_<key>.csv`` if present.

    The CSV has columns ``quantity, index, value``; ``rho`` is not archived.
    """
    from pathlib import Path

    from .io import read_csv, write_csv

    path = Path(directory) / f"master_{fixture_key(fock, params, lattice, amplitudes, t)}.csv"
    m = lattice.m_cells
    if path.exists() and not regenerate:
        _, rows = read_csv(path)
        vals = {(q, int(i)): float(v) for q, i, v in rows}
        return MasterResult(
            t,
            np.array([vals[("n", i)] for i in range(m)]),
            np.array([vals[("g2_numerator", i)] for i in range(m)]),
            vals[("x_mean", 0)], vals[("x2_mean", 0)], None,
            vals[("truncation_loss", 0)], vals[("step", 0)],
        )
    res = master_equation_evolve(fock, params, lattice, amplitudes, t)
    rows = [("n", i, v) for i, v in enumerate(res.occupations)]
    rows += [("g2_numerator", i, v) for i, v in enumerate(res.g2_numerator)]
    rows += [("x_mean", 0, res.x_mean), ("x2_mean", 0, res.x2_mean),
             ("truncation_loss", 0, res.truncation_loss), ("step", 0, res.step)]
    path.parent.mkdir(parents=True, exist_ok=True)
    write_csv(path, ["quantity", "index", "value"], rows)
    return res
