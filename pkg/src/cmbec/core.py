"""Physical parameters, lattice discretization and the single-particle operator.

Internal units are fixed to hbar = m = omega0 = a0 = 1, so one quarter of
the trap period is the dimensionless time ``pi/2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

QUARTER_PERIOD = np.pi / 2


@dataclass(frozen=True)
class PhysicalParams:
    """Dimensionless model constants shared by every solver tier.

    Parameters
    ----------
    n_atoms : float
        Atom number estimate ``N``. Also the normalization of the
        collective position operator.
    g1d : float
        1D contact coupling (units of hbar*omega0*a0).
    kappa_tilde : float
        Measurement strength ``kappa / N**2`` (units omega0 / a0**2).
    """

    n_atoms: float
    g1d: float = 0.0
    kappa_tilde: float = 0.0
    omega0: float = 1.0
    mass: float = 1.0

    def __post_init__(self):
        if not self.n_atoms > 0:
            raise ValueError(f"n_atoms must be positive, got {self.n_atoms}")
        if self.g1d < 0:
            raise ValueError("only repulsive interactions (g1d >= 0) are supported")
        if self.kappa_tilde < 0:
            raise ValueError("kappa_tilde must be nonnegative")
        if self.omega0 != 1.0 or self.mass != 1.0:
            raise ValueError("internal units fix omega0 = mass = 1")

    @classmethod
    def from_gN(cls, gN: float, kappa_tilde: float = 0.0, n_atoms: float = 100.0):
        """Build parameters from the reported combination ``g1d * N``."""
        return cls(n_atoms=n_atoms, g1d=gN / n_atoms, kappa_tilde=kappa_tilde)

    @property
    def gN(self) -> float:
        return self.g1d * self.n_atoms

    @property
    def kappa(self) -> float:
        """Bare measurement rate ``kappa = kappa_tilde * N**2``."""
        return self.kappa_tilde * self.n_atoms**2


def g1d_from_scattering(a_s: float, omega_perp: float) -> float:
    """Quasi-1D coupling ``2 a_s omega_perp`` for tight radial confinement."""
    if not omega_perp > 0:
        raise ValueError("omega_perp must be positive")
    return 2.0 * a_s * omega_perp


@dataclass(frozen=True)
class Lattice:
    m_cells: int
    dx: float
    positions: np.ndarray = field(repr=False)

    @property
    def half_width(self) -> float:
        return 0.5 * self.m_cells * self.dx

    @property
    def center(self) -> int:
        """Index of the cell at x = 0; only defined for odd ``m_cells``."""
        if self.m_cells % 2 == 0:
            raise ValueError("an even lattice has no central cell")
        return self.m_cells // 2

    def covers(self, radius: float) -> bool:
        return bool(self.positions[-1] >= radius)


def build_lattice(m_cells: int, dx: float, min_half_width: float | None = None) -> Lattice:
    """Centered lattice ``x_i = (i - (M+1)/2) dx`` for ``i = 1..M``.

    ``min_half_width`` optionally asserts that the outermost cell centers
    reach at least that far from the trap minimum.
    """
    if int(m_cells) != m_cells or m_cells < 2:
        raise ValueError(f"m_cells must be an integer >= 2, got {m_cells}")
    if not dx > 0:
        raise ValueError(f"dx must be positive, got {dx}")
    m_cells = int(m_cells)
    idx = np.arange(1, m_cells + 1, dtype=float)
    x = (idx - (m_cells + 1) / 2.0) * dx
    # exact antisymmetry, so the positions sum to zero
    x = 0.5 * (x - x[::-1])
    x.setflags(write=False)
    lat = Lattice(m_cells, float(dx), x)
    if min_half_width is not None and not lat.covers(min_half_width):
        raise ValueError(
            f"lattice of {m_cells} cells x {dx} reaches {x[-1]:.3f}, "
            f"needs {min_half_width:.3f}"
        )
    return lat


def lattice_for(dx: float, half_width: float, odd: bool = True) -> Lattice:
    """Smallest lattice at spacing ``dx`` whose cell centers reach ``half_width``."""
    m = int(np.ceil(2 * half_width / dx)) + 1
    if odd and m % 2 == 0:
        m += 1
    return build_lattice(max(m, 3 if odd else 2), dx, min_half_width=half_width)


def hopping_matrix(lattice: Lattice) -> np.ndarray:
    """Kinetic plus trap energy on the lattice, Dirichlet-truncated at the edges."""
    dx2 = lattice.dx**2
    m = lattice.m_cells
    ups = np.diag(1.0 / dx2 + 0.5 * lattice.positions**2)
    off = np.full(m - 1, -0.5 / dx2)
    ups += np.diag(off, 1) + np.diag(off, -1)
    return ups


def hopping_bands(lattice: Lattice) -> tuple[np.ndarray, float]:
    """Diagonal and (constant) off-diagonal of the tridiagonal hopping matrix."""
    diag = 1.0 / lattice.dx**2 + 0.5 * lattice.positions**2
    return np.ascontiguousarray(diag), -0.5 / lattice.dx**2


def oscillator_spread(params: PhysicalParams, t: float) -> float:
    """Rough single-atom position variance reached by time ``t``.

    Used only to size lattices: ground-state width (Thomas-Fermi estimate
    when interacting) plus the centre-of-mass diffusion from the
    measurement.
    """
    var0 = 0.5
    if params.gN > 0:
        mu = 0.5 * (1.5 * params.gN) ** (2.0 / 3.0)
        var0 = max(var0, 0.4 * mu)
    tt = min(t, np.pi)
    return var0 + params.kappa_tilde * (tt - 0.5 * np.sin(2 * tt))
