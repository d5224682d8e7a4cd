"""Reported quantities from ensemble accumulators: density, width, spreading, g2."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import Lattice
from .meanfield import relative_spreading
from .positivep.ensemble import EnsembleAccumulator


@dataclass(frozen=True)
class DensityProfile:
    """Atoms per unit length on the lattice, ``n_i / dx``.

    ``covariance`` is the covariance matrix of the estimated cell
    occupations ``n_i`` (not densities); it carries the correlations
    needed to propagate errors into moments of the profile.
    """

    x: np.ndarray
    n: np.ndarray
    stderr: np.ndarray
    dx: float
    covariance: np.ndarray = field(default=None, repr=False)

    @property
    def occupations(self) -> np.ndarray:
        return self.n * self.dx

    @property
    def total(self) -> float:
        return float(np.sum(self.occupations))

    @property
    def total_stderr(self) -> float:
        if self.covariance is not None:
            return math.sqrt(max(float(self.covariance.sum()), 0.0))
        return float(np.sqrt(np.sum((self.stderr * self.dx) ** 2)))


def density_profile(acc: EnsembleAccumulator, lattice: Lattice) -> DensityProfile:
    if acc.count < 1:
        raise ValueError("empty accumulator")
    if acc.m_cells != lattice.m_cells:
        raise ValueError("accumulator and lattice differ in cell count")
    m = acc.m_cells
    mean, err, _, _ = acc.occupation()
    cov = acc.covariance()[:m, :m] / acc.count
    return DensityProfile(lattice.positions.copy(), mean / lattice.dx, err / lattice.dx,
                          lattice.dx, cov)


def profile_from_occupations(occupations, lattice: Lattice) -> DensityProfile:
    """Noise-free profile, e.g. from a ground state or an oracle."""
    occ = np.asarray(occupations, dtype=float)
    return DensityProfile(lattice.positions.copy(), occ / lattice.dx, np.zeros_like(occ),
                          lattice.dx, np.zeros((occ.size, occ.size)))


def cloud_moments(profile: DensityProfile) -> tuple[float, float]:
    """First and second spatial moments per atom."""
    occ = profile.occupations
    n = occ.sum()
    return float(profile.x @ occ / n), float(profile.x**2 @ occ / n)


def cloud_variance(profile: DensityProfile) -> tuple[float, float]:
    """Single-atom position variance of the cloud and its standard error.

    The error is the linearized propagation through the occupation
    covariance (or the diagonal errors if no covariance is attached).
    """
    x = profile.x
    occ = profile.occupations
    n = occ.sum()
    if not n > 0:
        raise ValueError("profile has no atoms")
    m1, m2 = cloud_moments(profile)
    var = m2 - m1 * m1
    grad = (x**2 - m2) / n - 2.0 * m1 * (x - m1) / n
    if profile.covariance is not None:
        v = float(grad @ profile.covariance @ grad)
    else:
        v = float(np.sum((grad * profile.stderr * profile.dx) ** 2))
    return var, math.sqrt(max(v, 0.0))


def profile_difference(a: DensityProfile, b: DensityProfile) -> tuple[float, float]:
    """Integrated absolute difference ``sum |n_a - n_b| dx`` with a standard error.

    The two profiles come from independent ensembles.
    """
    if a.x.shape != b.x.shape or not np.allclose(a.x, b.x):
        raise ValueError("profiles live on different lattices")
    d = (a.n - b.n) * a.dx
    se = np.hypot(a.stderr, b.stderr) * a.dx
    return float(np.sum(np.abs(d))), float(np.sqrt(np.sum(se**2)))


@dataclass(frozen=True)
class G2Curve:
    x: np.ndarray  # signed distance from the trap center
    g2: np.ndarray
    stderr: np.ndarray
    valid: np.ndarray

    def at_center(self) -> tuple[float, float]:
        c = len(self.x) // 2
        return float(self.g2[c]), float(self.stderr[c])


class DensityFloorError(ValueError):
    pass


def g2_curve(acc: EnsembleAccumulator, lattice: Lattice, density_floor: float | None = None) -> G2Curve:
    """Density-density correlation with the central cell, normalized by the densities.

    ``density_floor`` (atoms per unit length) defaults to 1e-3 of the
    peak density; cells below it are reported but flagged invalid.
    Standard errors come from the delta method over the joint
    covariance of the occupation and pair features.
    """
    if acc.center is None or lattice.m_cells % 2 == 0:
        raise ValueError("g2 needs an odd number of cells so the trap center is a cell")
    m = acc.m_cells
    c = acc.center
    mu = acc.mean_re
    n, pair = mu[:m], mu[m:]
    dens = n / lattice.dx
    if density_floor is None:
        density_floor = 1e-3 * float(np.max(dens))
    if not density_floor > 0:
        raise ValueError("density_floor must be positive")
    if dens[c] < density_floor:
        raise DensityFloorError(f"center density {dens[c]:.3g} below floor {density_floor:.3g}")

    with np.errstate(divide="ignore", invalid="ignore"):
        g2 = pair / (n[c] * n)
    cov = acc.covariance() / acc.count
    err = np.empty(m)
    for i in range(m):
        grad = np.zeros(2 * m)
        grad[m + i] = 1.0 / (n[c] * n[i])
        grad[i] -= g2[i] / n[i]
        grad[c] -= g2[i] / n[c]
        err[i] = math.sqrt(max(float(grad @ cov @ grad), 0.0))
    valid = dens >= density_floor
    return G2Curve(lattice.positions.copy(), g2, err, valid)


def eta_from_runs(var_meas, var_nomeas) -> float:
    """Relative spreading of a measured run against its unmeasured partner."""
    return relative_spreading(var_meas, var_nomeas)


def eta_with_error(var_meas: float, err_meas: float, var_nomeas: float, err_nomeas: float):
    """``eta`` and its standard error for two independent ensembles."""
    eta = relative_spreading(var_meas, var_nomeas)
    d_meas = 0.5 * math.sqrt(var_nomeas) / var_meas**1.5
    d_nomeas = -0.5 / math.sqrt(var_meas * var_nomeas)
    return eta, math.hypot(d_meas * err_meas, d_nomeas * err_nomeas)
