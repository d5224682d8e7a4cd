"""Gaussian-closure moment equations for the single-atom fluctuations.

State is the triple (<dx^2>, <dp^2>, <{x,p}>) of a cloud centred at the
trap minimum. The interaction enters only through the effective trap
frequency

    Omega_eff^2 = omega0^2 - g N / (2 sqrt(pi) m <dx^2>^{3/2}).

Two closures are provided. ``"verbatim"`` uses a restoring coefficient 4
on the ``<{x,p}>`` equation; ``"consistent"`` uses 2, which is what the
non-interacting Wigner Fokker-Planck equation gives and what the exact
oscillator obeys.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .core import QUARTER_PERIOD, PhysicalParams, lattice_for, oscillator_spread
from .gpe import solve_ground_state

log = logging.getLogger(__name__)

SQRT_PI = math.sqrt(math.pi)
RESTORING = {"verbatim": 4.0, "consistent": 2.0}


class MomentDomainError(ArithmeticError):
    """The position variance left the domain where the closure is defined."""


class MomentState(NamedTuple):
    var_x: float
    var_p: float
    cov_xp: float

    def check_initial(self):
        if not (self.var_x > 0 and self.var_p > 0):
            raise ValueError(f"variances must be positive: {self}")
        if self.var_x * self.var_p < 0.25 - 1e-12:
            raise ValueError(f"initial moments violate var_x*var_p >= 1/4: {self}")
        return self

    @classmethod
    def minimum_uncertainty(cls, var_x: float) -> "MomentState":
        return cls(var_x, 0.25 / var_x, 0.0)


@dataclass
class MomentTrajectory:
    times: np.ndarray
    states: np.ndarray = field(repr=False)  # shape (n_steps + 1, 3)
    min_validity_margin: float = math.inf

    @property
    def final(self) -> MomentState:
        return MomentState(*map(float, self.states[-1]))

    @property
    def var_x(self) -> np.ndarray:
        return self.states[:, 0]


def effective_frequency_sq(var_x: float, params: PhysicalParams) -> float:
    if not var_x > 0:
        raise MomentDomainError(f"effective frequency undefined for var_x={var_x}")
    return params.omega0**2 - params.gN / (
        2.0 * SQRT_PI * params.mass * var_x**1.5
    )


def moment_rhs(state, params: PhysicalParams, closure: str = "verbatim") -> np.ndarray:
    vx, vp, c = state
    w2 = effective_frequency_sq(vx, params)
    m = params.mass
    return np.array(
        [
            c / m,
            -m * w2 * c + 2.0 * params.kappa_tilde,
            2.0 * vp / m - RESTORING[closure] * m * w2 * vx,
        ]
    )


def validity_margin(var_x: float, params: PhysicalParams) -> float:
    """``2 sqrt(pi) m omega0^2 <dx^2>^{3/2} - gN``; the closure needs it positive."""
    return 2.0 * SQRT_PI * params.mass * params.omega0**2 * var_x**1.5 - params.gN


def _rk4(f, y, h):
    k1 = f(y)
    k2 = f(y + 0.5 * h * k1)
    k3 = f(y + 0.5 * h * k2)
    k4 = f(y + h * k3)
    return y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def integrate_moments(
    initial: MomentState,
    params: PhysicalParams,
    t_final: float,
    dt: float = 1e-4,
    closure: str = "verbatim",
) -> MomentTrajectory:
    """Fourth-order Adams-Bashforth-Moulton (PECE) at fixed step.

    The first three steps are taken with classical RK4. The step is
    shrunk slightly so that an integer number of steps lands on
    ``t_final``.
    """
    if not dt > 0 or not t_final > 0:
        raise ValueError("dt and t_final must be positive")
    if closure not in RESTORING:
        raise ValueError(f"unknown closure {closure!r}")
    initial = MomentState(*initial).check_initial()

    n = max(int(math.ceil(t_final / dt - 1e-9)), 4)
    h = t_final / n
    out = np.empty((n + 1, 3))
    out[0] = initial

    def f(y):
        if not y[0] > 0:
            raise MomentDomainError(f"var_x reached {y[0]:.3e}; closure breaks down")
        return moment_rhs(y, params, closure)

    fs = [f(out[0])]
    for k in range(3):
        out[k + 1] = _rk4(f, out[k], h)
        fs.append(f(out[k + 1]))

    for k in range(3, n):
        f3, f2, f1, f0 = fs[-4], fs[-3], fs[-2], fs[-1]
        pred = out[k] + h / 24.0 * (55 * f0 - 59 * f1 + 37 * f2 - 9 * f3)
        fp = f(pred)
        out[k + 1] = out[k] + h / 24.0 * (9 * fp + 19 * f0 - 5 * f1 + f2)
        fs.append(f(out[k + 1]))
        del fs[0]

    times = np.linspace(0.0, t_final, n + 1)
    margin = float(np.min(validity_margin(out[:, 0], params)))
    return MomentTrajectory(times, out, margin)


def relative_spreading(var_x_meas: float, var_x_nomeas: float) -> float:
    """Excess cloud width of the measured gas relative to its own width."""
    if not (var_x_meas > 0 and var_x_nomeas > 0):
        raise ValueError("variances must be positive")
    sm = math.sqrt(var_x_meas)
    return (sm - math.sqrt(var_x_nomeas)) / sm


def initial_moments(gN: float, n_atoms: float = 100.0, dx: float = 0.33) -> MomentState:
    """Ground-state position variance from the lattice GPE, minimum-uncertainty momentum."""
    params = PhysicalParams.from_gN(gN, 0.0, n_atoms)
    half = 6.0 * math.sqrt(oscillator_spread(params, 0.0)) + 4.0
    lat = lattice_for(dx, half)
    gs = solve_ground_state(lat, params)
    return MomentState.minimum_uncertainty(gs.variance)


@dataclass
class SweepCell:
    gN: float
    kappa_tilde: float
    eta: float = math.nan
    var_meas: float = math.nan
    var_nomeas: float = math.nan
    valid: bool = True
    error: str = ""


def eta_sweep(
    g_values,
    kappa_values,
    t_eval: float = QUARTER_PERIOD,
    n_atoms: float = 100.0,
    dx: float = 0.33,
    dt: float = 1e-4,
    closure: str = "verbatim",
) -> list[SweepCell]:
    """Relative spreading on a grid of ``g1d*N`` values and measurement strengths.

    Measured and unmeasured runs start from the same GPE-derived moments.
    Cells whose integration fails are kept with ``error`` set; cells that
    leave the closure's validity range at any time are marked invalid.
    """
    if not t_eval > 0:
        raise ValueError("t_eval must be positive")
    cells = []
    for gN in g_values:
        try:
            init = initial_moments(gN, n_atoms, dx)
            base = integrate_moments(
                init, PhysicalParams.from_gN(gN, 0.0, n_atoms), t_eval, dt, closure
            )
        except (MomentDomainError, ValueError, RuntimeError) as exc:
            cells += [SweepCell(gN, k, valid=False, error=str(exc)) for k in kappa_values]
            continue
        for kap in kappa_values:
            cell = SweepCell(gN, kap, var_nomeas=base.final.var_x)
            try:
                run = integrate_moments(
                    init, PhysicalParams.from_gN(gN, kap, n_atoms), t_eval, dt, closure
                )
            except MomentDomainError as exc:
                cell.valid, cell.error = False, str(exc)
                cells.append(cell)
                continue
            cell.var_meas = run.final.var_x
            cell.eta = relative_spreading(cell.var_meas, cell.var_nomeas)
            cell.valid = min(run.min_validity_margin, base.min_validity_margin) > 0
            cells.append(cell)
    return cells
