"""Acceptance suite: one test (or group) per criterion, each printed as PASS/FAIL.

Run with ``pytest tests/test_acceptance.py -v -rA``; the terminal summary
ends with one line per criterion. Statistical criteria use independent,
seeded ensembles so every run reproduces the same numbers.
"""

import math
from pathlib import Path

import numpy as np
import pytest

from cmbec.core import QUARTER_PERIOD, PhysicalParams, build_lattice, lattice_for, oscillator_spread
from cmbec.gpe import solve_ground_state, thomas_fermi_mu
from cmbec.meanfield import eta_sweep
from cmbec.observables import (
    cloud_variance,
    density_profile,
    eta_with_error,
    g2_curve,
    profile_difference,
    profile_from_occupations,
)
from cmbec.oracle import FockConfig, cached_master_equation, single_particle_density_matrix
from cmbec.positivep import SimConfig, init_coherent, run_ensemble

FIXTURES = Path(__file__).parent / "fixtures"
EPS = np.finfo(float).eps
Z = 3.0

# reduced-scale sweep shared by the quantum-tier shape criteria
SWEEP_G = (1.0, 2.0, 5.0)
SWEEP_KAPPA = 5.0
SWEEP_TRAJ = 2000
DT_MEASURED = 1e-4
DT_FREE = 1e-3

slow = pytest.mark.slow


def criterion(n):
    return pytest.mark.criterion(n)


# --- 1: non-interacting measurement ----------------------------------------------

@pytest.fixture(scope="module")
def free_measured():
    lat = build_lattice(45, 0.33)
    params = PhysicalParams.from_gN(0.0, 1.0)
    gs = solve_ground_state(lat, params)
    cfg = SimConfig(dt=1e-3, n_trajectories=2000, seed=101)
    res = run_ensemble(gs, params, lat, cfg)
    return lat, gs, res


@slow
@criterion(1)
def test_c1_noninteracting_measurement_variance(free_measured, record):
    lat, _, res = free_measured
    var, se = cloud_variance(density_profile(res.final, lat))
    target = 0.5 + math.pi / 2
    z = abs(var - target) / se
    record(f"var={var:.4f}+-{se:.4f} vs {target:.4f}, z={z:.1f} (limit {Z})")
    assert z <= Z


@slow
def test_c1_companion_matches_lattice_oracle(free_measured, record):
    """Same run against the exact single-particle dynamics of the lattice model."""
    lat, gs, res = free_measured
    a0 = gs.amplitudes * math.sqrt(lat.dx) / math.sqrt(100.0)
    rho = single_particle_density_matrix(lat, np.outer(a0, a0.conj()), 1.0, QUARTER_PERIOD)
    exact, _ = cloud_variance(profile_from_occupations(100.0 * np.real(np.diag(rho)), lat))
    var, se = cloud_variance(density_profile(res.final, lat))
    record(f"lattice oracle {exact:.4f}, positive-P {var:.4f}+-{se:.4f}")
    assert abs(var - exact) <= Z * se


# --- 2: closed-system stationarity ---------------------------------------------

@slow
@criterion(2)
def test_c2_closed_system_stationarity(record):
    lat = build_lattice(45, 0.33)
    params = PhysicalParams.from_gN(0.0, 0.0)
    gs = solve_ground_state(lat, params)
    cfg = SimConfig(dt=1e-3, n_trajectories=2000, seed=102)
    times = [0.25 * QUARTER_PERIOD, 0.5 * QUARTER_PERIOD, 0.75 * QUARTER_PERIOD]
    res = run_ensemble(gs, params, lat, cfg, times)
    n0 = gs.amplitudes**2 * lat.dx
    # Without noise every trajectory is identical and the standard errors
    # vanish; the comparison then resolves floating-point accumulation,
    # bounded by one rounding per step on the full atom number.
    floor = cfg.n_steps * EPS * params.n_atoms
    occ, err, _, _ = res.final.occupation()
    cell_ok = np.abs(occ - n0) <= Z * err + floor
    worst_n = 0.0
    for acc in res.snapshots:
        total, se = acc.total_number()
        worst_n = max(worst_n, abs(total - params.n_atoms) / (Z * se + floor))
    record(f"max |dn|={np.max(np.abs(occ - n0)):.2e} (floor {floor:.1e}), "
           f"worst atom-number ratio {worst_n:.2f}")
    assert cell_ok.all()
    assert worst_n <= 1.0
    assert len(res.snapshots) == 4


# --- 3 and 9: small instance against the master equation -----------------------

CHECK = dict(m_cells=3, dx=1.0, n_atoms=2.0, g1d=0.5, kappa_tilde=0.5, t=0.1)


@pytest.fixture(scope="module")
def small_instance():
    lat = build_lattice(CHECK["m_cells"], CHECK["dx"])
    params = PhysicalParams(CHECK["n_atoms"], CHECK["g1d"], CHECK["kappa_tilde"])
    gs = solve_ground_state(lat, params, check_coverage=False)
    amps = init_coherent(gs, lat).alpha
    ref = cached_master_equation(FIXTURES, FockConfig(3, 12), params, lat, amps, CHECK["t"])
    return lat, params, gs, ref


@pytest.fixture(scope="module")
def small_midpoint(small_instance):
    lat, params, gs, _ = small_instance
    cfg = SimConfig(dt=1e-4, n_trajectories=100_000, t_final=CHECK["t"], seed=103)
    return run_ensemble(gs, params, lat, cfg).final


@slow
@criterion(3)
def test_c3_master_equation_equivalence(small_instance, small_midpoint, record):
    _, _, _, ref = small_instance
    acc = small_midpoint
    m = CHECK["m_cells"]
    mean, err = acc.mean_re, acc.stderr_re()
    z_n = np.abs(mean[:m] - ref.occupations) / err[:m]
    c = m // 2
    z_g = abs(mean[m + c] - ref.g2_numerator[c]) / err[m + c]
    record(f"max z(n)={z_n.max():.2f}, z(G)={z_g:.2f}, {acc.count} trajectories")
    assert acc.count >= 100_000
    assert z_n.max() <= Z and z_g <= Z


@slow
@criterion(9)
def test_c9_euler_agrees_with_midpoint(small_instance, small_midpoint, record):
    lat, params, gs, _ = small_instance
    cfg = SimConfig(dt=1e-5, n_trajectories=100_000, t_final=CHECK["t"], seed=109,
                    scheme="euler")
    euler = run_ensemble(gs, params, lat, cfg).final
    mid = small_midpoint
    z = np.abs(euler.mean_re - mid.mean_re) / np.hypot(euler.stderr_re(), mid.stderr_re())
    record(f"max z over n_i and G_i = {z.max():.2f} (limit {Z})")
    assert z.max() <= Z


# --- 4: mean-field shape ----------------------------------------------------------

@criterion(4)
def test_c4_meanfield_eta_shape(record):
    grid = [0.0, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0]
    cells = eta_sweep(grid, [1.0, 5.0])
    eta = {k: np.array([c.eta for c in cells if c.kappa_tilde == k]) for k in (1.0, 5.0)}
    record("eta(k=1)=" + " ".join(f"{v:.3f}" for v in eta[1.0])
           + " | eta(k=5)=" + " ".join(f"{v:.3f}" for v in eta[5.0]))
    for k in (1.0, 5.0):
        assert np.all(eta[k] > 0)
        assert np.all(np.diff(eta[k]) < 0)
    assert np.all(eta[5.0] > eta[1.0])


# --- 5, 6, 7: reduced-scale quantum sweep ----------------------------------------

def _sweep_lattice(gN):
    spread = oscillator_spread(PhysicalParams.from_gN(gN, SWEEP_KAPPA), QUARTER_PERIOD)
    return lattice_for(0.33, 4.0 * math.sqrt(spread) + 2.0)


@pytest.fixture(scope="module")
def sweep():
    out = {}
    for i, gN in enumerate(SWEEP_G):
        lat = _sweep_lattice(gN)
        cell = {}
        for k, dt in ((0.0, DT_FREE), (SWEEP_KAPPA, DT_MEASURED)):
            params = PhysicalParams.from_gN(gN, k)
            gs = solve_ground_state(lat, params)
            cfg = SimConfig(dt=dt, n_trajectories=SWEEP_TRAJ, seed=500 + 10 * i + int(k))
            cell[k] = run_ensemble(gs, params, lat, cfg).final
        out[gN] = (lat, cell)
    return out


def _decreasing_with_errors(values, errors):
    """Every step down by more than its combined standard error."""
    v, e = np.asarray(values), np.asarray(errors)
    return bool(np.all(v[:-1] - v[1:] > np.hypot(e[:-1], e[1:])))


@slow
@criterion(5)
def test_c5_positivep_eta_shape(sweep, record):
    mf = {c.gN: c.eta for c in eta_sweep(SWEEP_G, [SWEEP_KAPPA])}
    eta, err, gap = [], [], []
    for gN in SWEEP_G:
        lat, cell = sweep[gN]
        vm, em = cloud_variance(density_profile(cell[SWEEP_KAPPA], lat))
        vn, en = cloud_variance(density_profile(cell[0.0], lat))
        e, s = eta_with_error(vm, em, vn, en)
        eta.append(e)
        err.append(s)
        gap.append(abs(mf[gN] - e))
    record("eta_pp=" + " ".join(f"{e:.3f}+-{s:.3f}" for e, s in zip(eta, err))
           + " | |mf-pp|=" + " ".join(f"{g:.3f}" for g in gap))
    assert min(eta) > Z * max(err)
    assert _decreasing_with_errors(eta, err)
    assert _decreasing_with_errors(gap[::-1], err[::-1])


@slow
@criterion(6)
def test_c6_bunching_ordering(sweep, record):
    g2, err = [], []
    for gN in SWEEP_G:
        lat, cell = sweep[gN]
        v, e = g2_curve(cell[SWEEP_KAPPA], lat).at_center()
        g2.append(v)
        err.append(e)
    record("g2(0)=" + " ".join(f"{v:.3f}+-{e:.3f}" for v, e in zip(g2, err)))
    assert g2[0] - 1.0 > Z * err[0]
    assert _decreasing_with_errors(g2, err)


@slow
@criterion(7)
def test_c7_measured_profiles_converge(sweep, record):
    diff, err = [], []
    for gN in SWEEP_G:
        lat, cell = sweep[gN]
        d, e = profile_difference(density_profile(cell[SWEEP_KAPPA], lat),
                                  density_profile(cell[0.0], lat))
        diff.append(d)
        err.append(e)
    record("integrated |dn|=" + " ".join(f"{d:.2f}+-{e:.2f}" for d, e in zip(diff, err)))
    assert _decreasing_with_errors(diff, err)


# --- 8: ground-state solver ---------------------------------------------------

@criterion(8)
def test_c8_gpe_limits(record):
    strong = solve_ground_state(lattice_for(0.33, 12.0), PhysicalParams.from_gN(100.0))
    mu_tf = thomas_fermi_mu(100.0)
    weak = solve_ground_state(lattice_for(0.33, 7.0), PhysicalParams.from_gN(0.0))
    record(f"mu={strong.chemical_potential:.4f} vs TF {mu_tf:.4f}; var(g=0)={weak.variance:.4f}")
    assert abs(strong.chemical_potential / mu_tf - 1.0) <= 0.02
    assert abs(weak.variance / 0.5 - 1.0) <= 0.02


# --- 10: full-scale smoke run ----------------------------------------------------

@pytest.mark.nightly
@criterion(10)
def test_c10_full_scale(record):
    lines = []
    for gN in SWEEP_G:
        lat = _sweep_lattice(gN)
        params = PhysicalParams.from_gN(gN, SWEEP_KAPPA)
        gs = solve_ground_state(lat, params)
        cfg = SimConfig(dt=1e-4, n_trajectories=20000, seed=1000)
        acc = run_ensemble(gs, params, lat, cfg).final
        total, se = acc.total_number()
        lines.append(f"gN={gN:g}: N={total:.3f}+-{se:.3f} ({se / total:.2%})")
        assert se / total <= 1e-3
    record("; ".join(lines))
