import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cmbec.core import PhysicalParams, build_lattice, hopping_matrix, lattice_for
from cmbec.gpe import solve_ground_state
from cmbec.meanfield import MomentState
from cmbec.oracle import (
    FockConfig,
    FockSpace,
    TruncationError,
    analytic_moments_noninteracting,
    cached_master_equation,
    evolve_density_matrix,
    expectations,
    fixture_key,
    linear_moments,
    master_equation_evolve,
    single_particle_density_matrix,
    single_particle_evolve,
)

GROUND = MomentState(0.5, 0.5, 0.0)


def test_analytic_quarter_period():
    s = analytic_moments_noninteracting(math.pi / 2, 1.0, GROUND)
    assert s.var_x == pytest.approx(0.5 + math.pi / 2)
    assert s.var_p == pytest.approx(0.5 + math.pi / 2)
    assert s.cov_xp == pytest.approx(2.0)


def test_analytic_identity_at_zero():
    init = MomentState(0.7, 0.9, 0.1)
    assert analytic_moments_noninteracting(0.0, 3.0, init) == pytest.approx(init)
    with pytest.raises(ValueError):
        analytic_moments_noninteracting(-1.0, 0.0, init)


@given(st.floats(0.1, 3), st.floats(0.1, 3), st.floats(-1, 1), st.floats(0, 6))
def test_closed_oscillator_conserves_sum(vx, vp, c, t):
    s = analytic_moments_noninteracting(t, 0.0, MomentState(vx, vp, c))
    assert s.var_x + s.var_p == pytest.approx(vx + vp, rel=1e-12)


@settings(max_examples=40)
@given(st.floats(0.1, 3), st.floats(0.1, 3), st.floats(-1, 1), st.floats(0, 5), st.floats(0.1, 4))
def test_analytic_solves_moment_equations(vx, vp, c, kappa, t):
    # d vx = c, d vp = -c + 2 kappa, d c = 2 vp - 2 vx, checked by central differences
    init = MomentState(vx, vp, c)
    h = 1e-5
    lo = np.array(analytic_moments_noninteracting(t - h, kappa, init))
    hi = np.array(analytic_moments_noninteracting(t + h, kappa, init))
    s = analytic_moments_noninteracting(t, kappa, init)
    deriv = (hi - lo) / (2 * h)
    rhs = [s.cov_xp, -s.cov_xp + 2 * kappa, 2 * s.var_p - 2 * s.var_x]
    np.testing.assert_allclose(deriv, rhs, atol=1e-6)


@given(st.floats(0.1, 3), st.floats(0.1, 3), st.floats(-1, 1), st.floats(0, 5), st.floats(0, 4))
def test_expm_matches_closed_form(vx, vp, c, kappa, t):
    init = MomentState(vx, vp, c)
    np.testing.assert_allclose(linear_moments(t, kappa, init, 2.0),
                               analytic_moments_noninteracting(t, kappa, init), atol=1e-10)


def test_single_particle_identity_and_eigenstate():
    lat = build_lattice(21, 0.5)
    ups = hopping_matrix(lat)
    a = np.random.default_rng(0).normal(size=21) + 0j
    np.testing.assert_allclose(single_particle_evolve(ups, a, 0.0), a, atol=1e-12)
    w, v = np.linalg.eigh(ups)
    out = single_particle_evolve(ups, v[:, 0], 1.7)
    np.testing.assert_allclose(out, v[:, 0] * np.exp(-1j * w[0] * 1.7), atol=1e-12)


def test_single_particle_full_period():
    lat = lattice_for(0.05, 10.0)
    x = lat.positions
    a = np.exp(-((x - 1.5) ** 2) / 2) + 0j
    out = single_particle_evolve(hopping_matrix(lat), a, 2 * math.pi)
    np.testing.assert_allclose(np.abs(out) ** 2, np.abs(a) ** 2, atol=5e-3)


def test_single_particle_density_matrix_closed_limit():
    lat = build_lattice(15, 0.5)
    a = np.exp(-lat.positions**2 / 2) + 0j
    rho = single_particle_density_matrix(lat, np.outer(a, a.conj()), 0.0, 0.9)
    b = single_particle_evolve(hopping_matrix(lat), a, 0.9)
    np.testing.assert_allclose(rho, np.outer(b, b.conj()), atol=1e-8)


def test_fock_dimension_bound():
    with pytest.raises(ValueError):
        FockConfig(5, 2)
    with pytest.raises(ValueError):
        FockConfig(3, 16)
    with pytest.raises(ValueError):
        FockConfig(2, 0)
    f = FockConfig(3, 15)
    assert len(f.basis()) == math.comb(18, 3)


def test_two_site_rabi_oscillation():
    lat = build_lattice(2, 1.0)
    space = FockSpace(FockConfig(2, 3))
    ham = space.hamiltonian(hopping_matrix(lat), 0.0)
    psi = np.zeros(space.dim, complex)
    psi[space.index[(1, 0)]] = 1.0
    j = 0.5 / lat.dx**2
    for t in (0.3, 1.1, 2.0):
        rho, _ = evolve_density_matrix(space, ham, np.zeros(space.dim), 0.0, np.outer(psi, psi), t)
        n = expectations(space, rho, lat, 1.0).occupations
        np.testing.assert_allclose(n, [math.cos(j * t) ** 2, math.sin(j * t) ** 2], atol=1e-8)


@pytest.fixture(scope="module")
def small_instance():
    lat = build_lattice(3, 1.0)
    params = PhysicalParams(2.0, 0.5, 0.5)
    gs = solve_ground_state(lat, params, check_coverage=False)
    amps = gs.amplitudes * math.sqrt(lat.dx)
    return lat, params, amps, master_equation_evolve(FockConfig(3, 12), params, lat, amps, 0.1)


def test_master_equation_physical_state(small_instance):
    *_, res = small_instance
    rho = res.rho
    assert abs(np.trace(rho) - 1) < 1e-9
    assert np.max(np.abs(rho - rho.conj().T)) < 1e-9
    assert np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min() > -1e-8


def test_master_equation_conserves_number(small_instance):
    lat, params, amps, res = small_instance
    start = master_equation_evolve(FockConfig(3, 12), params, lat, amps, 0.0)
    assert res.total_number == pytest.approx(start.total_number, abs=1e-8)
    assert res.truncation_loss < 1e-6


def test_master_equation_parity(small_instance):
    *_, res = small_instance
    assert res.occupations[0] == pytest.approx(res.occupations[2], abs=1e-10)
    assert res.x_mean == pytest.approx(0.0, abs=1e-10)


def test_truncation_guard():
    lat = build_lattice(3, 1.0)
    with pytest.raises(TruncationError):
        master_equation_evolve(FockConfig(3, 4), PhysicalParams(6.0), lat, [1.4, 1.4, 1.4], 0.1)


def test_master_equation_matches_single_particle_when_linear():
    lat = build_lattice(3, 0.8)
    a0 = np.array([0.6, 0.2 + 0.4j, -0.3])
    res = master_equation_evolve(FockConfig(3, 12), PhysicalParams(1.0), lat, a0, 0.4)
    sp = single_particle_evolve(hopping_matrix(lat), a0, 0.4)
    np.testing.assert_allclose(res.occupations, np.abs(sp) ** 2, atol=1e-8)


def test_master_equation_matches_lindblad_one_body():
    # g = 0: the one-body density matrix obeys a closed equation
    lat = build_lattice(3, 0.8)
    params = PhysicalParams(1.0, 0.0, 0.7)
    a0 = np.array([0.6, 0.5, 0.3])
    res = master_equation_evolve(FockConfig(3, 13), params, lat, a0, 0.3)
    rho1 = single_particle_density_matrix(lat, np.outer(a0, a0.conj()), 0.7, 0.3)
    np.testing.assert_allclose(res.occupations, np.real(np.diag(rho1)), atol=1e-7)


def test_fixture_cache_roundtrip(tmp_path, small_instance):
    lat, params, amps, res = small_instance
    fock = FockConfig(3, 12)
    first = cached_master_equation(tmp_path, fock, params, lat, amps, 0.1)
    files = list(tmp_path.glob("master_*.csv"))
    assert len(files) == 1 and fixture_key(fock, params, lat, amps, 0.1) in files[0].name
    again = cached_master_equation(tmp_path, fock, params, lat, amps, 0.1)
    np.testing.assert_allclose(again.occupations, first.occupations, rtol=1e-15)
    np.testing.assert_allclose(again.g2_numerator, res.g2_numerator, rtol=1e-15)
