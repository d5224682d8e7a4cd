import numpy as np
import pytest

from cmbec.core import PhysicalParams, build_lattice, lattice_for
from cmbec.gpe import (
    CoverageError,
    ground_state_density,
    solve_ground_state,
    thomas_fermi_mu,
    write_ground_state_csv,
)


def test_noninteracting_gaussian():
    lat = lattice_for(0.1, 8.0)
    gs = solve_ground_state(lat, PhysicalParams(100.0))
    assert gs.chemical_potential == pytest.approx(0.5, rel=2e-3)
    assert gs.variance == pytest.approx(0.5, rel=2e-3)
    ref = np.exp(-lat.positions**2 / 2)
    ref *= np.sqrt(100.0 / (np.sum(ref**2) * lat.dx))
    np.testing.assert_allclose(gs.amplitudes, ref, atol=5e-3 * ref.max())


def test_normalization_and_symmetry():
    lat = lattice_for(0.33, 10.0)
    gs = solve_ground_state(lat, PhysicalParams.from_gN(10.0))
    dens = ground_state_density(gs, lat)
    assert np.sum(dens) * lat.dx == pytest.approx(100.0, rel=1e-12)
    assert np.array_equal(gs.amplitudes, gs.amplitudes[::-1])
    assert np.all(gs.amplitudes > 0)


def test_energy_decreases_monotonically():
    lat = lattice_for(0.33, 10.0)
    gs = solve_ground_state(lat, PhysicalParams.from_gN(20.0))
    assert np.all(np.diff(gs.energies) <= 1e-10)


def test_stationary_residual():
    lat = lattice_for(0.33, 10.0)
    gs = solve_ground_state(lat, PhysicalParams.from_gN(5.0))
    assert gs.residual < 1e-8


def test_thomas_fermi_limit_large_coupling():
    lat = lattice_for(0.33, 12.0)
    gs = solve_ground_state(lat, PhysicalParams.from_gN(100.0))
    assert gs.chemical_potential == pytest.approx(thomas_fermi_mu(100.0), rel=0.02)


def test_width_increases_with_coupling():
    lat = lattice_for(0.33, 12.0)
    v = [solve_ground_state(lat, PhysicalParams.from_gN(g)).variance for g in (0, 1, 10, 50)]
    assert np.all(np.diff(v) > 0)


def test_coverage_error_on_small_lattice():
    with pytest.raises(CoverageError):
        solve_ground_state(build_lattice(9, 0.33), PhysicalParams(100.0))


def test_csv(tmp_path):
    lat = lattice_for(0.33, 6.0)
    gs = solve_ground_state(lat, PhysicalParams(100.0))
    path = tmp_path / "gs.csv"
    write_ground_state_csv(path, gs, lat)
    rows = path.read_text().splitlines()
    assert rows[0] == "x,phi,density"
    assert len(rows) == lat.m_cells + 1


def test_noninteracting_state_is_exact_eigenvector():
    lat = lattice_for(0.33, 7.0)
    gs = solve_ground_state(lat, PhysicalParams(100.0))
    assert gs.residual < 1e-12
