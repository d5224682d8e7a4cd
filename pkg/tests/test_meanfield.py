import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from cmbec.core import PhysicalParams
from cmbec.meanfield import (
    MomentDomainError,
    MomentState,
    effective_frequency_sq,
    eta_sweep,
    initial_moments,
    integrate_moments,
    moment_rhs,
    relative_spreading,
    validity_margin,
)
from cmbec.oracle import linear_moments


def test_effective_frequency_values():
    assert effective_frequency_sq(0.7, PhysicalParams(100.0)) == 1.0
    p = PhysicalParams.from_gN(2 * math.sqrt(math.pi))
    assert effective_frequency_sq(1.0, p) == pytest.approx(0.0, abs=1e-14)
    assert effective_frequency_sq(1e12, p) == pytest.approx(1.0)
    with pytest.raises(MomentDomainError):
        effective_frequency_sq(0.0, p)


def test_effective_frequency_may_be_negative():
    assert effective_frequency_sq(0.1, PhysicalParams.from_gN(50.0)) < 0


def test_rhs_hand_values():
    d = moment_rhs(MomentState(0.5, 0.5, 0.0), PhysicalParams(100.0))
    np.testing.assert_allclose(d, [0.0, 0.0, -1.0])
    d = moment_rhs(MomentState(0.8, 0.3, 0.0), PhysicalParams(100.0, 0.3, 5.0))
    assert d[1] == pytest.approx(10.0)
    d = moment_rhs(MomentState(0.5, 0.5, 0.0), PhysicalParams(100.0), closure="consistent")
    np.testing.assert_allclose(d, [0.0, 0.0, 0.0])


@given(st.floats(0.05, 5), st.floats(0.05, 5), st.floats(-2, 2), st.floats(0, 20), st.floats(0, 5))
def test_rhs_first_line_is_covariance(vx, vp, c, gN, k):
    d = moment_rhs(MomentState(vx, vp, c), PhysicalParams.from_gN(gN, k))
    assert d[0] == c


def test_initial_state_checks():
    with pytest.raises(ValueError):
        MomentState(0.5, 0.4, 0.0).check_initial()
    with pytest.raises(ValueError):
        MomentState(-0.5, 0.4, 0.0).check_initial()
    s = MomentState.minimum_uncertainty(2.0)
    assert s.var_x * s.var_p == pytest.approx(0.25)


@pytest.mark.parametrize("closure,restoring", [("verbatim", 4.0), ("consistent", 2.0)])
@pytest.mark.parametrize("kappa", [0.0, 1.0, 5.0])
def test_linear_limit_matches_matrix_exponential(closure, restoring, kappa):
    init = MomentState(0.6, 1 / 2.4, 0.0)
    traj = integrate_moments(init, PhysicalParams(100.0, 0.0, kappa), math.pi / 2, 1e-4, closure)
    ref = linear_moments(math.pi / 2, kappa, init, restoring)
    np.testing.assert_allclose(traj.final, ref, rtol=1e-6, atol=1e-12)


def test_sum_rule_without_interaction():
    # restoring coefficient 2: var_x + var_p rotates; with kappa it gains 2 kappa t on average
    init = MomentState(0.5, 0.5, 0.0)
    traj = integrate_moments(init, PhysicalParams(100.0, 0.0, 0.0), 3.0, 1e-3, "consistent")
    s = traj.states[:, 0] + traj.states[:, 1]
    assert np.max(np.abs(s - 1.0)) < 1e-10


def test_integrator_fourth_order():
    init = MomentState(0.6, 1 / 2.4, 0.0)
    p = PhysicalParams.from_gN(1.0, 1.0)
    ref = integrate_moments(init, p, 1.0, 1e-4).final
    e1 = abs(integrate_moments(init, p, 1.0, 2e-2).final[0] - ref[0])
    e2 = abs(integrate_moments(init, p, 1.0, 1e-2).final[0] - ref[0])
    assert 10 < e1 / e2 < 24


def test_domain_error():
    with pytest.raises(MomentDomainError):
        integrate_moments(MomentState(0.01, 25.0, -5.0), PhysicalParams(100.0), 2.0, 1e-3)


def test_relative_spreading():
    assert relative_spreading(1.3, 1.3) == 0.0
    assert relative_spreading(2.0, 1.0) == pytest.approx(1 - 1 / math.sqrt(2))
    with pytest.raises(ValueError):
        relative_spreading(0.0, 1.0)


@given(st.floats(0.01, 100), st.floats(0.01, 100))
def test_spreading_sign(a, b):
    assume(math.sqrt(a) != math.sqrt(b))
    eta = relative_spreading(a, b)
    assert (eta > 0) == (a > b)
    assert eta < 1


def test_eta_zero_without_measurement():
    cells = eta_sweep([0.0, 2.0], [0.0], dt=1e-3)
    assert all(c.eta == 0.0 for c in cells)


def test_eta_independent_of_atom_number_at_zero_coupling():
    a = eta_sweep([0.0], [1.0], n_atoms=100.0, dt=1e-3)[0].eta
    b = eta_sweep([0.0], [1.0], n_atoms=1000.0, dt=1e-3)[0].eta
    assert a == pytest.approx(b, rel=1e-8)


def test_initial_moments_from_ground_state():
    s = initial_moments(0.0)
    assert s.var_x == pytest.approx(0.5, rel=0.02)
    assert s.var_x * s.var_p == pytest.approx(0.25)
    assert s.cov_xp == 0.0


def test_validity_flag():
    p = PhysicalParams.from_gN(10.0)
    assert validity_margin(0.5, p) < 0
    assert validity_margin(10.0, p) > 0
    cells = {c.gN: c for c in eta_sweep([0.5, 10.0], [1.0], dt=1e-3)}
    assert cells[0.5].valid and not cells[10.0].valid


def test_failed_cells_do_not_abort_sweep():
    cells = eta_sweep([1.0], [1.0], dx=0.33, dt=1e-3, t_eval=math.pi / 2)
    assert len(cells) == 1
    with pytest.raises(ValueError):
        eta_sweep([1.0], [1.0], t_eval=0.0)
