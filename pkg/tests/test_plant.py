import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize_scalar

from pamjoint import acceptance
from pamjoint import plant as pl

C = pl.PneumaticConstants()
GEOM = pl.PamGeometry()
PLANT = pl.Plant()


def test_critical_ratio_air():
    assert pl.critical_ratio(1.4) == pytest.approx(0.528282, abs=1e-6)


def test_psi_zero_without_pressure_drop():
    assert pl.psi(3e5, 3e5, C) == 0.0


def test_psi_peaks_at_critical_ratio():
    opt = minimize_scalar(lambda r: -pl._psi_subsonic(r, C), bounds=(0.05, 0.99),
                          method="bounded", options={"xatol": 1e-10})
    assert opt.x == pytest.approx(0.5283, abs=1e-4)


def test_psi_choked_plateau_and_continuity():
    r_star = pl.critical_ratio(C.kappa)
    top = pl.psi(r_star * 1e5, 1e5, C)
    assert pl.psi(0.2e5, 1e5, C) == pytest.approx(top, rel=1e-12)
    assert pl.psi((r_star + 1e-9) * 1e5, 1e5, C) == pytest.approx(top, rel=1e-6)


@given(st.floats(min_value=0.53, max_value=0.999))
def test_psi_decreases_in_subsonic_range(r):
    assert pl.psi(r * 1e5, 1e5, C) > pl.psi(min(r + 1e-3, 1.0) * 1e5, 1e5, C)


def test_psi_rejects_nonpositive_pressure():
    with pytest.raises(ValueError):
        pl.psi(0.0, 1e5, C)


def test_mass_flow_signs():
    valve = pl.ValveModel()
    assert pl.mass_flow(5.0, 2e5, C, valve) == 0.0
    assert pl.mass_flow(7.0, 2e5, C, valve) > 0
    assert pl.mass_flow(3.0, 2e5, C, valve) < 0
    with pytest.raises(ValueError):
        pl.mass_flow(10.5, 2e5, C, valve)


def test_fill_flow_is_choked_at_low_muscle_pressure():
    valve = pl.ValveModel()
    assert pl.mass_flow(8.0, 1.2e5, C, valve) == pytest.approx(pl.mass_flow(8.0, 2.5e5, C, valve))


@given(st.floats(min_value=0.0, max_value=0.18))
def test_volume_derivative_matches_finite_difference(s):
    h = 1e-6
    fd = (GEOM.volume(s + h) - GEOM.volume(s - h)) / (2 * h) if s >= h else \
        (GEOM.volume(s + h) - GEOM.volume(s)) / h
    scale = GEOM.dvolume(0.0)
    assert GEOM.dvolume(s) == pytest.approx(fd, abs=1e-5 * scale)


@given(st.floats(min_value=1.1e5, max_value=6e5), st.floats(min_value=0.0, max_value=0.07))
def test_force_is_virtual_work_of_gauge_pressure(p, s):
    assert pl.pam_force(p, s, GEOM) == pytest.approx((p - C.p_atm) * GEOM.dvolume(s), rel=1e-12)


@given(st.floats(min_value=0.9e5, max_value=6e5), st.floats(min_value=0.0, max_value=0.19))
def test_force_nonnegative(p, s):
    assert pl.pam_force(p, s, GEOM) >= 0.0


def test_force_zero_at_gauge_zero_and_max_contraction():
    assert pl.pam_force(C.p_atm, 0.02, GEOM) == 0.0
    assert pl.pam_force(5e5, GEOM.max_contraction, GEOM) == pytest.approx(0.0, abs=1e-9)


def test_volume_rejects_out_of_range_contraction():
    with pytest.raises(ValueError):
        GEOM.volume(-0.01)
    with pytest.raises(ValueError):
        GEOM.volume(GEOM.L0)


def test_closed_valve_pressure_law_keeps_polytropic_invariant():
    # d/dt (p V^kappa) = 0 when no mass enters
    s, s_dot, p = 0.03, 0.2, 2.5e5
    V, dV = GEOM.volume(s), GEOM.dvolume(s)
    p_dot = pl.pressure_derivative(p, s, s_dot, 0.0, C, GEOM)
    d_inv = p_dot * V**C.kappa + p * C.kappa * V ** (C.kappa - 1) * dV * s_dot
    assert d_inv == pytest.approx(0.0, abs=1e-12 * p * V**C.kappa)


def test_vertical_pendulum_feels_no_gravity_torque():
    assert pl.joint_dynamics(math.pi / 2, 0.0, 0.0, pl.MechanicalParams()) == pytest.approx(0.0, abs=1e-12)


def test_torque_balance_gives_zero_acceleration():
    m = pl.MechanicalParams()
    F = m.gravity_torque * math.cos(0.4) / m.r_crank
    assert pl.joint_dynamics(0.4, 0.0, F, m) == pytest.approx(0.0, abs=1e-12)


def test_free_pendulum_small_angle_frequency():
    m = pl.MechanicalParams(c_visc=0.0)
    dt, x = 1e-4, np.array([-math.pi / 2 + 0.1, 0.0])
    f = lambda y: np.array([y[1], pl.joint_dynamics(y[0], y[1], 0.0, m)])
    t, prev, crossings = 0.0, x[1], []
    while len(crossings) < 5:
        x = pl.rk4_step(f, x, dt)
        t += dt
        if prev < 0 <= x[1] or prev > 0 >= x[1]:
            crossings.append(t)
        prev = x[1]
    period = 2 * np.mean(np.diff(crossings))
    assert 2 * math.pi / period == pytest.approx(math.sqrt(3 * pl.G_ACC / (2 * m.l)), rel=0.02)


def test_rhs_vanishes_at_equilibrium():
    x = PLANT.equilibrium(0.8)
    assert np.allclose(PLANT.rhs(x, 5.0), 0.0, atol=1e-9)


def test_fill_raises_pressure():
    assert PLANT.rhs(PLANT.equilibrium(0.8), 7.0)[2] > 0


@given(st.floats(min_value=0.01, max_value=1.5))
@settings(max_examples=30)
def test_equilibrium_angle_inverts_pressure(theta):
    p = pl.equilibrium_pressure(theta, PLANT.params)
    assert pl.equilibrium_angle(p, PLANT.params) == pytest.approx(theta, abs=1e-9)


def test_equilibrium_pressure_increases_with_angle():
    th = np.linspace(0.0, 1.5, 40)
    p = [pl.equilibrium_pressure(a, PLANT.params) for a in th]
    assert np.all(np.diff(p) > 0)


def test_rk4_half_step_difference_small():
    x0 = PLANT.equilibrium(0.7)
    x0[2] += 3000.0
    a = acceptance._free_run(PLANT, x0, 1.0, 1e-3)
    b = acceptance._free_run(PLANT, x0, 1.0, 5e-4)
    assert abs(a[0] - b[0]) < 1e-6


def test_rk4_fourth_order():
    assert acceptance.rk4_order().passed


def test_closed_valve_invariant_drift():
    assert acceptance.adiabatic_drift().passed


def test_energy_non_increasing_with_closed_valve():
    x = PLANT.equilibrium(0.5)
    x[2] += 6000.0
    e_prev = pl.total_energy(x, PLANT.params)
    for _ in range(3000):
        x, hit = PLANT.step(x, 5.0, 1e-3)
        assert not hit
        e = pl.total_energy(x, PLANT.params)
        assert e <= e_prev + 1e-9
        e_prev = e


def test_hard_stops_clamp_state():
    x, hit = pl.clamp_state([-0.1, -1.0, 2e5], PLANT.params)
    assert hit and x[0] == 0.0 and x[1] == 0.0
    x, hit = pl.clamp_state([1.0, 0.0, 7e5], PLANT.params)
    assert hit and x[2] == C.p_supply


def test_step_clips_voltage():
    x = PLANT.equilibrium(0.8)
    a, _ = PLANT.step(x, 25.0, 1e-3)
    b, _ = PLANT.step(x, 10.0, 1e-3)
    assert np.array_equal(a, b)


@pytest.mark.parametrize("kwargs", [dict(L0=-1.0), dict(alpha0=2.0), dict(V_dead=-1e-6)])
def test_geometry_validation(kwargs):
    with pytest.raises(ValueError):
        pl.PamGeometry(**kwargs)


def test_constants_validation():
    with pytest.raises(ValueError):
        pl.PneumaticConstants(kappa=1.0)
    with pytest.raises(ValueError):
        pl.PneumaticConstants(p_supply=5e4)
