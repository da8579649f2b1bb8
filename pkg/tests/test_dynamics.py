"""Vehicle-model tests.  Derived expectations come from independent oracles:
direct formula evaluation for the resistance terms, bisection on the
resistance balance for terminal velocity, and a two-pass 1-D interpolation
for the fuel table."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fleetptc import dynamics as dyn
from fleetptc.errors import ContractViolation, InvalidInput

PT = dyn.Powertrain.default()
PARAMS = PT.params
ENGINE = PT.engine
FUEL_MAP = PT.fuel_map


def make_state(v=0.0, gear=1, **kw):
    return dyn.VehicleState(velocity_m_s=v, gear_index=gear, **kw)


# ---------------------------------------------------------------------------
# step_dynamics


def test_rest_stays_at_rest():
    s = make_state(v=0.0)
    out = dyn.step_dynamics(s, PARAMS, 0.0, 0.0, 0.5, ENGINE, FUEL_MAP)
    assert out.velocity_m_s == 0.0
    assert out.position_m == 0.0


def test_coastdown_decel_matches_hand_formula():
    # independent hand evaluation of the two resistance terms at 20 m/s
    v = 20.0
    rolling = 12000.0 * 9.81 * 0.015
    aero = 0.5 * 1.225 * 0.8 * 7.71 * v ** 2
    expect_accel = -(rolling + aero) / (1.05 * 12000.0)
    s = make_state(v=v, gear=8)
    out = dyn.step_dynamics(s, PARAMS, 0.0, 0.0, 0.5, ENGINE, FUEL_MAP)
    assert out.accel_m_s2 == pytest.approx(expect_accel, rel=1e-12)
    assert out.velocity_m_s == pytest.approx(v + expect_accel * 0.5, rel=1e-12)
    assert out.position_m == pytest.approx(v * 0.5, rel=1e-12)


def resistance_balance_root(torque_Nm, lo=0.1, hi=60.0):
    """Bisection on T/r_w = rolling + aero(V); independent of step_dynamics."""
    def residual(v):
        rolling = PARAMS.weight_N * PARAMS.c_rolling
        aero = 0.5 * PARAMS.air_density_kg_m3 * PARAMS.c_drag \
            * PARAMS.frontal_area_m2 * v * v
        return torque_Nm / PARAMS.wheel_radius_m - rolling - aero
    assert residual(lo) > 0 > residual(hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if residual(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_equilibrium_torque_gives_zero_accel():
    v_star = 17.0
    rolling = PARAMS.weight_N * PARAMS.c_rolling
    aero = 0.5 * PARAMS.air_density_kg_m3 * PARAMS.c_drag \
        * PARAMS.frontal_area_m2 * v_star ** 2
    torque = (rolling + aero) * PARAMS.wheel_radius_m
    out = dyn.step_dynamics(make_state(v=v_star, gear=8), PARAMS, torque, 0.0,
                            0.5, ENGINE, FUEL_MAP)
    assert out.accel_m_s2 == pytest.approx(0.0, abs=1e-12)


def test_terminal_velocity_matches_bisection_root():
    torque = 2500.0
    v_star = resistance_balance_root(torque)
    s = make_state(v=5.0, gear=9)
    for _ in range(4000):  # 2000 s simulated
        s = dyn.step_dynamics(s, PARAMS, torque, 0.0, 0.5, ENGINE, FUEL_MAP)
    assert abs(s.velocity_m_s - v_star) / v_star < 1e-3


def test_step_rejects_nonfinite_and_bad_dt():
    s = make_state(v=1.0)
    with pytest.raises(InvalidInput):
        dyn.step_dynamics(s, PARAMS, float("nan"), 0.0, 0.5, ENGINE, FUEL_MAP)
    with pytest.raises(InvalidInput):
        dyn.step_dynamics(s, PARAMS, 0.0, 0.0, 0.0, ENGINE, FUEL_MAP)
    with pytest.raises(InvalidInput):
        dyn.step_dynamics(s, PARAMS, 1e9, 0.0, 0.5, ENGINE, FUEL_MAP)


def test_step_deterministic():
    s = make_state(v=12.3, gear=5)
    a = dyn.step_dynamics(s, PARAMS, 4321.0, 0.0, 0.5, ENGINE, FUEL_MAP)
    b = dyn.step_dynamics(s, PARAMS, 4321.0, 0.0, 0.5, ENGINE, FUEL_MAP)
    assert a == b


@settings(max_examples=200, deadline=None)
@given(v=st.floats(0.0, 40.0), torque=st.floats(-18000.0, 18000.0),
       gear=st.integers(1, 10))
def test_velocity_never_negative_position_monotone(v, torque, gear):
    s = make_state(v=v, gear=gear)
    out = dyn.step_dynamics(s, PARAMS, torque, 0.0, 0.5, ENGINE, FUEL_MAP)
    assert out.velocity_m_s >= 0.0
    assert out.position_m >= s.position_m
    assert 0.0 <= out.fuel_rate_g_s <= PARAMS.max_fuel_rate_g_s


def test_braking_zero_fuel():
    s = make_state(v=15.0, gear=6)
    out = dyn.step_dynamics(s, PARAMS, -8000.0, 0.0, 0.5, ENGINE, FUEL_MAP)
    assert out.fuel_rate_g_s == 0.0
    assert out.engine_torque_Nm <= 0.0


# ---------------------------------------------------------------------------
# split_brake_torque


def test_brake_split_zero_demand():
    s = make_state(v=10.0, gear=5)
    assert dyn.split_brake_torque(0.0, ENGINE, s, PARAMS) == (0.0, 0.0)


def test_brake_split_engine_absorbs_small_demand():
    s = make_state(v=10.0, gear=5)
    max_eb = ENGINE.max_engine_brake_torque_Nm * PARAMS.final_drive_ratio \
        * PARAMS.gear_ratio(5)
    demand = -0.5 * max_eb
    eb, sb = dyn.split_brake_torque(demand, ENGINE, s, PARAMS)
    assert eb == demand and sb == 0.0


def test_brake_split_overflow_to_service():
    s = make_state(v=10.0, gear=5)
    max_eb = ENGINE.max_engine_brake_torque_Nm * PARAMS.final_drive_ratio \
        * PARAMS.gear_ratio(5)
    demand = -2.0 * max_eb
    eb, sb = dyn.split_brake_torque(demand, ENGINE, s, PARAMS)
    assert eb == pytest.approx(-max_eb)
    assert sb == pytest.approx(demand + max_eb)
    assert eb + sb == pytest.approx(demand, abs=0.0)


def test_brake_split_rejects_positive_demand():
    s = make_state(v=10.0)
    with pytest.raises(ContractViolation):
        dyn.split_brake_torque(1.0, ENGINE, s, PARAMS)


@settings(max_examples=200, deadline=None)
@given(demand=st.floats(-18000.0, 0.0), gear=st.integers(1, 10))
def test_brake_split_conserves_demand(demand, gear):
    s = make_state(v=10.0, gear=gear)
    eb, sb = dyn.split_brake_torque(demand, ENGINE, s, PARAMS)
    assert eb + sb == demand  # exact, not approximate
    assert eb <= 0.0 and sb <= 0.0


# ---------------------------------------------------------------------------
# fuel_rate


def test_fuel_rate_at_grid_nodes():
    sg = FUEL_MAP.engine_speed_grid
    tg = FUEL_MAP.torque_grid
    table = np.asarray(FUEL_MAP.rate_table_g_s)
    for i in (0, 7, 19):
        for j in (1, 10, 19):
            got = dyn.fuel_rate(FUEL_MAP, sg[i], tg[j])
            want = table[i, j] if tg[j] > 0 else 0.0
            assert got == pytest.approx(want, abs=1e-12)


def test_fuel_rate_cell_midpoint():
    fm = dyn.FuelMap((0.0, 1.0), (1.0, 2.0), ((1.0, 2.0), (3.0, 4.0)))
    assert dyn.fuel_rate(fm, 0.5, 1.5) == pytest.approx(2.5, abs=1e-15)


def two_pass_interp(fm, s, t):
    """Independent oracle: interpolate along torque per row, then speed."""
    sg = np.asarray(fm.engine_speed_grid)
    tg = np.asarray(fm.torque_grid)
    table = np.asarray(fm.rate_table_g_s)
    s = min(max(s, sg[0]), sg[-1])
    t = min(max(t, tg[0]), tg[-1])
    per_row = [np.interp(t, tg, row) for row in table]
    return float(np.interp(s, sg, per_row))


def test_fuel_rate_matches_two_pass_oracle():
    rng = np.random.default_rng(0)
    for _ in range(300):
        s = rng.uniform(40.0, 250.0)   # includes off-grid, exercises clamping
        t = rng.uniform(1.0, 2800.0)
        got = dyn.fuel_rate(FUEL_MAP, s, t)
        assert got == pytest.approx(two_pass_interp(FUEL_MAP, s, t), abs=1e-12)
        assert 0.0 <= got <= 18.0


def test_fuel_zero_for_nonpositive_torque():
    assert dyn.fuel_rate(FUEL_MAP, 100.0, 0.0) == 0.0
    assert dyn.fuel_rate(FUEL_MAP, 100.0, -500.0) == 0.0


# ---------------------------------------------------------------------------
# engine_speed_for / power_reserve


def test_engine_speed_arithmetic():
    assert dyn.engine_speed_raw(10.0, 9, PARAMS) == pytest.approx(
        10.0 / 0.498 * 2.64 * 1.0, rel=1e-12)  # = 53.01 rad/s
    # linearity of the raw mapping
    assert dyn.engine_speed_raw(20.0, 9, PARAMS) == pytest.approx(
        2.0 * dyn.engine_speed_raw(10.0, 9, PARAMS), rel=1e-12)


def test_engine_speed_clamps():
    assert dyn.engine_speed_for(0.0, 3, PARAMS, ENGINE) == ENGINE.idle_speed_rad_s
    assert dyn.engine_speed_for(60.0, 1, PARAMS, ENGINE) == ENGINE.max_speed_rad_s
    with pytest.raises(InvalidInput):
        dyn.engine_speed_for(10.0, 11, PARAMS, ENGINE)
    with pytest.raises(InvalidInput):
        dyn.engine_speed_raw(10.0, 0, PARAMS)


def test_power_reserve_limits():
    v = 15.0
    _, p_max = dyn.power_reserve(v, 6, 0.0, ENGINE, PARAMS)
    r_full, _ = dyn.power_reserve(v, 6, p_max, ENGINE, PARAMS)
    r_zero, _ = dyn.power_reserve(v, 6, 0.0, ENGINE, PARAMS)
    assert r_full == 0.0
    assert r_zero == p_max
    # over-demand clamps at zero reserve
    assert dyn.power_reserve(v, 6, 2 * p_max, ENGINE, PARAMS)[0] == 0.0


def test_power_reserve_mid_curve_hand_value():
    # gear 6 at 15 m/s: omega = 15/0.498*2.64*2.46 = 195.59 rad/s (above 180)
    omega = 15.0 / 0.498 * 2.64 * 2.46
    assert 180.0 < omega < 220.0
    width = 220.0 - 180.0
    t_max = (350000.0 / 180.0) * (220.0 - omega) / width \
        + (350000.0 / 220.0) * (omega - 180.0) / width  # piecewise-linear knot interp
    p_max_hand = t_max * omega * 0.937
    reserve, p_max = dyn.power_reserve(15.0, 6, 100000.0, ENGINE, PARAMS)
    assert p_max == pytest.approx(p_max_hand, rel=1e-12)
    assert reserve == pytest.approx(p_max_hand - 100000.0, rel=1e-12)


# ---------------------------------------------------------------------------
# validation and file formats


def test_params_validation():
    with pytest.raises(InvalidInput):
        dyn.VehicleParams(mass_kg=5000.0)
    with pytest.raises(InvalidInput):
        dyn.VehicleParams(gear_ratios=tuple(reversed(dyn.DEFAULT_GEAR_RATIOS)))
    with pytest.raises(InvalidInput):
        dyn.VehicleState(velocity_m_s=-1.0)
    with pytest.raises(InvalidInput):
        dyn.VehicleState(gear_index=0)


def test_fuel_map_file_roundtrip(tmp_path):
    path = tmp_path / "map.txt"
    dyn.save_fuel_map(path, FUEL_MAP)
    back = dyn.load_fuel_map(path)
    assert back == FUEL_MAP


def test_engine_spec_file_roundtrip(tmp_path):
    path = tmp_path / "engine.txt"
    dyn.save_engine_spec(path, ENGINE)
    assert dyn.load_engine_spec(path) == ENGINE


def test_malformed_files_rejected(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("2 2\n0 1\n0 1\n1 2\n")  # missing a table row
    with pytest.raises(InvalidInput):
        dyn.load_fuel_map(p)
