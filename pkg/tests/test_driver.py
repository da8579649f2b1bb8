"""Driver-model tests; the following-equilibrium expectation is produced by
an independent bisection on the gap."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fleetptc import driver
from fleetptc.errors import CollisionError, InvalidInput


def params(v0=20.0, th=3.5, s0=6.0):
    return driver.IdmParams(desired_speed_m_s=v0, time_headway_s=th, min_gap_m=s0)


def test_free_road_from_rest_gives_max_accel():
    p = params()
    lead = driver.LeadState(position_m=1e6, velocity_m_s=20.0)
    a = driver.desired_acceleration(0.0, 0.0, lead, p)
    assert a == pytest.approx(p.max_accel_m_s2, rel=1e-9)


def test_desired_speed_equilibrium():
    p = params(v0=20.0)
    lead = driver.LeadState(position_m=1e6, velocity_m_s=20.0)
    a = driver.desired_acceleration(20.0, 0.0, lead, p)
    assert abs(a) < 1e-6  # s0^2/gap^2 term is ~0 at gap 1e6


def test_equilibrium_gap_found_by_bisection():
    # same-speed following: bisect the gap where desired accel crosses zero,
    # then the model must report ~0 exactly there
    p = params(v0=25.0)
    v = 15.0
    lead_v = 15.0

    def accel_at(gap):
        lead = driver.LeadState(position_m=gap, velocity_m_s=lead_v)
        return driver.desired_acceleration(v, 0.0, lead, p)

    lo, hi = 1.0, 1e5
    assert accel_at(lo) < 0 < accel_at(hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if accel_at(mid) < 0:
            lo = mid
        else:
            hi = mid
    gap_star = 0.5 * (lo + hi)
    assert abs(accel_at(gap_star)) < 1e-6


def test_collision_raises():
    p = params()
    with pytest.raises(CollisionError):
        driver.desired_acceleration(5.0, 100.0, driver.LeadState(99.0, 5.0), p)


def test_clamps():
    p = params(v0=10.0)
    # hopeless closing situation: clamp at the floor
    lead = driver.LeadState(position_m=2.0, velocity_m_s=0.0)
    a = driver.desired_acceleration(10.0, 0.0, lead, p)
    assert a == driver.ACCEL_FLOOR


@settings(max_examples=300, deadline=None)
@given(v=st.floats(0.0, 30.0), gap=st.floats(1.0, 1e5),
       lead_v=st.floats(0.0, 30.0))
def test_bounds_and_determinism(v, gap, lead_v):
    p = params(v0=31.0)
    lead = driver.LeadState(position_m=gap, velocity_m_s=lead_v)
    a1 = driver.desired_acceleration(v, 0.0, lead, p)
    a2 = driver.desired_acceleration(v, 0.0, lead, p)
    assert a1 == a2
    assert driver.ACCEL_FLOOR <= a1 <= p.max_accel_m_s2


def test_monotone_in_gap():
    p = params(v0=25.0)
    gaps = np.linspace(5.0, 500.0, 60)
    accels = [driver.desired_acceleration(15.0, 0.0, driver.LeadState(g, 12.0), p)
              for g in gaps]
    diffs = np.diff(accels)
    clamped = [a in (driver.ACCEL_FLOOR, p.max_accel_m_s2) for a in accels]
    for d, c0, c1 in zip(diffs, clamped, clamped[1:]):
        if not (c0 and c1):
            assert d > 0  # strictly more accel as the gap opens


def test_param_validation():
    with pytest.raises(InvalidInput):
        driver.IdmParams(desired_speed_m_s=20.0, time_headway_s=2.0)
    with pytest.raises(InvalidInput):
        driver.IdmParams(desired_speed_m_s=20.0, min_gap_m=10.0)
    with pytest.raises(InvalidInput):
        driver.LeadState(0.0, -1.0)
