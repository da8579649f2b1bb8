"""Intelligent Driver Model producing the driver's desired acceleration for
the ego vehicle following a route-driven lead vehicle.

Canonical Treiber form:

    a = A_max * [1 - (v / v0)^delta - (s* / gap)^2]
    s* = s0 + max(0, v*t_h + v*(v - v_lead) / (2*sqrt(A_max*b)))

The output is clamped to [ACCEL_FLOOR, A_max]; the floor bounds the
acceleration-error normalizer used by the reward.
"""

import math
from dataclasses import dataclass

from .errors import CollisionError, InvalidInput

ACCEL_FLOOR = -6.0  # m/s^2, lower clamp on the desired acceleration

# desired speed per route = this factor times the route's max speed, so the
# follower can track the profile without saturating at v0
DESIRED_SPEED_FACTOR = 1.05


@dataclass(frozen=True)
class IdmParams:
    desired_speed_m_s: float
    time_headway_s: float = 3.5
    min_gap_m: float = 6.0
    max_accel_m_s2: float = 3.0
    comfort_decel_m_s2: float = 3.0
    accel_exponent: float = 4.0

    def __post_init__(self):
        vals = (self.desired_speed_m_s, self.time_headway_s, self.min_gap_m,
                self.max_accel_m_s2, self.comfort_decel_m_s2, self.accel_exponent)
        if any(not math.isfinite(v) or v <= 0 for v in vals):
            raise InvalidInput("IDM parameters must be positive and finite")
        if not 3.0 <= self.time_headway_s <= 4.0:
            raise InvalidInput(f"time headway {self.time_headway_s} outside [3, 4] s")
        if not 5.0 <= self.min_gap_m <= 7.0:
            raise InvalidInput(f"min gap {self.min_gap_m} outside [5, 7] m")


@dataclass(frozen=True)
class LeadState:
    position_m: float
    velocity_m_s: float

    def __post_init__(self):
        if self.velocity_m_s < 0:
            raise InvalidInput("lead velocity must be >= 0")


def desired_acceleration(ego_v: float, ego_pos: float, lead: LeadState,
                         p: IdmParams) -> float:
    """Driver's desired acceleration; raises CollisionError if the gap closed."""
    gap = lead.position_m - ego_pos
    if gap <= 0:
        raise CollisionError(f"ego reached the lead vehicle (gap {gap:.2f} m)")
    dv = ego_v - lead.velocity_m_s
    s_star = p.min_gap_m + max(
        0.0,
        ego_v * p.time_headway_s
        + ego_v * dv / (2.0 * math.sqrt(p.max_accel_m_s2 * p.comfort_decel_m_s2)))
    accel = p.max_accel_m_s2 * (
        1.0 - (ego_v / p.desired_speed_m_s) ** p.accel_exponent
        - (s_star / gap) ** 2)
    return min(max(accel, ACCEL_FLOOR), p.max_accel_m_s2)
