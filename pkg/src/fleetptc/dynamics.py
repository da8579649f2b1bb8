"""Longitudinal vehicle, driveline, brake-split and fuel-rate models for a
conventional IC-engine truck with a 10-speed automated transmission.

All functions are pure over frozen value types; a simulation step is
explicit Euler.  Sign convention: rolling resistance, aero drag and the
grade term oppose motion and are subtracted from the traction term, with
the grade term signed by the road angle.  Rolling resistance is zeroed at
standstill and braking can never drive the velocity negative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ContractViolation, InvalidInput

GRAVITY = 9.81  # m/s^2

# effective (inertia-corrected) mass = ROTATING_INERTIA_FACTOR * mass
ROTATING_INERTIA_FACTOR = 1.05

DEFAULT_GEAR_RATIOS = (11.06, 8.19, 6.06, 4.49, 3.32, 2.46, 1.82, 1.35, 1.00, 0.74)

N_GEARS = 10


def _require_finite(**kw):
    for name, val in kw.items():
        if not math.isfinite(val):
            raise InvalidInput(f"{name} must be finite, got {val}")


@dataclass(frozen=True)
class VehicleParams:
    mass_kg: float = 12000.0
    frontal_area_m2: float = 7.71
    wheel_radius_m: float = 0.498
    c_rolling: float = 0.015
    c_drag: float = 0.8
    air_density_kg_m3: float = 1.225
    final_drive_ratio: float = 2.64
    final_drive_eff: float = 0.937
    gear_ratios: tuple = DEFAULT_GEAR_RATIOS
    max_fuel_rate_g_s: float = 18.0
    max_traction_torque_Nm: float = 18000.0

    def __post_init__(self):
        scalars = {f: getattr(self, f) for f in (
            "mass_kg", "frontal_area_m2", "wheel_radius_m", "c_rolling",
            "c_drag", "air_density_kg_m3", "final_drive_ratio",
            "final_drive_eff", "max_fuel_rate_g_s", "max_traction_torque_Nm")}
        _require_finite(**scalars)
        if any(v <= 0 for v in scalars.values()):
            raise InvalidInput("all vehicle parameters must be positive")
        if not 8000.0 <= self.mass_kg <= 24000.0:
            raise InvalidInput(f"mass {self.mass_kg} kg outside [8000, 24000]")
        if len(self.gear_ratios) != N_GEARS:
            raise InvalidInput(f"expected {N_GEARS} gear ratios")
        ratios = self.gear_ratios
        if any(r <= 0 for r in ratios) \
                or any(ratios[i] <= ratios[i + 1] for i in range(N_GEARS - 1)):
            raise InvalidInput("gear ratios must be positive and strictly decreasing")

    @property
    def effective_mass_kg(self) -> float:
        return ROTATING_INERTIA_FACTOR * self.mass_kg

    @property
    def weight_N(self) -> float:
        return self.mass_kg * GRAVITY

    def gear_ratio(self, gear_index: int) -> float:
        if not 1 <= gear_index <= N_GEARS:
            raise InvalidInput(f"gear index {gear_index} outside 1..{N_GEARS}")
        return self.gear_ratios[gear_index - 1]


@dataclass(frozen=True)
class VehicleState:
    velocity_m_s: float = 0.0
    position_m: float = 0.0
    gear_index: int = 1
    accel_m_s2: float = 0.0
    engine_speed_rad_s: float = 0.0
    engine_torque_Nm: float = 0.0
    fuel_rate_g_s: float = 0.0

    def __post_init__(self):
        _require_finite(velocity_m_s=self.velocity_m_s, position_m=self.position_m,
                        accel_m_s2=self.accel_m_s2,
                        engine_speed_rad_s=self.engine_speed_rad_s,
                        engine_torque_Nm=self.engine_torque_Nm,
                        fuel_rate_g_s=self.fuel_rate_g_s)
        if self.velocity_m_s < 0:
            raise InvalidInput("velocity must be >= 0")
        if not 1 <= self.gear_index <= N_GEARS:
            raise InvalidInput(f"gear index {self.gear_index} outside 1..{N_GEARS}")
        if self.fuel_rate_g_s < 0:
            raise InvalidInput("fuel rate must be >= 0")


@dataclass(frozen=True)
class EngineSpec:
    """Synthetic engine envelope: piecewise-linear max-torque curve over
    engine speed, a single max engine-brake torque, and the speed range."""

    max_torque_curve: tuple  # ((speed_rad_s, torque_Nm), ...) ascending speeds
    max_engine_brake_torque_Nm: float = 1500.0
    idle_speed_rad_s: float = 62.8
    max_speed_rad_s: float = 220.0

    def __post_init__(self):
        speeds = [s for s, _ in self.max_torque_curve]
        torques = [t for _, t in self.max_torque_curve]
        if len(speeds) < 2 or any(b <= a for a, b in zip(speeds, speeds[1:])):
            raise InvalidInput("max-torque curve needs >= 2 knots, ascending speeds")
        if any(t < 0 for t in torques):
            raise InvalidInput("max torque must be >= 0 over the operating range")
        if self.max_engine_brake_torque_Nm < 0:
            raise InvalidInput("engine brake torque must be >= 0")
        if not 0 < self.idle_speed_rad_s < self.max_speed_rad_s:
            raise InvalidInput("need 0 < idle < max engine speed")

    def max_torque(self, engine_speed_rad_s: float) -> float:
        """Max engine torque at a speed; clamps beyond the curve ends."""
        speeds = [s for s, _ in self.max_torque_curve]
        torques = [t for _, t in self.max_torque_curve]
        return float(np.interp(engine_speed_rad_s, speeds, torques))


@dataclass(frozen=True)
class FuelMap:
    """Fuel rate [g/s] tabulated over (engine speed, engine torque)."""

    engine_speed_grid: tuple   # rad/s, strictly ascending
    torque_grid: tuple         # Nm, strictly ascending
    rate_table_g_s: tuple      # rows follow engine_speed_grid

    def __post_init__(self):
        sg, tg = self.engine_speed_grid, self.torque_grid
        if any(b <= a for a, b in zip(sg, sg[1:])) or any(b <= a for a, b in zip(tg, tg[1:])):
            raise InvalidInput("fuel map grids must be strictly ascending")
        table = np.asarray(self.rate_table_g_s, dtype=float)
        if table.shape != (len(sg), len(tg)):
            raise InvalidInput(f"rate table shape {table.shape} != ({len(sg)}, {len(tg)})")
        if np.any(table < 0):
            raise InvalidInput("fuel rates must be >= 0")

    @property
    def max_rate_g_s(self) -> float:
        return float(np.max(np.asarray(self.rate_table_g_s)))


def fuel_rate(fuel_map: FuelMap, engine_speed_rad_s: float, engine_torque_Nm: float) -> float:
    """Bilinear interpolation of the fuel table, clamped to the grid edges.

    Zero whenever the commanded engine torque is <= 0 (fuel cut on overrun).
    """
    if engine_torque_Nm <= 0.0:
        return 0.0
    sg = np.asarray(fuel_map.engine_speed_grid)
    tg = np.asarray(fuel_map.torque_grid)
    table = np.asarray(fuel_map.rate_table_g_s)
    s = min(max(engine_speed_rad_s, sg[0]), sg[-1])
    t = min(max(engine_torque_Nm, tg[0]), tg[-1])
    i = min(int(np.searchsorted(sg, s, side="right")) - 1, len(sg) - 2)
    j = min(int(np.searchsorted(tg, t, side="right")) - 1, len(tg) - 2)
    i = max(i, 0)
    j = max(j, 0)
    fs = (s - sg[i]) / (sg[i + 1] - sg[i])
    ft = (t - tg[j]) / (tg[j + 1] - tg[j])
    top = table[i, j] * (1 - ft) + table[i, j + 1] * ft
    bot = table[i + 1, j] * (1 - ft) + table[i + 1, j + 1] * ft
    return float(top * (1 - fs) + bot * fs)


def engine_speed_raw(v_m_s: float, gear_index: int, params: VehicleParams) -> float:
    """Driveline-kinematic engine speed before idle/redline clamping."""
    return (v_m_s / params.wheel_radius_m) * params.final_drive_ratio \
        * params.gear_ratio(gear_index)


def engine_speed_for(v_m_s: float, gear_index: int, params: VehicleParams,
                     engine: EngineSpec) -> float:
    """Engine speed in the given gear, clamped to [idle, max]."""
    raw = engine_speed_raw(v_m_s, gear_index, params)
    return min(max(raw, engine.idle_speed_rad_s), engine.max_speed_rad_s)


def max_wheel_torque(v_m_s: float, gear_index: int, params: VehicleParams,
                     engine: EngineSpec) -> float:
    """Deliverable positive wheel torque at this operating point, also capped
    by the actuator bound max_traction_torque_Nm."""
    omega = engine_speed_for(v_m_s, gear_index, params, engine)
    at_wheel = engine.max_torque(omega) * params.final_drive_ratio \
        * params.gear_ratio(gear_index) * params.final_drive_eff
    return min(at_wheel, params.max_traction_torque_Nm)


def split_brake_torque(demand_Nm: float, engine: EngineSpec, state: VehicleState,
                       params: VehicleParams):
    """Split a (non-positive) wheel torque demand into engine braking first,
    service brakes for the remainder.  Parts sum to the demand exactly."""
    if demand_Nm > 0:
        raise ContractViolation(f"brake split needs demand <= 0, got {demand_Nm}")
    max_engine_at_wheel = engine.max_engine_brake_torque_Nm \
        * params.final_drive_ratio * params.gear_ratio(state.gear_index)
    engine_brake = max(demand_Nm, -max_engine_at_wheel)
    service_brake = demand_Nm - engine_brake
    return engine_brake, service_brake


def resistance_forces(v_m_s: float, grade_rad: float, params: VehicleParams):
    """(rolling, aero, grade) forces in N.  Rolling is zero at standstill."""
    rolling = params.weight_N * params.c_rolling * math.cos(grade_rad) if v_m_s > 0 else 0.0
    aero = 0.5 * params.air_density_kg_m3 * params.c_drag \
        * params.frontal_area_m2 * v_m_s * v_m_s
    grade = params.weight_N * math.sin(grade_rad)
    return rolling, aero, grade


def step_dynamics(state: VehicleState, params: VehicleParams,
                  traction_torque_Nm: float, grade_rad: float, dt_s: float,
                  engine: EngineSpec, fuel_map: FuelMap) -> VehicleState:
    """Advance the vehicle by one explicit-Euler step of dt_s seconds.

    dv/dt = [T_t / r_w - rolling - aero - grade] / effective_mass, with the
    velocity clamped at zero.  Position integrates the pre-step velocity.
    Engine speed, engine torque and fuel rate in the returned state describe
    the post-step operating point with the commanded torque held.
    """
    _require_finite(traction_torque_Nm=traction_torque_Nm, grade_rad=grade_rad,
                    dt_s=dt_s)
    if dt_s <= 0:
        raise InvalidInput(f"dt must be > 0, got {dt_s}")
    if abs(traction_torque_Nm) > params.max_traction_torque_Nm + 1e-9:
        raise InvalidInput(
            f"|traction torque| {abs(traction_torque_Nm)} exceeds "
            f"{params.max_traction_torque_Nm}")

    v = state.velocity_m_s
    rolling, aero, grade = resistance_forces(v, grade_rad, params)
    accel = (traction_torque_Nm / params.wheel_radius_m - rolling - aero - grade) \
        / params.effective_mass_kg
    v_next = max(0.0, v + accel * dt_s)
    position = state.position_m + v * dt_s
    accel_realized = (v_next - v) / dt_s

    omega = engine_speed_for(v_next, state.gear_index, params, engine)
    ratio = params.final_drive_ratio * params.gear_ratio(state.gear_index)
    if traction_torque_Nm > 0:
        engine_torque = traction_torque_Nm / (ratio * params.final_drive_eff)
    elif traction_torque_Nm < 0:
        engine_brake, _ = split_brake_torque(traction_torque_Nm, engine, state, params)
        engine_torque = engine_brake / ratio
    else:
        engine_torque = 0.0
    rate = fuel_rate(fuel_map, omega, engine_torque)

    return replace(state, velocity_m_s=v_next, position_m=position,
                   accel_m_s2=accel_realized, engine_speed_rad_s=omega,
                   engine_torque_Nm=engine_torque, fuel_rate_g_s=rate)


def power_reserve(v_m_s: float, gear_index: int, current_wheel_power_W: float,
                  engine: EngineSpec, params: VehicleParams):
    """(reserve, max) wheel power at this operating point.

    Max is the engine's max torque at the current engine speed times that
    speed, through the final-drive efficiency; the reserve is what is left
    after the currently commanded wheel power, clamped at >= 0.
    """
    if v_m_s < 0:
        raise InvalidInput("velocity must be >= 0")
    omega = engine_speed_for(v_m_s, gear_index, params, engine)
    p_max = engine.max_torque(omega) * omega * params.final_drive_eff
    reserve = max(0.0, p_max - current_wheel_power_W)
    return reserve, p_max


# ---------------------------------------------------------------------------
# synthetic defaults


def default_engine() -> EngineSpec:
    """Flat-then-hyperbolic max-torque envelope peaking at 2500 Nm."""
    peak_power = 350000.0  # W, constant-power branch above 140 rad/s
    curve = (
        (62.8, 1600.0),
        (90.0, 2500.0),
        (140.0, 2500.0),
        (180.0, peak_power / 180.0),
        (220.0, peak_power / 220.0),
    )
    return EngineSpec(max_torque_curve=curve)


def default_fuel_map(engine: EngineSpec | None = None, n_speed: int = 20,
                     n_torque: int = 20, max_rate_g_s: float = 18.0) -> FuelMap:
    """Willans-style affine fuel model sampled onto a grid.

    fuel [g/s] = max(0, k0*omega + k1*omega*T) / LHV, capped at max_rate.
    k0 is an equivalent friction torque, k1 an inverse indicated efficiency,
    LHV the lower heating value of diesel in J/g.
    """
    engine = engine or default_engine()
    k0 = 90.0      # Nm
    k1 = 2.15      # dimensionless
    lhv = 42800.0  # J/g
    speeds = np.linspace(engine.idle_speed_rad_s, engine.max_speed_rad_s, n_speed)
    torques = np.linspace(0.0, max(t for _, t in engine.max_torque_curve), n_torque)
    om, tq = np.meshgrid(speeds, torques, indexing="ij")
    rates = np.clip((k0 * om + k1 * om * tq) / lhv, 0.0, max_rate_g_s)
    return FuelMap(tuple(speeds.tolist()), tuple(torques.tolist()),
                   tuple(tuple(row) for row in rates.tolist()))


# ---------------------------------------------------------------------------
# plain-text tabular formats (documented in docs/formats.md)


def save_fuel_map(path, fuel_map: FuelMap):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(fuel_map.engine_speed_grid)} {len(fuel_map.torque_grid)}\n")
        fh.write(" ".join(repr(float(v)) for v in fuel_map.engine_speed_grid) + "\n")
        fh.write(" ".join(repr(float(v)) for v in fuel_map.torque_grid) + "\n")
        for row in fuel_map.rate_table_g_s:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_fuel_map(path) -> FuelMap:
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines()
                 if ln.strip() and not ln.lstrip().startswith("#")]
    try:
        n_speed, n_torque = (int(tok) for tok in lines[0].split())
        speeds = tuple(float(tok) for tok in lines[1].split())
        torques = tuple(float(tok) for tok in lines[2].split())
        rows = tuple(tuple(float(tok) for tok in lines[3 + i].split())
                     for i in range(n_speed))
    except (IndexError, ValueError) as err:
        raise InvalidInput(f"malformed fuel map file: {err}") from None
    if len(speeds) != n_speed or len(torques) != n_torque \
            or any(len(r) != n_torque for r in rows):
        raise InvalidInput("fuel map file sizes do not match its header")
    return FuelMap(speeds, torques, rows)


def save_engine_spec(path, engine: EngineSpec):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(engine.max_torque_curve)} "
                 f"{float(engine.max_engine_brake_torque_Nm)!r} "
                 f"{float(engine.idle_speed_rad_s)!r} "
                 f"{float(engine.max_speed_rad_s)!r}\n")
        for s, t in engine.max_torque_curve:
            fh.write(f"{float(s)!r} {float(t)!r}\n")


def load_engine_spec(path) -> EngineSpec:
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines()
                 if ln.strip() and not ln.lstrip().startswith("#")]
    try:
        head = lines[0].split()
        n_knots = int(head[0])
        brake, idle, vmax = (float(tok) for tok in head[1:4])
        knots = tuple((float(a), float(b)) for a, b in
                      (lines[1 + i].split() for i in range(n_knots)))
    except (IndexError, ValueError) as err:
        raise InvalidInput(f"malformed engine spec file: {err}") from None
    return EngineSpec(max_torque_curve=knots, max_engine_brake_torque_Nm=brake,
                      idle_speed_rad_s=idle, max_speed_rad_s=vmax)


@dataclass(frozen=True)
class Powertrain:
    """Bundle of the three static models a simulation step needs."""

    params: VehicleParams
    engine: EngineSpec
    fuel_map: FuelMap

    @classmethod
    def default(cls, mass_kg: float = 12000.0) -> "Powertrain":
        engine = default_engine()
        return cls(VehicleParams(mass_kg=mass_kg), engine, default_fuel_map(engine))
