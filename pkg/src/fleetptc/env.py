"""The per-vehicle MDP: state assembly, hybrid-action application with
powertrain feasibility enforcement, multi-objective reward, and the episode
loop against a route-driven leader.

The agent observes [v, a, a_des, gear, a_des_prev, gear_prev] and outputs a
wheel-torque request plus a gear command in {-1, 0, +1}.  Infeasible
requests are silently projected onto the feasible set (the requested torque
still enters its penalty term).  Reward components are individually
normalized into [0, 1] so the reward is bounded in [-sum(weights), 0].
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from . import dynamics as dyn
from .driver import ACCEL_FLOOR, LeadState, desired_acceleration
from .errors import CollisionError, InvalidInput
from .routes import EpisodeConfig

DT_S = 0.5  # shared by the MDP and the dynamics integration

STATE_DIM = 6
STATE_FIELDS = ("v_e", "a_e", "a_des", "n_g", "a_des_prev", "n_g_prev")

# normalizers for the reward terms
DELTA_A_MAX = 9.0  # m/s^2: span of the desired-acceleration clamp (3 - (-6))
RESERVE_POWER_FLOOR_W = 1000.0  # keeps the reserve term finite near standstill

COMPONENT_NAMES = ("accel", "fuel", "shift", "torque", "reserve")

# feature scaling applied before networks see a state
_OBS_SCALE = np.array([1 / 30.0, 1 / 3.0, 1 / 3.0, 1 / 4.5, 1 / 3.0, 1 / 4.5])
_OBS_SHIFT = np.array([0.0, 0.0, 0.0, 5.5, 0.0, 5.5])

GEAR_CMDS = (-1, 0, 1)  # categorical classes 0,1,2 map onto these

# fleet-wide action-space bound; policies emit torque normalized by this
TORQUE_SCALE_NM = 18000.0

DIESEL_DENSITY_G_PER_L = 850.0
LITERS_PER_GALLON = 3.78541
METERS_PER_MILE = 1609.344


def encode_state(raw):
    """Normalize raw state rows (…, 6) for network consumption."""
    return (np.asarray(raw, dtype=np.float64) - _OBS_SHIFT) * _OBS_SCALE


def decode_state(encoded):
    """Inverse of encode_state."""
    return np.asarray(encoded, dtype=np.float64) / _OBS_SCALE + _OBS_SHIFT


@dataclass(frozen=True)
class StateVector:
    v_e: float
    a_e: float
    a_des: float
    n_g: float
    a_des_prev: float
    n_g_prev: float

    def __post_init__(self):
        if not 1.0 <= self.n_g <= 10.0 or not 1.0 <= self.n_g_prev <= 10.0:
            raise InvalidInput("gear fields must lie in [1, 10]")

    def as_array(self):
        return np.array([self.v_e, self.a_e, self.a_des, self.n_g,
                         self.a_des_prev, self.n_g_prev])

    @classmethod
    def from_array(cls, arr):
        return cls(*(float(x) for x in arr))


@dataclass(frozen=True)
class HybridAction:
    torque_Nm: float
    gear_cmd: int  # -1 downshift, 0 hold, +1 upshift

    def __post_init__(self):
        if self.gear_cmd not in GEAR_CMDS:
            raise InvalidInput(f"gear command {self.gear_cmd} not in {GEAR_CMDS}")
        if not math.isfinite(self.torque_Nm):
            raise InvalidInput("torque must be finite")


@dataclass(frozen=True)
class RewardWeights:
    w_accel: float = 0.45
    w_fuel: float = 0.25
    w_shift: float = 0.15
    w_torque: float = 0.05
    w_reserve: float = 0.10

    def __post_init__(self):
        vals = self.as_tuple()
        if any(w < 0 for w in vals):
            raise InvalidInput("reward weights must be >= 0")
        if all(w == 0 for w in vals):
            raise InvalidInput("at least one reward weight must be > 0")

    def as_tuple(self):
        return (self.w_accel, self.w_fuel, self.w_shift, self.w_torque,
                self.w_reserve)

    def total(self):
        return sum(self.as_tuple())


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: HybridAction
    reward: float
    next_state: np.ndarray
    behavior_log_prob_cont: float
    behavior_log_prob_disc: float
    done_flag: bool


def resolve_gear_command(v, gear, cmd, params, engine):
    """Feasible gear after a shift command.

    A shift is applied only if the target stays in 1..10 and its raw engine
    speed does not lug below idle (upshift) or over-rev past max (downshift).
    """
    if cmd == 0:
        return gear
    cand = gear + cmd
    if not 1 <= cand <= dyn.N_GEARS:
        return gear
    raw = dyn.engine_speed_raw(v, cand, params)
    if cmd > 0 and raw < engine.idle_speed_rad_s:
        return gear
    if cmd < 0 and raw > engine.max_speed_rad_s:
        return gear
    return cand


def apply_action(vstate: dyn.VehicleState, a_des: float, action: HybridAction,
                 pt: dyn.Powertrain, weights: RewardWeights, dt_s: float = DT_S):
    """One powertrain transition under a (possibly infeasible) action.

    Returns (next vehicle state, reward, components dict).  The gear command
    and torque are projected onto what the powertrain can deliver; the
    requested torque magnitude still enters the torque penalty.  All
    component terms are clamped into [0, 1].
    """
    params, engine = pt.params, pt.engine
    t_max = params.max_traction_torque_Nm
    torque_req = min(max(action.torque_Nm, -t_max), t_max)

    gear_new = resolve_gear_command(vstate.velocity_m_s, vstate.gear_index,
                                    action.gear_cmd, params, engine)
    deliverable = dyn.max_wheel_torque(vstate.velocity_m_s, gear_new, params, engine)
    torque_applied = min(max(torque_req, -t_max), deliverable)

    staged = dataclasses.replace(vstate, gear_index=gear_new)
    nxt = dyn.step_dynamics(staged, params, torque_applied, 0.0, dt_s,
                            engine, pt.fuel_map)

    wheel_power = torque_applied * nxt.velocity_m_s / params.wheel_radius_m
    reserve, reserve_max = dyn.power_reserve(nxt.velocity_m_s, gear_new,
                                             wheel_power, engine, params)

    c_accel = min(abs(a_des - nxt.accel_m_s2) / DELTA_A_MAX, 1.0)
    c_fuel = min(nxt.fuel_rate_g_s / params.max_fuel_rate_g_s, 1.0)
    c_shift = float(abs(gear_new - vstate.gear_index))
    c_torque = min(abs(torque_req) / t_max, 1.0)
    c_reserve = min(max((reserve_max - reserve)
                        / max(reserve_max, RESERVE_POWER_FLOOR_W), 0.0), 1.0)
    components = {"accel": c_accel, "fuel": c_fuel, "shift": c_shift,
                  "torque": c_torque, "reserve": c_reserve}
    reward = -(weights.w_accel * c_accel + weights.w_fuel * c_fuel
               + weights.w_shift * c_shift + weights.w_torque * c_torque
               + weights.w_reserve * c_reserve)
    return nxt, reward, components


def compute_mpg(total_fuel_g: float, distance_m: float) -> float:
    """Miles per gallon from grams of diesel and meters travelled.

    Zero fuel over positive distance returns the +inf sentinel.
    """
    if distance_m <= 0:
        raise InvalidInput(f"distance must be > 0, got {distance_m}")
    if total_fuel_g < 0:
        raise InvalidInput("fuel mass must be >= 0")
    if total_fuel_g == 0:
        return math.inf
    miles = distance_m / METERS_PER_MILE
    gallons = total_fuel_g / (DIESEL_DENSITY_G_PER_L * LITERS_PER_GALLON)
    return miles / gallons


def initial_gear(v, params, engine):
    """Deterministic launch gear: highest gear not lugging the engine."""
    if v <= 0.1:
        return 1
    for g in range(dyn.N_GEARS, 0, -1):
        if dyn.engine_speed_raw(v, g, params) >= 1.3 * engine.idle_speed_rad_s:
            return g
    return 1


class PowertrainEnv:
    """One vehicle following a route-driven leader through the IDM driver."""

    def __init__(self, episode: EpisodeConfig, weights: RewardWeights | None = None,
                 powertrain: dyn.Powertrain | None = None, dt_s: float = DT_S,
                 initial_gap_margin_m: float = 10.0):
        self.episode = episode
        self.weights = weights or RewardWeights()
        self.pt = powertrain or dyn.Powertrain.default(mass_kg=episode.mass_kg)
        self.dt_s = dt_s
        self.n_steps = int(round(episode.duration_s / dt_s))
        route = episode.route
        times = np.arange(self.n_steps + 1) * dt_s
        route_t = np.arange(len(route.speeds_m_s)) * route.dt_s
        self.lead_v = np.interp(times, route_t, route.speeds)
        self.lead_pos = np.concatenate(
            ([0.0], np.cumsum(0.5 * (self.lead_v[1:] + self.lead_v[:-1]) * dt_s)))
        # start at the same-speed IDM equilibrium gap plus a margin, so the
        # driver demand opens near zero instead of with a braking transient
        p = episode.idm_params
        v0 = float(self.lead_v[0])
        s_star = p.min_gap_m + p.time_headway_s * v0
        free = max(1.0 - (v0 / p.desired_speed_m_s) ** p.accel_exponent, 1e-3)
        self.initial_gap = s_star / math.sqrt(free) + initial_gap_margin_m
        self.reset()

    def reset(self):
        v0 = float(self.lead_v[0])
        g0 = initial_gear(v0, self.pt.params, self.pt.engine)
        self.k = 0
        self.collided = False
        self.vstate = dyn.VehicleState(
            velocity_m_s=v0, position_m=self.lead_pos[0] - self.initial_gap,
            gear_index=g0,
            engine_speed_rad_s=dyn.engine_speed_for(v0, g0, self.pt.params,
                                                    self.pt.engine))
        self.a_des = self._desired_accel(0, self.vstate)
        self.obs = np.array([v0, 0.0, self.a_des, float(g0), self.a_des, float(g0)])
        return self.obs.copy()

    def _desired_accel(self, k, vstate):
        lead = LeadState(position_m=float(self.lead_pos[k]),
                         velocity_m_s=float(self.lead_v[k]))
        return desired_acceleration(vstate.velocity_m_s, vstate.position_m,
                                    lead, self.episode.idm_params)

    def step(self, action: HybridAction):
        """Returns (next_obs, reward, components, done, info)."""
        if self.k >= self.n_steps:
            raise InvalidInput("episode already finished; call reset()")
        prev = self.vstate
        nxt, reward, components = apply_action(prev, self.a_des, action,
                                               self.pt, self.weights, self.dt_s)
        self.k += 1
        self.vstate = nxt
        done = self.k >= self.n_steps
        try:
            a_des_next = self._desired_accel(self.k, nxt)
        except CollisionError:
            self.collided = True
            done = True
            a_des_next = ACCEL_FLOOR
        next_obs = np.array([nxt.velocity_m_s, nxt.accel_m_s2, a_des_next,
                             float(nxt.gear_index), self.a_des,
                             float(prev.gear_index)])
        info = {"fuel_g": nxt.fuel_rate_g_s * self.dt_s,
                "distance_m": nxt.position_m - prev.position_m,
                "collided": self.collided,
                "a_des": self.a_des, "a_e_next": nxt.accel_m_s2,
                "gear": nxt.gear_index}
        self.a_des = a_des_next
        self.obs = next_obs
        return next_obs.copy(), reward, components, done, info


@dataclass
class Trajectory:
    """Column-array record of one episode (what the replay buffer ingests)."""

    states: np.ndarray        # (n, 6) raw state rows
    torque_norm: np.ndarray   # (n,) normalized torque actually stored/replayed
    gear_class: np.ndarray    # (n,) int in {0,1,2}
    rewards: np.ndarray       # (n,)
    next_states: np.ndarray   # (n, 6)
    logp_disc: np.ndarray     # (n,)
    logp_cont: np.ndarray     # (n,)
    dones: np.ndarray         # (n,) bool; True only on collision
    components: np.ndarray    # (n, 5) in COMPONENT_NAMES order
    fuel_g: float
    distance_m: float
    collided: bool

    def __len__(self):
        return len(self.rewards)

    def transitions(self):
        for i in range(len(self)):
            yield Transition(
                state=self.states[i],
                action=HybridAction(float(self.torque_norm[i]) * TORQUE_SCALE_NM,
                                    GEAR_CMDS[int(self.gear_class[i])]),
                reward=float(self.rewards[i]),
                next_state=self.next_states[i],
                behavior_log_prob_cont=float(self.logp_cont[i]),
                behavior_log_prob_disc=float(self.logp_disc[i]),
                done_flag=bool(self.dones[i]))


class EpisodeRoller:
    """Incremental episode execution: roll chunks of steps so callers can
    interleave learning at interval boundaries.  Picklable between chunks,
    which is what lets rollouts run in worker processes."""

    def __init__(self, episode: EpisodeConfig, weights: RewardWeights | None = None,
                 powertrain: dyn.Powertrain | None = None, dt_s: float = DT_S):
        self.env = PowertrainEnv(episode, weights=weights,
                                 powertrain=powertrain, dt_s=dt_s)
        self.obs = self.env.reset()
        self.start_pos = self.env.vstate.position_m
        self.done = self.env.n_steps == 0
        self.steps = 0
        self.reward_sum = 0.0
        self.accel_err_sq = 0.0
        self.fuel_g = 0.0
        self.shifts = 0

    @property
    def finished(self) -> bool:
        return self.done

    def roll(self, policy, mode: str, rng: np.random.Generator | None = None,
             max_steps: int | None = None) -> Trajectory:
        """Advance up to max_steps (or to the episode end) and return the
        collected chunk as a Trajectory."""
        if mode not in ("sample", "greedy"):
            raise InvalidInput(f"unknown mode {mode!r}")
        if mode == "sample" and rng is None:
            raise InvalidInput("sample mode needs an rng")
        n = self.env.n_steps - self.env.k
        if max_steps is not None:
            n = min(n, max_steps)
        states = np.empty((n, STATE_DIM))
        next_states = np.empty((n, STATE_DIM))
        torque_norm = np.empty(n)
        gear_class = np.empty(n, dtype=np.int64)
        rewards = np.empty(n)
        logp_d = np.zeros(n)
        logp_c = np.zeros(n)
        dones = np.zeros(n, dtype=bool)
        comps = np.empty((n, len(COMPONENT_NAMES)))
        chunk_fuel = 0.0
        chunk_start_pos = self.env.vstate.position_m

        runner = policy.runner()
        obs = self.obs
        steps = 0
        for k in range(n):
            if self.done:
                break
            x = encode_state(obs)
            if mode == "sample":
                cls, t_norm, lpd, lpc = runner.sample(x, rng)
            else:
                cls, t_norm = runner.greedy(x)
                lpd = lpc = 0.0
            action = HybridAction(torque_Nm=t_norm * TORQUE_SCALE_NM,
                                  gear_cmd=GEAR_CMDS[cls])
            next_obs, reward, components, done, info = self.env.step(action)
            states[k] = obs
            next_states[k] = next_obs
            torque_norm[k] = t_norm
            gear_class[k] = cls
            rewards[k] = reward
            logp_d[k] = lpd
            logp_c[k] = lpc
            dones[k] = info["collided"]
            comps[k] = [components[name] for name in COMPONENT_NAMES]
            self.accel_err_sq += (info["a_des"] - info["a_e_next"]) ** 2
            chunk_fuel += info["fuel_g"]
            self.shifts += int(next_obs[3] != obs[3])
            self.reward_sum += reward
            obs = next_obs
            steps = k + 1
            self.done = done

        self.obs = obs
        self.steps += steps
        self.fuel_g += chunk_fuel
        sl = slice(0, steps)
        return Trajectory(states[sl].copy(), torque_norm[sl].copy(),
                          gear_class[sl].copy(), rewards[sl].copy(),
                          next_states[sl].copy(), logp_d[sl].copy(),
                          logp_c[sl].copy(), dones[sl].copy(), comps[sl].copy(),
                          chunk_fuel,
                          self.env.vstate.position_m - chunk_start_pos,
                          self.env.collided)

    @property
    def distance_m(self):
        return self.env.vstate.position_m - self.start_pos

    def metrics(self) -> dict:
        """Whole-episode metrics over everything rolled so far."""
        if self.steps == 0:
            return {"defined": False, "steps": 0, "reward_per_step": math.nan,
                    "mpg": math.nan, "accel_rmse": math.nan,
                    "shifts_per_km": math.nan, "collided": False}
        dist = self.distance_m
        return {
            "defined": True,
            "steps": self.steps,
            "reward_per_step": self.reward_sum / self.steps,
            "mpg": compute_mpg(self.fuel_g, dist) if dist > 0 else math.nan,
            "mpg_defined": bool(self.fuel_g > 0 and dist > 0),
            "accel_rmse": math.sqrt(self.accel_err_sq / self.steps),
            "shifts_per_km": (self.shifts / (dist / 1000.0) if dist > 0
                              else math.nan),
            "collided": self.env.collided,
        }


def run_episode(policy, episode: EpisodeConfig, mode: str = "sample",
                rng: np.random.Generator | None = None,
                weights: RewardWeights | None = None,
                powertrain: dyn.Powertrain | None = None, dt_s: float = DT_S):
    """Roll one full episode and return (Trajectory, metrics dict).

    mode "sample" draws from the policy (requires rng); "greedy" takes the
    categorical argmax and the Gaussian mean.  Metrics: mean reward/step,
    MPG, acceleration RMSE versus driver demand, gear shifts per km.
    """
    roller = EpisodeRoller(episode, weights=weights, powertrain=powertrain,
                           dt_s=dt_s)
    chunks = []
    while not roller.finished:
        chunks.append(roller.roll(policy, mode, rng))
    if not chunks:
        roller.roll(policy, mode, rng, max_steps=0)  # validates mode/rng
        return _empty_trajectory(), roller.metrics()
    traj = _concat_trajectories(chunks)
    return traj, roller.metrics()


def _empty_trajectory() -> Trajectory:
    z = np.zeros(0)
    return Trajectory(np.zeros((0, STATE_DIM)), z, np.zeros(0, dtype=np.int64),
                      z, np.zeros((0, STATE_DIM)), z, z,
                      np.zeros(0, dtype=bool), np.zeros((0, 5)), 0.0, 0.0,
                      False)


def _concat_trajectories(chunks) -> Trajectory:
    if len(chunks) == 1:
        return chunks[0]
    return Trajectory(
        np.concatenate([c.states for c in chunks]),
        np.concatenate([c.torque_norm for c in chunks]),
        np.concatenate([c.gear_class for c in chunks]),
        np.concatenate([c.rewards for c in chunks]),
        np.concatenate([c.next_states for c in chunks]),
        np.concatenate([c.logp_disc for c in chunks]),
        np.concatenate([c.logp_cont for c in chunks]),
        np.concatenate([c.dones for c in chunks]),
        np.concatenate([c.components for c in chunks]),
        sum(c.fuel_g for c in chunks), sum(c.distance_m for c in chunks),
        chunks[-1].collided)


# ---------------------------------------------------------------------------
# trajectory CSV dump (consumed by the harness and golden tests)


def save_trajectory_csv(path, traj: Trajectory, dt_s: float = DT_S):
    cols = ["t", *STATE_FIELDS, "torque_norm", "gear_cmd", "reward",
            *(f"c_{name}" for name in COMPONENT_NAMES)]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(cols) + "\n")
        for i in range(len(traj)):
            row = [repr(round(i * dt_s, 6))]
            row += [repr(float(x)) for x in traj.states[i]]
            row.append(repr(float(traj.torque_norm[i])))
            row.append(str(GEAR_CMDS[int(traj.gear_class[i])]))
            row.append(repr(float(traj.rewards[i])))
            row += [repr(float(x)) for x in traj.components[i]]
            fh.write(",".join(row) + "\n")
