"""Scenario execution: fleets of agents training on randomized drive cycles
under one of four strategies, with greedy evaluation after every cycle.

    individual        agents learn locally, nothing is exchanged
    shared            local learning + advantage-weighted group distillation,
                      agents regularized toward the broadcast group policy
    impala            one central learner on pooled experience; agents act
                      with the central policy (pulled at interval boundaries)
    impala_modified   agents additionally adapt their copy locally during the
                      route, then reset to the updated central policy

Every random draw comes from a seed derived from (run seed, purpose, cycle,
index), so results are bit-reproducible regardless of worker count and
strategies consume identical streams wherever their code paths coincide.
"""

from __future__ import annotations

import hashlib
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .. import nn
from ..agent import Agent, learn_cycle, make_agent
from ..coordinator import Coordinator, impala_central_update
from ..env import DT_S, EpisodeRoller, run_episode
from ..errors import InvalidInput
from ..protocol import RoundSchedule, TrafficLedger, adopt_pending, run_round
from ..routes import (Route, builtin_route, compose_evaluation_route,
                      evaluation_episode, load_route, sample_episode,
                      synthesize_routes)
from .config import ScenarioConfig

METRIC_NAMES = ("reward_per_step", "mpg", "accel_rmse", "shifts_per_km")


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from a mixed tuple of ints and strings."""
    words = []
    for p in parts:
        if isinstance(p, str):
            words.append(zlib.crc32(p.encode("utf-8")))
        else:
            words.append(int(p) & 0xFFFFFFFF)
            words.append((int(p) >> 32) & 0xFFFFFFFF)
    ss = np.random.SeedSequence(words)
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> 1)


def child_rng(*parts) -> np.random.Generator:
    return np.random.default_rng(derive_seed(*parts))


# ---------------------------------------------------------------------------
# routes


def resolve_route(name: str) -> Route:
    if name in ("urban", "suburban", "highway"):
        return builtin_route(name)
    return load_route(name)


def build_route_sets(cfg: ScenarioConfig):
    """Per-agent training route sets from the assignment spec."""
    if cfg.assignment == "all":
        seed_route = resolve_route(cfg.route_source)
        rset = synthesize_routes(seed_route, cfg.n_synth_routes, cfg.synth_seed)
        return [rset] * cfg.fleet_size
    sets = []
    labels = []
    for part in cfg.assignment.split(","):
        label, _, count = part.strip().partition(":")
        if not count:
            raise InvalidInput(f"bad assignment entry {part!r}")
        labels.extend([label] * int(count))
    if len(labels) != cfg.fleet_size:
        raise InvalidInput(
            f"assignment covers {len(labels)} vehicles, fleet is {cfg.fleet_size}")
    cache = {}
    for i, label in enumerate(labels):
        if label not in cache:
            cache[label] = synthesize_routes(
                resolve_route(label), cfg.n_synth_routes,
                derive_seed(cfg.synth_seed, "routes", label))
        sets.append(cache[label])
    return sets


def build_eval_route(cfg: ScenarioConfig) -> Route:
    name = cfg.eval_route
    if name.startswith("composed:"):
        parts = []
        for tok in name[len("composed:"):].split(","):
            label, _, frac = tok.strip().partition("=")
            parts.append((resolve_route(label), float(frac)))
        return compose_evaluation_route(parts)
    return resolve_route(name)


# ---------------------------------------------------------------------------
# rollout pool


def _roll_task(args):
    roller, policy, mode, rng, max_steps = args
    chunk = roller.roll(policy, mode, rng, max_steps)
    return roller, chunk, rng


def _eval_task(args):
    policy, episode, weights = args
    _, metrics = run_episode(policy, episode, mode="greedy", weights=weights)
    return metrics


class RolloutPool:
    """Chunk rollouts across worker processes; 0/1 workers run inline.

    Tasks are pure functions of their pickled inputs, so worker results are
    bit-identical to the serial path.
    """

    def __init__(self, workers: int):
        self.workers = workers
        self._pool = (ProcessPoolExecutor(max_workers=workers)
                      if workers > 1 else None)

    def map(self, fn, tasks):
        if self._pool is None:
            return [fn(t) for t in tasks]
        return list(self._pool.map(fn, tasks, chunksize=1))

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None


# ---------------------------------------------------------------------------
# reports


@dataclass
class SeedResult:
    seed: int
    metrics: np.ndarray          # (cycles, fleet, len(METRIC_NAMES))
    collided: np.ndarray         # (cycles, fleet)
    ledger: TrafficLedger
    regression_reports: list
    central_reports: list
    actor_hashes: tuple          # per agent, end of run


@dataclass
class RunReport:
    config: ScenarioConfig
    seed_results: list = field(default_factory=list)

    @property
    def metric_names(self):
        return METRIC_NAMES

    def metric_index(self, name):
        return METRIC_NAMES.index(name)

    def fleet_mean(self, seed_idx, metric):
        m = self.seed_results[seed_idx].metrics[:, :, self.metric_index(metric)]
        return m.mean(axis=1)

    def fleet_range(self, seed_idx, metric):
        m = self.seed_results[seed_idx].metrics[:, :, self.metric_index(metric)]
        return m.max(axis=1) - m.min(axis=1)


def policy_hash(policy: nn.HybridPolicy) -> str:
    return hashlib.sha256(nn.pack_tensors(policy.named_tensors())).hexdigest()


# ---------------------------------------------------------------------------
# the runner


def _fresh_fleet(cfg: ScenarioConfig):
    """Agents (and central learner / coordinator as needed), all starting
    from one identical seed checkpoint."""
    agents = [make_agent(i, cfg.mpo, init_seed=cfg.init_seed)
              for i in range(cfg.fleet_size)]
    central = None
    coordinator = None
    if cfg.strategy in ("impala", "impala_modified"):
        central = make_agent(-1, cfg.mpo, init_seed=cfg.init_seed)
    if cfg.strategy == "shared" and cfg.coordination:
        coordinator = Coordinator(agents[0].actor.copy(),
                                  cfg.regression_config())
        for a in agents:
            a.group_policy = coordinator.group.policy.copy()
            a.group_version = 0
    return agents, central, coordinator


def _reset_to_central(agent: Agent, central: Agent, cfg: ScenarioConfig):
    agent.actor = central.actor.copy()
    agent.critic = central.critic.copy()
    agent.target_critic = central.target_critic.copy()
    agent.actor_opt = nn.AdamState.for_params(agent.actor.mlp.params_list(),
                                              cfg.mpo.actor_lr)
    agent.critic_opt = nn.AdamState.for_params(agent.critic.mlp.params_list(),
                                               cfg.mpo.critic_lr)


def run_seed(cfg: ScenarioConfig, seed: int, route_sets, eval_route: Route,
             pool: RolloutPool) -> SeedResult:
    agents, central, coordinator = _fresh_fleet(cfg)
    schedule = RoundSchedule(cfg.round_mode, cfg.update_interval_s,
                             cfg.train_duration_s)
    chunk_steps = int(round(cfg.update_interval_s / DT_S))
    n_int = schedule.updates_per_route
    ledger = TrafficLedger()
    regression_reports = []
    central_reports = []
    metrics = np.full((cfg.cycles, cfg.fleet_size, len(METRIC_NAMES)), np.nan)
    collided = np.zeros((cfg.cycles, cfg.fleet_size), dtype=bool)
    eval_episode_cfg = evaluation_episode(eval_route,
                                          duration_cap_s=cfg.eval_duration_s)

    for cycle in range(cfg.cycles):
        episodes = [
            sample_episode(
                route_sets[i], derive_seed(seed, "episode", cycle, i),
                duration_cap_s=cfg.train_duration_s,
                mass_range=(cfg.mass_min_kg, cfg.mass_max_kg),
                headway_range=(cfg.time_headway_min_s, cfg.time_headway_max_s),
                min_gap_range=(cfg.min_gap_min_m, cfg.min_gap_max_m),
                noise_scale=cfg.speed_noise)
            for i in range(cfg.fleet_size)]
        rollers = [EpisodeRoller(ep, weights=cfg.reward) for ep in episodes]
        roll_rngs = [child_rng(seed, "rollout", cycle, i)
                     for i in range(cfg.fleet_size)]

        if cfg.strategy == "impala":
            for a in agents:
                a.actor = central.actor.copy()

        for k in range(n_int):
            tasks = [(rollers[i], agents[i].actor, "sample", roll_rngs[i],
                      chunk_steps) for i in range(cfg.fleet_size)]
            for i, (roller, chunk, rng) in enumerate(pool.map(_roll_task, tasks)):
                rollers[i] = roller
                roll_rngs[i] = rng
                agents[i].buffer.add_trajectory(chunk)

            if cfg.strategy == "impala":
                impala_central_update(central, [a.buffer for a in agents],
                                      child_rng(seed, "learn", cycle, k, 0))
                for a in agents:
                    a.actor = central.actor.copy()
            else:
                for i, agent in enumerate(agents):
                    if cfg.strategy == "shared":
                        adopt_pending(agent)
                    group = agent.group_policy if cfg.strategy == "shared" else None
                    learn_cycle(agent, group,
                                child_rng(seed, "learn", cycle, k, i))

        # strategy-specific coordination at the route boundary
        if cfg.strategy == "shared" and cfg.coordination and coordinator:
            report, _ = run_round(agents, coordinator, schedule,
                                  child_rng(seed, "round", cycle),
                                  cfg.snapshot_batch, ledger=ledger,
                                  round_index=cycle)
            regression_reports.append(coordinator.last_report)
        elif cfg.strategy == "impala_modified":
            rep = impala_central_update(central, [a.buffer for a in agents],
                                        child_rng(seed, "central", cycle))
            central_reports.append(rep)
            for a in agents:
                _reset_to_central(a, central, cfg)

        # greedy evaluation of every agent on the shared evaluation route
        eval_policies = [central.actor if cfg.strategy == "impala"
                         else agents[i].actor for i in range(cfg.fleet_size)]
        eval_tasks = [(p, eval_episode_cfg, cfg.reward) for p in eval_policies]
        for i, m in enumerate(pool.map(_eval_task, eval_tasks)):
            metrics[cycle, i] = [m[name] for name in METRIC_NAMES]
            collided[cycle, i] = m["collided"]

    return SeedResult(
        seed=seed, metrics=metrics, collided=collided, ledger=ledger,
        regression_reports=regression_reports, central_reports=central_reports,
        actor_hashes=tuple(policy_hash(a.actor) for a in agents))


def run_scenario(cfg: ScenarioConfig, progress=None) -> RunReport:
    """Execute the configured scenario over all seeds."""
    route_sets = build_route_sets(cfg)
    eval_route = build_eval_route(cfg)
    pool = RolloutPool(cfg.workers)
    report = RunReport(config=cfg)
    try:
        for seed in cfg.seeds:
            result = run_seed(cfg, seed, route_sets, eval_route, pool)
            report.seed_results.append(result)
            if progress is not None:
                progress(seed, result)
    finally:
        pool.close()
    return report
