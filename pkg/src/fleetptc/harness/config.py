"""Scenario configuration: profiles, INI parsing, and validation.

Config files are plain key=value INI with section headers (see
docs/config.md for the full reference).  Every simulation and learning
hyperparameter has a key; unspecified keys fall back to the active profile.
The desk profile runs a scaled-down experiment on a workstation; the paper
profile (--paper-scale) restores the full-scale settings.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace

from ..agent import MpoConfig
from ..coordinator import RegressionConfig
from ..env import RewardWeights
from ..errors import InvalidInput

STRATEGIES = ("individual", "shared", "impala", "impala_modified")


@dataclass(frozen=True)
class ScenarioConfig:
    strategy: str = "individual"
    fleet_size: int = 3
    cycles: int = 20
    seeds: tuple = (1,)
    init_seed: int = 0
    workers: int = 0
    coordination: bool = True

    # routes
    route_source: str = "suburban"          # builtin label or route-file path
    n_synth_routes: int = 5
    synth_seed: int = 7
    assignment: str = "all"                 # or "urban:5,suburban:5,highway:5"
    eval_route: str = "suburban"            # label, path, or "composed:..."
    train_duration_s: float = 2000.0
    eval_duration_s: float = 1000.0

    # episode randomization (per-episode draws)
    mass_min_kg: float = 8000.0
    mass_max_kg: float = 24000.0
    time_headway_min_s: float = 3.0
    time_headway_max_s: float = 4.0
    min_gap_min_m: float = 5.0
    min_gap_max_m: float = 7.0
    speed_noise: float = 0.05

    # coordination cadence
    update_interval_s: float = 500.0
    round_mode: str = "sync"
    snapshot_batch: int = 128
    regression_iterations: int = 60
    group_lr: float = 5e-4
    advantage_beta: float = 0.8
    value_samples: int = 30

    reward: RewardWeights = field(default_factory=RewardWeights)
    mpo: MpoConfig = field(default_factory=MpoConfig)

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise InvalidInput(f"unknown strategy {self.strategy!r}")
        if self.fleet_size < 1 or self.cycles < 1:
            raise InvalidInput("fleet_size and cycles must be >= 1")
        if not self.seeds:
            raise InvalidInput("need at least one seed")
        ratio = self.train_duration_s / self.update_interval_s
        if abs(ratio - round(ratio)) > 1e-9 or ratio < 1:
            raise InvalidInput("train duration must be a positive multiple of "
                               "the update interval")

    def regression_config(self) -> RegressionConfig:
        return RegressionConfig(learning_rate=self.group_lr,
                                iterations=self.regression_iterations,
                                minibatch=self.mpo.batch_size,
                                beta=self.advantage_beta,
                                value_samples=self.value_samples)


def desk_profile(**overrides) -> ScenarioConfig:
    """Workstation-scale defaults.

    Shorter routes, smaller replay/batches and fewer regression iterations
    than the full-scale profile; learning rates are scaled up to compensate
    for the ~25x smaller sample volume so learning progress is measurable
    within a desk-scale run.
    """
    mpo = MpoConfig(batch_size=256, n_batches=4, memory_size=50000,
                    action_samples=10, expected_q_samples=4,
                    actor_lr=1e-3, critic_lr=4e-3)
    base = ScenarioConfig(mpo=mpo, group_lr=2e-3)
    return replace(base, **overrides) if overrides else base


def paper_profile(**overrides) -> ScenarioConfig:
    """Full-scale settings (cluster-sized; hours of compute per run)."""
    mpo = MpoConfig()  # full-scale defaults live on MpoConfig itself
    base = ScenarioConfig(
        mpo=mpo, train_duration_s=10000.0, eval_duration_s=10000.0,
        update_interval_s=2500.0, snapshot_batch=3072,
        regression_iterations=300, group_lr=5e-4, cycles=100,
        fleet_size=5, n_synth_routes=25)
    return replace(base, **overrides) if overrides else base


# ---------------------------------------------------------------------------
# INI parsing


_SCENARIO_KEYS = {
    "strategy": str, "fleet_size": int, "cycles": int, "init_seed": int,
    "workers": int, "coordination": None, "eval_route": str,
    "eval_duration_s": float,
}
_ROUTE_KEYS = {
    "source": ("route_source", str), "synthesize": ("n_synth_routes", int),
    "synth_seed": ("synth_seed", int), "assignment": ("assignment", str),
    "train_duration_s": ("train_duration_s", float),
}
_EPISODE_KEYS = {
    "mass_min_kg": float, "mass_max_kg": float, "time_headway_min_s": float,
    "time_headway_max_s": float, "min_gap_min_m": float,
    "min_gap_max_m": float, "speed_noise": float,
}
_COORD_KEYS = {
    "update_interval_s": ("update_interval_s", float),
    "mode": ("round_mode", str),
    "snapshot_batch": ("snapshot_batch", int),
    "regression_iterations": ("regression_iterations", int),
    "group_lr": ("group_lr", float),
    "beta": ("advantage_beta", float),
    "value_samples": ("value_samples", int),
}
_REWARD_KEYS = ("w_accel", "w_fuel", "w_shift", "w_torque", "w_reserve")
_MPO_KEYS = {
    "gamma": float, "retrace_lambda": float, "retrace_steps": int,
    "estep_kl_bound_cont": float, "estep_kl_bound_disc": float,
    "mstep_kl_bound_mean": float, "mstep_kl_bound_std": float,
    "mstep_kl_bound_disc": float, "group_kl_weight_disc": float,
    "group_kl_weight_cont": float, "group_kl_bound_disc": float,
    "group_kl_bound_mean": float, "batch_size": int, "n_batches": int,
    "actor_lr": float, "critic_lr": float, "target_mix": float,
    "advantage_smoothing": float, "action_samples": int, "memory_size": int,
    "expected_q_samples": int,
}


def parse_seeds(text: str):
    try:
        return tuple(int(tok) for tok in text.replace(" ", "").split(",") if tok)
    except ValueError:
        raise InvalidInput(f"bad seed list {text!r}") from None


def load_config(path, paper_scale: bool = False,
                seed_override: int | None = None) -> ScenarioConfig:
    """Read an INI scenario file on top of the chosen profile."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    read = parser.read(path)
    if not read:
        raise InvalidInput(f"cannot read config file {path}")
    base = paper_profile() if paper_scale else desk_profile()
    fields = {}

    sc = parser["scenario"] if parser.has_section("scenario") else {}
    for key, conv in _SCENARIO_KEYS.items():
        if key in sc:
            if key == "coordination":
                fields[key] = sc[key].strip().lower() in ("on", "true", "1", "yes")
            else:
                fields[key] = conv(sc[key])
    if "seeds" in sc:
        fields["seeds"] = parse_seeds(sc["seeds"])
    if seed_override is not None:
        fields["seeds"] = (seed_override,)

    if parser.has_section("routes"):
        for key, (attr, conv) in _ROUTE_KEYS.items():
            if key in parser["routes"]:
                fields[attr] = conv(parser["routes"][key])
    if parser.has_section("episode"):
        for key, conv in _EPISODE_KEYS.items():
            if key in parser["episode"]:
                fields[key] = conv(parser["episode"][key])
    if parser.has_section("coordination"):
        for key, (attr, conv) in _COORD_KEYS.items():
            if key in parser["coordination"]:
                fields[attr] = conv(parser["coordination"][key])

    if parser.has_section("reward"):
        vals = {k: parser["reward"].getfloat(k) for k in _REWARD_KEYS
                if k in parser["reward"]}
        fields["reward"] = replace(base.reward, **vals)

    if parser.has_section("mpo"):
        vals = {}
        for key, conv in _MPO_KEYS.items():
            if key in parser["mpo"]:
                vals[key] = conv(parser["mpo"][key])
        fields["mpo"] = replace(base.mpo, **vals)

    unknown = set(parser.sections()) - {"scenario", "routes", "episode",
                                        "coordination", "reward", "mpo"}
    if unknown:
        raise InvalidInput(f"unknown config sections: {sorted(unknown)}")
    return replace(base, **fields)
