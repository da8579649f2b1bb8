from .config import (ScenarioConfig, desk_profile, load_config, paper_profile,
                     parse_seeds)
from .outputs import emit_outputs, write_line_band_svg
from .scaling import (ScalingRow, ScalingTable, aggregate_scaling,
                      measure_scaling, save_scaling_csv)
from .scenario import (METRIC_NAMES, RolloutPool, RunReport, SeedResult,
                       build_eval_route, build_route_sets, child_rng,
                       derive_seed, policy_hash, run_scenario, run_seed)
