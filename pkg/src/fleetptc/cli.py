"""Command-line entry point.

    fleet run --config FILE --out DIR [--paper-scale] [--seed N] [--workers N]
    fleet routes synth --seed-route F --n N --seed S --out DIR
    fleet eval --checkpoint F --route F [--duration S] [--out DIR]
    fleet scaling --sizes 1,2,4,8 --out DIR [--batch B --iterations K]
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

import numpy as np

from . import nn
from .env import run_episode, save_trajectory_csv
from .harness import (emit_outputs, load_config, measure_scaling,
                      run_scenario, save_scaling_csv)
from .routes import load_route, save_route, synthesize_routes
from .routes import builtin_route, evaluation_episode


def _cmd_run(args):
    cfg = load_config(args.config, paper_scale=args.paper_scale,
                      seed_override=args.seed)
    if args.workers is not None:
        cfg = dataclasses.replace(cfg, workers=args.workers)
    print(f"running strategy={cfg.strategy} fleet={cfg.fleet_size} "
          f"cycles={cfg.cycles} seeds={cfg.seeds}")

    def progress(seed, result):
        last = result.metrics[-1, :, 0]
        print(f"  seed {seed}: final fleet reward/step "
              f"{np.nanmean(last):+.4f} (range {np.nanmax(last) - np.nanmin(last):.4f})")

    report = run_scenario(cfg, progress=progress)
    files = emit_outputs(report, args.out)
    for f in files:
        print(f"wrote {f}")
    return 0


def _cmd_routes_synth(args):
    seed_route = (builtin_route(args.seed_route)
                  if args.seed_route in ("urban", "suburban", "highway")
                  else load_route(args.seed_route))
    rset = synthesize_routes(seed_route, args.n, args.seed)
    os.makedirs(args.out, exist_ok=True)
    for i, route in enumerate(rset.routes):
        path = os.path.join(args.out, f"synth_{i:03d}.route")
        save_route(path, route)
        print(f"wrote {path} (mean {route.mean_speed():.2f} m/s)")
    return 0


def _cmd_eval(args):
    tensors = nn.load_tensors(args.checkpoint)
    policy = nn.HybridPolicy.from_named_tensors(tensors)
    route = (builtin_route(args.route)
             if args.route in ("urban", "suburban", "highway")
             else load_route(args.route))
    episode = evaluation_episode(route, duration_cap_s=args.duration)
    traj, metrics = run_episode(policy, episode, mode="greedy")
    print(f"steps:          {metrics['steps']}")
    print(f"reward/step:    {metrics['reward_per_step']:+.4f}")
    print(f"mpg:            {metrics['mpg']:.2f}")
    print(f"accel rmse:     {metrics['accel_rmse']:.3f} m/s^2")
    print(f"shifts/km:      {metrics['shifts_per_km']:.2f}")
    print(f"collided:       {metrics['collided']}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "eval_trajectory.csv")
        save_trajectory_csv(path, traj)
        print(f"wrote {path}")
    return 0


def _cmd_scaling(args):
    sizes = [int(tok) for tok in args.sizes.split(",") if tok]
    table = measure_scaling(sizes, snapshot_batch=args.batch,
                            iterations=args.iterations,
                            repeats=args.repeats, seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "scaling.csv")
    save_scaling_csv(table, path)
    print(f"{'size':>5} {'reg s':>9} {'bytes up':>12} {'bytes down':>12}")
    for r in table.rows:
        print(f"{r.fleet_size:>5} {r.regression_seconds:>9.3f} "
              f"{r.bytes_up:>12} {r.bytes_down:>12}")
    print(f"time slope {table.time_slope:.3f} s/agent; "
          f"up-bytes fit R^2 = {table.bytes_r2:.6f}")
    print(f"wrote {path}")
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="fleet",
        description="Fleet shared learning of powertrain-control policies")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a training scenario from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--paper-scale", action="store_true",
                   help="use full-scale hyperparameters")
    p.add_argument("--seed", type=int, default=None,
                   help="override the config's seed list with one seed")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(fn=_cmd_run)

    p_routes = sub.add_parser("routes", help="route utilities")
    rsub = p_routes.add_subparsers(dest="routes_command", required=True)
    p = rsub.add_parser("synth", help="synthesize routes from a seed profile")
    p.add_argument("--seed-route", required=True,
                   help="builtin label (urban/suburban/highway) or route file")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_routes_synth)

    p = sub.add_parser("eval", help="greedy-evaluate a policy checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--route", required=True)
    p.add_argument("--duration", type=float, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("scaling", help="measure coordinator scaling")
    p.add_argument("--sizes", default="1,2,4,8")
    p.add_argument("--out", required=True)
    p.add_argument("--batch", type=int, default=128)
    p.add_argument("--iterations", type=int, default=50)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_scaling)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
