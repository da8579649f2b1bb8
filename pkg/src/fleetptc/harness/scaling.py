"""Scalability instrumentation: how group-regression wall time and wire
traffic grow with fleet size, plus aggregation of full runs across sizes.

Timing measurements regress standard-architecture snapshots (random
parameters; learning progress is irrelevant to the cost model) and report
the median over repeats around a warm-up pass.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .. import nn, protocol
from ..coordinator import (AgentSnapshot, GroupPolicy, RegressionConfig,
                           group_regression)
from ..env import STATE_DIM
from ..errors import InvalidInput
from .scenario import RunReport, child_rng

CSV_COLUMNS = ("fleet_size", "regression_seconds", "bytes_up", "bytes_down",
               "reward_mean", "reward_std")


@dataclass
class ScalingRow:
    fleet_size: int
    regression_seconds: float
    bytes_up: int
    bytes_down: int
    reward_mean: float = float("nan")
    reward_std: float = float("nan")


@dataclass
class ScalingTable:
    rows: list = field(default_factory=list)
    time_slope: float = float("nan")
    bytes_slope: float = float("nan")
    bytes_r2: float = float("nan")

    def sizes(self):
        return [r.fleet_size for r in self.rows]

    def times(self):
        return [r.regression_seconds for r in self.rows]

    def up_bytes(self):
        return [r.bytes_up for r in self.rows]

    def per_agent_time_increments(self):
        """Wall-time increment per added agent between consecutive sizes."""
        out = []
        for a, b in zip(self.rows, self.rows[1:]):
            dn = b.fleet_size - a.fleet_size
            out.append((b.regression_seconds - a.regression_seconds) / dn)
        return out


def _fit_line(x, y):
    """(slope, intercept, r_squared) of an ordinary least-squares line."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_res = float(((y - pred) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def _random_snapshot(agent_id, batch, rng):
    actor = nn.HybridPolicy.init(STATE_DIM, rng)
    critic = nn.Critic.init(STATE_DIM, rng)
    states = np.column_stack([
        rng.uniform(0, 30, batch), rng.uniform(-3, 3, batch),
        rng.uniform(-6, 3, batch), rng.integers(1, 11, batch).astype(float),
        rng.uniform(-6, 3, batch), rng.integers(1, 11, batch).astype(float)])
    return AgentSnapshot(agent_id=agent_id, actor=actor, critic=critic,
                         states=states, cycle_index=0)


def measure_scaling(sizes, snapshot_batch=128, iterations=50, repeats=3,
                    seed=0, value_samples=10) -> ScalingTable:
    """Time one group regression per fleet size and count round bytes.

    Returns the table with the regression-time line fit and the exact
    byte-count fit over the measured sizes.
    """
    if len(sizes) < 1 or any(s < 1 for s in sizes):
        raise InvalidInput("sizes must be positive")
    cfg = RegressionConfig(iterations=iterations, value_samples=value_samples)
    table = ScalingTable()
    for n in sorted(sizes):
        rng = child_rng(seed, "scaling", n)
        snaps = [_random_snapshot(i, snapshot_batch, rng) for i in range(n)]
        group = GroupPolicy(nn.HybridPolicy.init(STATE_DIM, rng), 0)
        new_group, _ = group_regression(snaps, group, cfg=cfg,
                                        rng=child_rng(seed, "reg", n, 0))
        times = []
        for rep in range(repeats):
            t0 = time.perf_counter()
            new_group, _ = group_regression(
                snaps, group, cfg=cfg, rng=child_rng(seed, "reg", n, rep + 1))
            times.append(time.perf_counter() - t0)
        up = sum(len(protocol.encode_snapshot(s)) for s in snaps)
        down = len(protocol.encode_group_policy(new_group))
        table.rows.append(ScalingRow(n, float(np.median(times)), up, down))
    _finish_fits(table)
    return table


def _finish_fits(table: ScalingTable):
    if len(table.rows) >= 2:
        table.time_slope, _, _ = _fit_line(table.sizes(), table.times())
        table.bytes_slope, _, table.bytes_r2 = _fit_line(table.sizes(),
                                                         table.up_bytes())


def aggregate_scaling(reports) -> ScalingTable:
    """Summarize full runs at several fleet sizes: mean and std of the
    fleet-mean reward per step over seeds (normal fit), measured
    group-regression time, and transferred bytes; with the regression-time
    slope versus fleet size when two or more sizes are present."""
    if not reports:
        raise InvalidInput("need at least one run report")
    table = ScalingTable()
    for report in sorted(reports, key=lambda r: r.config.fleet_size):
        per_seed_means = [report.fleet_mean(i, "reward_per_step").mean()
                          for i in range(len(report.seed_results))]
        reg_secs = [rep.total_seconds
                    for sr in report.seed_results
                    for rep in sr.regression_reports if rep is not None]
        up = sum(sr.ledger.bytes_up for sr in report.seed_results)
        down = sum(sr.ledger.bytes_down for sr in report.seed_results)
        table.rows.append(ScalingRow(
            fleet_size=report.config.fleet_size,
            regression_seconds=float(np.mean(reg_secs)) if reg_secs else float("nan"),
            bytes_up=up, bytes_down=down,
            reward_mean=float(np.mean(per_seed_means)),
            reward_std=float(np.std(per_seed_means))))
    _finish_fits(table)
    return table


def save_scaling_csv(table: ScalingTable, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# time_slope=" + repr(table.time_slope)
                 + " bytes_slope=" + repr(table.bytes_slope)
                 + " bytes_r2=" + repr(table.bytes_r2) + "\n")
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for r in table.rows:
            fh.write(f"{r.fleet_size},{r.regression_seconds!r},{r.bytes_up},"
                     f"{r.bytes_down},{r.reward_mean!r},{r.reward_std!r}\n")
