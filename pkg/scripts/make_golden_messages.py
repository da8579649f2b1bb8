#!/usr/bin/env python3
"""Regenerate the golden wire-format messages under tests/golden/.

The files pin the byte layout: any codec change that breaks byte
compatibility fails the golden tests.  Small networks keep the corpus
light; the format is self-describing so the layout coverage is identical.
"""

import pathlib

import numpy as np

from fleetptc import nn, protocol
from fleetptc.coordinator import AgentSnapshot, GroupPolicy

OUT = pathlib.Path(__file__).resolve().parents[1] / "tests" / "golden"


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(20240915)
    actor = nn.HybridPolicy.init(6, rng, hidden=(32, 32))
    critic = nn.Critic.init(6, rng, hidden=(32, 32))
    states = rng.uniform(0.0, 30.0, size=(4, 6))
    snap = AgentSnapshot(agent_id=7, actor=actor, critic=critic,
                         states=states, cycle_index=12)
    (OUT / "snapshot.msg").write_bytes(protocol.encode_snapshot(snap))
    group = GroupPolicy(nn.HybridPolicy.init(6, rng, hidden=(32, 32)), version=3)
    (OUT / "group_policy.msg").write_bytes(protocol.encode_group_policy(group))
    (OUT / "round_begin.msg").write_bytes(protocol.encode_round_begin(5, "async"))
    (OUT / "round_ack.msg").write_bytes(protocol.encode_round_ack(7, 5, 3))
    for p in sorted(OUT.iterdir()):
        print(f"{p.name}: {p.stat().st_size} bytes")


if __name__ == "__main__":
    main()
