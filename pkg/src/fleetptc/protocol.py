"""Wire format and round orchestration for agent <-> coordinator exchange.

Message layout (little-endian throughout):

    magic "FLTP" | version u16 | msg_type u8 | agent_id u32 |
    payload_len u64 | payload bytes | crc32(payload) u32

Snapshot payloads carry the cycle index, the raw state batch, and the actor
and critic parameter blobs in the binary tensor format; group-policy
payloads carry the version and one parameter blob.  decode(encode(x)) is
the structural identity and any payload corruption fails the CRC.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .agent import Agent, make_snapshot
from .coordinator import AgentSnapshot, Coordinator, GroupPolicy
from .env import STATE_DIM
from .errors import InvalidInput

MAGIC = b"FLTP"
WIRE_VERSION = 1
_HEADER = struct.Struct("<4sHBIQ")

MSG_SNAPSHOT = 1
MSG_GROUP_POLICY = 2
MSG_ROUND_BEGIN = 3
MSG_ROUND_ACK = 4

MSG_TYPES = (MSG_SNAPSHOT, MSG_GROUP_POLICY, MSG_ROUND_BEGIN, MSG_ROUND_ACK)


class ProtocolError(ValueError):
    pass


class BadMagic(ProtocolError):
    pass


class UnsupportedVersion(ProtocolError):
    pass


class UnknownMessageType(ProtocolError):
    pass


class TruncatedMessage(ProtocolError):
    pass


class CrcMismatch(ProtocolError):
    pass


class RoundAborted(RuntimeError):
    """A sync round failed because an agent could not contribute."""


@dataclass(frozen=True)
class WireMessage:
    msg_type: int
    agent_id: int
    payload: bytes

    def __post_init__(self):
        if self.msg_type not in MSG_TYPES:
            raise UnknownMessageType(f"message type {self.msg_type}")


def encode_message(msg: WireMessage) -> bytes:
    head = _HEADER.pack(MAGIC, WIRE_VERSION, msg.msg_type, msg.agent_id,
                        len(msg.payload))
    return head + msg.payload + struct.pack("<I", zlib.crc32(msg.payload))


def decode_message(data: bytes) -> WireMessage:
    if len(data) < _HEADER.size + 4:
        raise TruncatedMessage(f"{len(data)} bytes is shorter than a header")
    magic, version, msg_type, agent_id, payload_len = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise BadMagic(repr(magic))
    if version != WIRE_VERSION:
        raise UnsupportedVersion(str(version))
    if msg_type not in MSG_TYPES:
        raise UnknownMessageType(str(msg_type))
    end = _HEADER.size + payload_len
    if len(data) != end + 4:
        raise TruncatedMessage(
            f"expected {end + 4} bytes for payload length {payload_len}, "
            f"got {len(data)}")
    payload = data[_HEADER.size:end]
    (crc,) = struct.unpack_from("<I", data, end)
    if crc != zlib.crc32(payload):
        raise CrcMismatch("payload checksum failed")
    return WireMessage(msg_type, agent_id, payload)


# ---------------------------------------------------------------------------
# typed payloads


def _pack_blob(blob: bytes) -> bytes:
    return struct.pack("<Q", len(blob)) + blob


def _unpack_blob(buf: bytes, off: int):
    if off + 8 > len(buf):
        raise TruncatedMessage("blob length field out of range")
    (n,) = struct.unpack_from("<Q", buf, off)
    off += 8
    if off + n > len(buf):
        raise TruncatedMessage("blob data out of range")
    return buf[off:off + n], off + n


def encode_snapshot(snapshot: AgentSnapshot) -> bytes:
    states = np.ascontiguousarray(snapshot.states, dtype="<f8")
    payload = struct.pack("<III", snapshot.cycle_index, states.shape[0],
                          STATE_DIM)
    payload += states.tobytes(order="C")
    payload += _pack_blob(nn.pack_tensors(snapshot.actor.named_tensors()))
    payload += _pack_blob(nn.pack_tensors(snapshot.critic.named_tensors()))
    return encode_message(WireMessage(MSG_SNAPSHOT, snapshot.agent_id, payload))


@dataclass(frozen=True)
class DecodedSnapshot:
    snapshot: AgentSnapshot


def decode_snapshot(data: bytes) -> DecodedSnapshot:
    msg = decode_message(data)
    if msg.msg_type != MSG_SNAPSHOT:
        raise UnknownMessageType(f"expected snapshot, got type {msg.msg_type}")
    buf = msg.payload
    if len(buf) < 12:
        raise TruncatedMessage("snapshot payload too short")
    cycle, batch, dim = struct.unpack_from("<III", buf, 0)
    if dim != STATE_DIM:
        raise ProtocolError(f"state dim {dim} != {STATE_DIM}")
    off = 12
    n_state_bytes = 8 * batch * dim
    if off + n_state_bytes > len(buf):
        raise TruncatedMessage("snapshot states out of range")
    states = np.frombuffer(buf[off:off + n_state_bytes],
                           dtype="<f8").reshape(batch, dim).copy()
    off += n_state_bytes
    actor_blob, off = _unpack_blob(buf, off)
    critic_blob, off = _unpack_blob(buf, off)
    if off != len(buf):
        raise ProtocolError("trailing bytes in snapshot payload")
    actor = nn.HybridPolicy.from_named_tensors(nn.unpack_tensors(actor_blob))
    critic = nn.Critic.from_named_tensors(nn.unpack_tensors(critic_blob),
                                          STATE_DIM)
    return DecodedSnapshot(AgentSnapshot(
        agent_id=msg.agent_id, actor=actor, critic=critic, states=states,
        cycle_index=cycle))


def encode_group_policy(group: GroupPolicy) -> bytes:
    payload = struct.pack("<I", group.version)
    payload += _pack_blob(nn.pack_tensors(group.policy.named_tensors()))
    return encode_message(WireMessage(MSG_GROUP_POLICY, 0, payload))


def decode_group_policy(data: bytes) -> GroupPolicy:
    msg = decode_message(data)
    if msg.msg_type != MSG_GROUP_POLICY:
        raise UnknownMessageType(f"expected group policy, got {msg.msg_type}")
    (version,) = struct.unpack_from("<I", msg.payload, 0)
    blob, off = _unpack_blob(msg.payload, 4)
    if off != len(msg.payload):
        raise ProtocolError("trailing bytes in group-policy payload")
    policy = nn.HybridPolicy.from_named_tensors(nn.unpack_tensors(blob))
    return GroupPolicy(policy, version)


def encode_round_begin(round_index: int, mode: str) -> bytes:
    payload = struct.pack("<IB", round_index, 1 if mode == "async" else 0)
    return encode_message(WireMessage(MSG_ROUND_BEGIN, 0, payload))


def encode_round_ack(agent_id: int, round_index: int, adopted_version: int) -> bytes:
    payload = struct.pack("<II", round_index, adopted_version)
    return encode_message(WireMessage(MSG_ROUND_ACK, agent_id, payload))


# ---------------------------------------------------------------------------
# rounds and accounting


@dataclass(frozen=True)
class RoundSchedule:
    mode: str = "sync"                    # sync | async
    sim_seconds_per_update: float = 2500.0
    route_duration_s: float = 10000.0

    def __post_init__(self):
        if self.mode not in ("sync", "async"):
            raise InvalidInput(f"unknown round mode {self.mode!r}")
        if self.sim_seconds_per_update <= 0 or self.route_duration_s <= 0:
            raise InvalidInput("schedule durations must be positive")
        ratio = self.route_duration_s / self.sim_seconds_per_update
        if abs(ratio - round(ratio)) > 1e-9:
            raise InvalidInput(
                "route duration must be divisible by the update interval")

    @property
    def updates_per_route(self) -> int:
        return int(round(self.route_duration_s / self.sim_seconds_per_update))


@dataclass
class TrafficLedger:
    """Byte accounting; counters only ever increase."""

    bytes_up: int = 0
    bytes_down: int = 0
    up_by_agent: dict = field(default_factory=dict)
    rounds: list = field(default_factory=list)

    def record_up(self, agent_id: int, n_bytes: int):
        if n_bytes < 0:
            raise InvalidInput("byte counts are non-negative")
        self.bytes_up += n_bytes
        self.up_by_agent[agent_id] = self.up_by_agent.get(agent_id, 0) + n_bytes

    def record_down(self, n_bytes: int):
        if n_bytes < 0:
            raise InvalidInput("byte counts are non-negative")
        self.bytes_down += n_bytes

    def close_round(self, report):
        self.rounds.append(report)


@dataclass
class RoundReport:
    round_index: int
    mode: str
    group_version_before: int
    group_version_after: int
    agents: dict = field(default_factory=dict)  # id -> per-agent record
    bytes_up: int = 0
    bytes_down: int = 0


def adopt_pending(agent: Agent):
    """Move a delivered group policy from the agent's mailbox into use
    (what an async agent does at its next learn-cycle boundary)."""
    pending = getattr(agent, "pending_group", None)
    if pending is not None:
        agent.group_policy = pending.policy
        agent.group_version = pending.version
        agent.pending_group = None
    return getattr(agent, "group_version", -1)


def run_round(agents, coordinator: Coordinator, schedule: RoundSchedule,
              rng: np.random.Generator, snapshot_batch: int,
              iterations: int | None = None,
              ledger: TrafficLedger | None = None,
              round_index: int = 0):
    """One coordination round over the wire encoding (bytes are counted on
    the actual messages).

    sync: collect a snapshot from every agent, one regression, one
    broadcast, all agents adopt immediately; any agent failure aborts the
    round.  async: regress on whatever snapshots the queue holds (failing
    or silent agents are skipped) and deliver the broadcast to each agent's
    mailbox for adoption at its next learn-cycle boundary.
    """
    ledger = ledger if ledger is not None else TrafficLedger()
    report = RoundReport(round_index=round_index, mode=schedule.mode,
                         group_version_before=coordinator.group.version,
                         group_version_after=coordinator.group.version)
    for agent in agents:
        seed = int(rng.integers(2 ** 63))
        try:
            snap = make_snapshot(agent, snapshot_batch, seed)
        except Exception as err:
            if schedule.mode == "sync":
                raise RoundAborted(
                    f"agent {agent.agent_id} failed during round "
                    f"{round_index}: {err}") from err
            report.agents[agent.agent_id] = {"sent": False, "error": str(err)}
            continue
        blob = encode_snapshot(snap)
        ledger.record_up(agent.agent_id, len(blob))
        report.bytes_up += len(blob)
        coordinator.ingest_bytes(blob)
        report.agents[agent.agent_id] = {"sent": True,
                                         "snapshot_cycle": snap.cycle_index}

    if coordinator.inbox:
        coordinator.run_regression(rng, iterations=iterations)
    report.group_version_after = coordinator.group.version

    down = encode_group_policy(coordinator.group)
    ledger.record_down(len(down))
    report.bytes_down = len(down)
    decoded = decode_group_policy(down)

    for agent in agents:
        rec = report.agents.setdefault(agent.agent_id, {"sent": False})
        if schedule.mode == "sync":
            agent.group_policy = decoded.policy.copy()
            agent.group_version = decoded.version
            agent.pending_group = None
            rec["adopted_version"] = decoded.version
        else:
            agent.pending_group = GroupPolicy(decoded.policy.copy(),
                                              decoded.version)
            rec["delivered_version"] = decoded.version
            rec["version_in_use"] = getattr(agent, "group_version", -1)
        rec["staleness"] = report.group_version_after \
            - getattr(agent, "group_version", -1)
    ledger.close_round(report)
    return report, ledger
