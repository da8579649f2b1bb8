"""Fleet coordinator: distills the group policy from agent snapshots by
advantage-weighted cross-entropy regression, and hosts the centralized
actor-critic baseline that learns from pooled fleet experience.

The group policy shares the agents' architecture but never acts in any
environment; it only regularizes agent updates.  Each (agent, state) pair's
contribution to the regression is weighted by exp(advantage / beta), where
the advantage compares the agent's greedy action against the mean Q over
uniformly sampled actions.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .agent import Agent, ReplayBuffer, empty_window_batch, learn_cycle
from .env import STATE_DIM, encode_state
from .errors import InvalidInput

ZETA_LOG_CLIP = 10.0  # zeta stays within [e^-10, e^10]


@dataclass(frozen=True)
class AgentSnapshot:
    """What one agent ships to the coordinator each round."""

    agent_id: int
    actor: nn.HybridPolicy
    critic: nn.Critic
    states: np.ndarray  # (B, 6) raw state rows, non-sequential
    cycle_index: int

    def __post_init__(self):
        if self.states.ndim != 2 or self.states.shape[1] != STATE_DIM:
            raise InvalidInput("snapshot states must be (B, 6)")
        if self.states.shape[0] < 1:
            raise InvalidInput("snapshot needs at least one state")


@dataclass
class GroupPolicy:
    """Distilled fleet policy; the version counter is strictly increasing."""

    policy: nn.HybridPolicy
    version: int = 0


@dataclass
class RegressionConfig:
    learning_rate: float = 5e-4
    iterations: int = 300
    minibatch: int = 3072
    beta: float = 0.8          # advantage temperature
    value_samples: int = 30    # actions sampled per state for V estimates


@dataclass
class RegressionReport:
    version: int
    n_agents: int
    n_states: int
    iterations: int
    loss_first: float
    loss_last: float
    zeta_mean: float
    zeta_min: float
    zeta_max: float
    phase_seconds: dict = field(default_factory=dict)

    @property
    def total_seconds(self):
        return sum(self.phase_seconds.values())


def estimate_value(critic: nn.Critic, states, n_samples: int,
                   rng: np.random.Generator):
    """V(s) = mean of n_samples critic evaluations at actions drawn uniformly
    over the hybrid action box (torque in [-1, 1] x 3 gear commands)."""
    if n_samples < 1:
        raise InvalidInput("need at least one action sample")
    S = np.atleast_2d(np.asarray(states, dtype=np.float64))
    B = S.shape[0]
    torques = rng.uniform(-1.0, 1.0, size=(B, n_samples))
    gears = rng.integers(0, 3, size=(B, n_samples))
    rep = np.repeat(S, n_samples, axis=0)
    q = critic.q_values(rep, torques.ravel(), gears.ravel())
    return q.reshape(B, n_samples).mean(axis=1)


def greedy_actions(actor: nn.HybridPolicy, states_enc):
    """(torque, gear class) at the distribution modes."""
    probs, mu, _ = actor.dists(states_enc)
    return np.clip(mu, -1.0, 1.0), np.argmax(probs, axis=1)


def advantage_to_weight(advantage, beta: float):
    """zeta = exp(advantage / beta), clamped to e^[-10, 10]."""
    if beta <= 0:
        raise InvalidInput("beta must be > 0")
    return np.exp(np.clip(np.asarray(advantage, dtype=np.float64) / beta,
                          -ZETA_LOG_CLIP, ZETA_LOG_CLIP))


def advantage_weight(critic: nn.Critic, actor: nn.HybridPolicy, states_enc,
                     values, beta: float):
    """Per-state zeta from the critic: the greedy action's Q against the
    sampled-mean value estimate."""
    torque_g, gear_g = greedy_actions(actor, states_enc)
    q_g = critic.q_values(states_enc, torque_g, gear_g)
    return advantage_to_weight(q_g - np.asarray(values), beta)


def regression_loss(student: nn.HybridPolicy, states_enc, teacher_probs,
                    teacher_mu, teacher_sigma, zeta):
    """Advantage-weighted distillation loss over one (mini)batch.

    mean_i zeta_i * [xent(teacher categorical, student logits)
                     + xent(teacher Gaussian, student Gaussian)]
    Returns (loss, student heads) so gradients can reuse the forward pass.
    """
    h = student.heads(states_enc)
    xent_d = nn.xent_categorical(teacher_probs, h.logits)
    xent_c = nn.xent_gaussian(teacher_mu, teacher_sigma, h.mu, h.sigma)
    return float(np.mean(zeta * (xent_d + xent_c))), h


def regression_grads(student: nn.HybridPolicy, heads, teacher_probs,
                     teacher_mu, teacher_sigma, zeta):
    """Exact parameter gradients of regression_loss; linear in zeta."""
    n = len(zeta)
    scale = (np.asarray(zeta) / n)
    d_logits = nn.grad_xent_categorical_logits(teacher_probs, heads.logits) \
        * scale[:, None]
    d_mu, d_ls = nn.grad_xent_gaussian_student(teacher_mu, teacher_sigma,
                                               heads.mu, heads.sigma)
    grads = student.backward_heads(heads, d_logits, d_mu * scale, d_ls * scale)
    return nn.flatten_grads(grads)


def _check_architecture(snapshots):
    dims = snapshots[0].actor.mlp.dims
    cdims = snapshots[0].critic.mlp.dims
    for s in snapshots[1:]:
        if s.actor.mlp.dims != dims or s.critic.mlp.dims != cdims:
            raise InvalidInput(
                f"snapshot architecture mismatch (agent {s.agent_id})")


def group_regression(snapshots, group: GroupPolicy, iterations: int | None = None,
                     cfg: RegressionConfig | None = None,
                     rng: np.random.Generator | None = None,
                     zeta_override=None):
    """Advantage-weighted distillation of the snapshots into a new group
    policy (warm-started from the current one; snapshots are never mutated).

    Returns (new GroupPolicy with version + 1, RegressionReport).  The five
    timed phases mirror the per-iteration pipeline: minibatch sampling,
    advantage weighting, loss evaluation, backprop, optimizer step.
    """
    cfg = cfg or RegressionConfig()
    iterations = cfg.iterations if iterations is None else iterations
    rng = rng or np.random.default_rng(0)
    if not snapshots:
        raise InvalidInput("group regression needs at least one snapshot")
    _check_architecture(snapshots)
    if snapshots[0].actor.mlp.dims != group.policy.mlp.dims:
        raise InvalidInput("snapshot/group architecture mismatch")

    phases = {"sampling": 0.0, "advantage": 0.0, "loss": 0.0,
              "backprop": 0.0, "optimize": 0.0}

    # teachers are evaluated once and frozen before the regression
    t0 = time.perf_counter()
    states_enc = np.concatenate([encode_state(s.states) for s in snapshots])
    teacher_probs, teacher_mu, teacher_sigma = [], [], []
    for s in snapshots:
        p, mu, sig = s.actor.dists(encode_state(s.states))
        teacher_probs.append(p)
        teacher_mu.append(mu)
        teacher_sigma.append(sig)
    teacher_probs = np.concatenate(teacher_probs)
    teacher_mu = np.concatenate(teacher_mu)
    teacher_sigma = np.concatenate(teacher_sigma)
    phases["sampling"] += time.perf_counter() - t0

    t0 = time.perf_counter()
    if zeta_override is not None:
        zeta = np.asarray(zeta_override, dtype=np.float64)
        if zeta.shape != (states_enc.shape[0],):
            raise InvalidInput("zeta override must give one weight per state")
        if np.any(zeta <= 0):
            raise InvalidInput("zeta must be positive")
    else:
        parts = []
        for s in snapshots:
            enc = encode_state(s.states)
            values = estimate_value(s.critic, enc, cfg.value_samples, rng)
            parts.append(advantage_weight(s.critic, s.actor, enc, values,
                                          cfg.beta))
        zeta = np.concatenate(parts)
    phases["advantage"] += time.perf_counter() - t0

    student = group.policy.copy()
    opt = nn.AdamState.for_params(student.mlp.params_list(), cfg.learning_rate)
    n_total = states_enc.shape[0]
    loss_first = loss_last = math.nan

    for it in range(iterations):
        t0 = time.perf_counter()
        if n_total > cfg.minibatch:
            sel = rng.choice(n_total, size=cfg.minibatch, replace=False)
        else:
            sel = slice(None)
        S = states_enc[sel]
        p_t = teacher_probs[sel]
        mu_t = teacher_mu[sel]
        sig_t = teacher_sigma[sel]
        z = zeta[sel]
        phases["sampling"] += time.perf_counter() - t0

        t0 = time.perf_counter()
        loss, h = regression_loss(student, S, p_t, mu_t, sig_t, z)
        phases["loss"] += time.perf_counter() - t0

        t0 = time.perf_counter()
        grads = regression_grads(student, h, p_t, mu_t, sig_t, z)
        phases["backprop"] += time.perf_counter() - t0

        t0 = time.perf_counter()
        new_params, opt = nn.adam_step(opt, student.mlp.params_list(), grads)
        student.mlp = student.mlp.replace_params(new_params)
        phases["optimize"] += time.perf_counter() - t0

        if it == 0:
            loss_first = loss
        loss_last = loss

    report = RegressionReport(
        version=group.version + 1, n_agents=len(snapshots), n_states=n_total,
        iterations=iterations, loss_first=loss_first, loss_last=loss_last,
        zeta_mean=float(np.mean(zeta)), zeta_min=float(np.min(zeta)),
        zeta_max=float(np.max(zeta)), phase_seconds=phases)
    return GroupPolicy(student, group.version + 1), report


# ---------------------------------------------------------------------------
# centralized (IMPALA-style) baseline


class PooledBuffer:
    """Uniform sampling over the union of several agents' replay buffers.

    With a single underlying buffer this consumes randomness exactly like
    sampling that buffer directly, so the one-agent case reduces bitwise to
    plain local learning.
    """

    def __init__(self, buffers):
        self.buffers = [b for b in buffers if b.size > 0]
        if not self.buffers:
            raise InvalidInput("no experience to pool")

    @property
    def size(self):
        return sum(b.size for b in self.buffers)

    def _locate_buffer(self, flat_idx):
        for b in self.buffers:
            if flat_idx < b.size:
                return b, flat_idx
            flat_idx -= b.size
        raise IndexError(flat_idx)

    def sample_windows(self, batch, length, rng):
        idx = rng.integers(self.size, size=batch)
        wb = empty_window_batch(batch, length)
        for i, fi in enumerate(idx):
            buf, local = self._locate_buffer(int(fi))
            buf.fill_window(wb, i, local, length)
        return wb

    def sample_states(self, batch, rng):
        idx = rng.integers(self.size, size=batch)
        out = np.empty((batch, STATE_DIM))
        for i, fi in enumerate(idx):
            buf, local = self._locate_buffer(int(fi))
            ep, j = buf._locate(local)
            out[i] = ep["states"][j]
        return out


def impala_central_update(central: Agent, buffers, rng) -> dict:
    """Run the standard learn cycle on the central learner over pooled
    experience: no advantage weighting, no per-agent policies."""
    pooled = PooledBuffer(buffers)
    return learn_cycle(central, None, rng, buffer=pooled)


# ---------------------------------------------------------------------------
# coordinator service object


class Coordinator:
    """Single logical writer of the group policy.  Snapshot ingestion is a
    queue; regression runs on a stable copy of whatever has been queued."""

    def __init__(self, init_policy: nn.HybridPolicy,
                 cfg: RegressionConfig | None = None):
        self.cfg = cfg or RegressionConfig()
        self.group = GroupPolicy(init_policy.copy(), version=0)
        self.inbox: list[AgentSnapshot] = []
        self.last_report: RegressionReport | None = None

    def ingest(self, snapshot: AgentSnapshot):
        if snapshot.actor.mlp.dims != self.group.policy.mlp.dims:
            raise InvalidInput("snapshot does not match the fleet architecture")
        self.inbox.append(snapshot)

    def ingest_bytes(self, payload: bytes):
        from . import protocol  # local import avoids a module cycle

        self.ingest(protocol.decode_snapshot(payload).snapshot)

    def run_regression(self, rng, iterations: int | None = None) -> RegressionReport:
        pending, self.inbox = self.inbox, []
        self.group, report = group_regression(pending, self.group,
                                              iterations=iterations,
                                              cfg=self.cfg, rng=rng)
        self.last_report = report
        return report


def broadcast(group: GroupPolicy) -> bytes:
    """Serialize the group policy as one wire message consumable by every
    agent; the size is independent of fleet size."""
    from . import protocol  # local import avoids a module cycle

    return protocol.encode_group_policy(group)
