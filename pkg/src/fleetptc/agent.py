"""Per-vehicle off-policy MPO learner over the hybrid action space, with a
retrace critic, FIFO replay, and optional forward-KL regularization toward
the fleet's group policy.

Learning alternates, per sampled batch: a critic regression onto retrace
targets, a nonparametric E-step that reweights sampled actions by
exponentiated Q under a per-batch temperature (solved from the standard
dual so KL(q || pi) stays inside its bound), and an M-step that fits the
actor to those weights under per-component KL trust regions enforced by
learned Lagrange multipliers.  With sharing disabled the learner is exactly
the plain MPO baseline, bit for bit.
"""

from __future__ import annotations

import math
import warnings
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .env import STATE_DIM, Trajectory, encode_state
from .errors import InvalidInput

LOG_RATIO_CLIP = 20.0  # bounds exp() in importance ratios

MULTIPLIER_INIT = 1.0


@dataclass
class MpoConfig:
    """Learning hyperparameters (defaults follow the full-scale settings)."""

    gamma: float = 0.99
    retrace_lambda: float = 1.0
    retrace_steps: int = 6
    estep_kl_bound_cont: float = 7e-2
    estep_kl_bound_disc: float = 5e-2
    mstep_kl_bound_mean: float = 0.1
    mstep_kl_bound_std: float = 0.001
    mstep_kl_bound_disc: float = 0.1
    group_kl_weight_disc: float = 0.6
    group_kl_weight_cont: float = 0.8
    group_kl_bound_disc: float = 0.05
    group_kl_bound_mean: float = 0.05
    batch_size: int = 3072
    n_batches: int = 20
    actor_lr: float = 1e-4
    critic_lr: float = 5e-4
    target_mix: float = 0.01
    advantage_smoothing: float = 0.95  # EMA on logged advantage estimates only
    action_samples: int = 30
    memory_size: int = 300000
    # implementation knobs
    expected_q_samples: int = 8   # joint action samples for E_pi Q at s'
    dual_max_iters: int = 50
    multiplier_lr: float = 10.0
    multiplier_max: float = 1e4

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise InvalidInput("gamma must lie in (0, 1)")
        positives = (self.retrace_lambda, self.retrace_steps,
                     self.estep_kl_bound_cont, self.estep_kl_bound_disc,
                     self.mstep_kl_bound_mean, self.mstep_kl_bound_std,
                     self.mstep_kl_bound_disc, self.batch_size, self.n_batches,
                     self.actor_lr, self.critic_lr, self.target_mix,
                     self.action_samples, self.memory_size)
        if any(v <= 0 for v in positives):
            raise InvalidInput("MPO config values must be positive")


# ---------------------------------------------------------------------------
# replay


@dataclass
class WindowBatch:
    """B sequential windows of up to L transitions (padded, mask in valid)."""

    states: np.ndarray        # (B, L, 6)
    torque: np.ndarray        # (B, L)
    gear: np.ndarray          # (B, L) int
    rewards: np.ndarray       # (B, L)
    next_states: np.ndarray   # (B, L, 6)
    logp_behavior: np.ndarray  # (B, L) joint log prob at collection time
    dones: np.ndarray         # (B, L)
    valid: np.ndarray         # (B, L) bool

    @property
    def head_states(self):
        return self.states[:, 0, :]


def empty_window_batch(batch, length) -> WindowBatch:
    B, L = batch, length
    return WindowBatch(
        states=np.zeros((B, L, STATE_DIM)), torque=np.zeros((B, L)),
        gear=np.zeros((B, L), dtype=np.int64), rewards=np.zeros((B, L)),
        next_states=np.zeros((B, L, STATE_DIM)), logp_behavior=np.zeros((B, L)),
        dones=np.zeros((B, L)), valid=np.zeros((B, L), dtype=bool))


class ReplayBuffer:
    """Episode-granular FIFO ring: whole oldest episodes are evicted first
    so sampled windows never straddle an eviction boundary."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise InvalidInput("buffer capacity must be >= 1")
        self.capacity = capacity
        self.episodes = deque()
        self.size = 0

    def add_trajectory(self, traj: Trajectory):
        if len(traj) == 0:
            return
        logp = traj.logp_disc + traj.logp_cont
        ep = {
            "states": traj.states, "torque": traj.torque_norm,
            "gear": traj.gear_class, "rewards": traj.rewards,
            "next_states": traj.next_states, "logp": logp,
            "dones": traj.dones.astype(np.float64),
        }
        self.episodes.append(ep)
        self.size += len(traj)
        while self.size > self.capacity and len(self.episodes) > 1:
            gone = self.episodes.popleft()
            self.size -= len(gone["rewards"])
        if self.size > self.capacity:
            # single over-long episode: keep its newest transitions
            ep = self.episodes[0]
            cut = self.size - self.capacity
            for k in ep:
                ep[k] = ep[k][cut:]
            self.size = self.capacity

    def _locate(self, flat_idx):
        for ep in self.episodes:
            n = len(ep["rewards"])
            if flat_idx < n:
                return ep, flat_idx
            flat_idx -= n
        raise IndexError(flat_idx)

    def sample_states(self, batch, rng: np.random.Generator):
        idx = rng.integers(self.size, size=batch)
        out = np.empty((batch, STATE_DIM))
        for i, fi in enumerate(idx):
            ep, j = self._locate(int(fi))
            out[i] = ep["states"][j]
        return out

    def fill_window(self, wb: WindowBatch, i, flat_idx, length):
        ep, j = self._locate(int(flat_idx))
        n = min(length, len(ep["rewards"]) - j)
        sl = slice(j, j + n)
        wb.states[i, :n] = ep["states"][sl]
        wb.torque[i, :n] = ep["torque"][sl]
        wb.gear[i, :n] = ep["gear"][sl]
        wb.rewards[i, :n] = ep["rewards"][sl]
        wb.next_states[i, :n] = ep["next_states"][sl]
        wb.logp_behavior[i, :n] = ep["logp"][sl]
        wb.dones[i, :n] = ep["dones"][sl]
        wb.valid[i, :n] = True
        # a terminal (collision) inside the window ends it there
        hits = np.nonzero(ep["dones"][sl] > 0)[0]
        if len(hits) and hits[0] + 1 < n:
            wb.valid[i, hits[0] + 1:] = False

    def sample_windows(self, batch, length, rng: np.random.Generator) -> WindowBatch:
        idx = rng.integers(self.size, size=batch)
        wb = empty_window_batch(batch, length)
        for i, fi in enumerate(idx):
            self.fill_window(wb, i, fi, length)
        return wb


# ---------------------------------------------------------------------------
# retrace


def retrace_targets(q_sa, exp_q_next, rewards, ratios, dones, valid,
                    gamma, lam):
    """Multi-step off-policy targets for the window heads.

    All arrays are (B, L).  q_sa holds target-critic values at the stored
    actions, exp_q_next the expected target-critic value under the current
    policy at each next state, ratios the current/behavior probability
    ratios.  Truncated importance weights c_k = lam * min(1, ratio_k) apply
    from the second window step on.
    """
    B, L = q_sa.shape
    targets = q_sa[:, 0].copy()
    coef = np.ones(B)
    discount = 1.0
    for j in range(L):
        m = valid[:, j].astype(np.float64)
        delta = rewards[:, j] + gamma * exp_q_next[:, j] * (1.0 - dones[:, j]) \
            - q_sa[:, j]
        targets += discount * coef * m * delta
        if j + 1 < L:
            c = lam * np.minimum(1.0, ratios[:, j + 1])
            coef = coef * c * (1.0 - dones[:, j])
            discount *= gamma
    return targets


# ---------------------------------------------------------------------------
# MPO temperature dual


def solve_mpo_dual(q_values, log_prior, bound, max_iters=50):
    """Temperature for q(a) ∝ prior(a) * exp(Q(a)/eta) with KL(q||prior) <= bound.

    The dual of the E-step is convex in eta and its derivative is
    bound - mean_KL(eta), so the optimum is the root of mean_KL(eta) = bound,
    found by bisection in log(eta).  Returns (eta, converged).  If the KL is
    below the bound even for tiny eta (flat Q), the constraint never binds
    and eta = 1 is returned flagged as converged.
    """
    q_values = np.asarray(q_values, dtype=np.float64)
    log_prior = np.broadcast_to(np.asarray(log_prior, dtype=np.float64),
                                q_values.shape)

    def mean_kl(eta):
        # KL(q || prior) = E_q[Q]/eta - log sum prior*exp(Q/eta)
        logits = q_values / eta + log_prior
        m = logits.max(axis=-1, keepdims=True)
        w = np.exp(logits - m)
        z = w.sum(axis=-1)
        q = w / z[..., None]
        log_z = m[..., 0] + np.log(z)
        kl = (q * q_values).sum(axis=-1) / eta - log_z
        return float(np.mean(kl))

    lo, hi = 1e-6, 1e6
    if mean_kl(lo) <= bound:
        return 1.0, True
    if mean_kl(hi) > bound:
        warnings.warn("MPO dual: KL above bound at maximum temperature",
                      RuntimeWarning)
        return hi, False
    llo, lhi = math.log(lo), math.log(hi)
    for _ in range(max_iters):
        mid = 0.5 * (llo + lhi)
        if mean_kl(math.exp(mid)) > bound:
            llo = mid
        else:
            lhi = mid
    converged = (lhi - llo) < 1e-9
    if not converged:
        warnings.warn("MPO dual: bisection not fully converged; using last "
                      "bracket", RuntimeWarning)
    return math.exp(0.5 * (llo + lhi)), converged


def weights_from_temperature(q_values, log_prior, eta):
    """Normalized E-step weights at a given temperature."""
    logits = np.asarray(q_values) / eta + log_prior
    m = logits.max(axis=-1, keepdims=True)
    w = np.exp(logits - m)
    return w / w.sum(axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# the agent


@dataclass
class Multipliers:
    """Lagrange multipliers for the M-step trust regions."""

    mean: float = MULTIPLIER_INIT
    std: float = MULTIPLIER_INIT
    disc: float = MULTIPLIER_INIT
    group_mean: float = 0.0
    group_disc: float = 0.0


@dataclass
class EStepResult:
    torque_samples: np.ndarray  # (B, M)
    weights_cont: np.ndarray    # (B, M)
    weights_disc: np.ndarray    # (B, 3)
    old_heads: nn.PolicyHeads   # actor heads frozen at E-step time
    eta_cont: float
    eta_disc: float
    mean_advantage: float       # logged only


class Agent:
    """One vehicle's learner: actor, critic + target, replay, optimizers."""

    def __init__(self, agent_id: int, actor: nn.HybridPolicy, critic: nn.Critic,
                 cfg: MpoConfig, rng_seed: int = 0):
        self.agent_id = agent_id
        self.cfg = cfg
        self.actor = actor
        self.critic = critic
        self.target_critic = critic.copy()
        self.buffer = ReplayBuffer(cfg.memory_size)
        self.actor_opt = nn.AdamState.for_params(actor.mlp.params_list(),
                                                 cfg.actor_lr)
        self.critic_opt = nn.AdamState.for_params(critic.mlp.params_list(),
                                                  cfg.critic_lr)
        self.multipliers = Multipliers()
        self.rng_seed = rng_seed
        self.cycle_count = 0
        self.adv_ema = 0.0
        # coordination state: the group policy in use and any delivered-but-
        # not-yet-adopted one (async rounds)
        self.group_policy = None
        self.group_version = -1
        self.pending_group = None

    def copy_policy(self) -> nn.HybridPolicy:
        return self.actor.copy()


def make_agent(agent_id, cfg: MpoConfig, init_seed: int = 0) -> Agent:
    """Standard-architecture agent from the shared init checkpoint seed."""
    rng = np.random.default_rng(np.random.SeedSequence((init_seed, 101)))
    actor = nn.HybridPolicy.init(STATE_DIM, rng)
    critic = nn.Critic.init(STATE_DIM, rng)
    return Agent(agent_id, actor, critic, cfg)


# -- critic -----------------------------------------------------------------


def _expected_target_q(agent: Agent, next_states_enc, rng, n_samples):
    """Monte-Carlo E_pi Q_target(s', .) with joint (torque, gear) samples."""
    h = agent.actor.heads(next_states_enc)
    n = next_states_enc.shape[0]
    probs = nn.softmax(h.logits)
    eps = rng.standard_normal((n, n_samples))
    torques = np.clip(h.mu[:, None] + h.sigma[:, None] * eps, -1.0, 1.0)
    u = rng.random((n, n_samples))
    cum = np.cumsum(probs, axis=1)
    gears = (u[:, :, None] > cum[:, None, :]).sum(axis=2)
    flat_states = np.repeat(next_states_enc, n_samples, axis=0)
    q = agent.target_critic.q_values(flat_states, torques.ravel(), gears.ravel())
    return q.reshape(n, n_samples).mean(axis=1)


def critic_update(agent: Agent, win: WindowBatch, rng) -> dict:
    """One retrace-target regression step plus a Polyak target mix."""
    cfg = agent.cfg
    B, L = win.rewards.shape
    flat_s = encode_state(win.states.reshape(B * L, STATE_DIM))
    flat_ns = encode_state(win.next_states.reshape(B * L, STATE_DIM))
    q_sa = agent.target_critic.q_values(
        flat_s, win.torque.ravel(), win.gear.ravel()).reshape(B, L)
    exp_q = _expected_target_q(agent, flat_ns, rng,
                               cfg.expected_q_samples).reshape(B, L)
    logp_d, logp_c = agent.actor.log_probs(flat_s, win.torque.ravel(),
                                           win.gear.ravel())
    log_ratio = (logp_d + logp_c).reshape(B, L) - win.logp_behavior
    ratios = np.exp(np.clip(log_ratio, -LOG_RATIO_CLIP, LOG_RATIO_CLIP))

    targets = retrace_targets(q_sa, exp_q, win.rewards, ratios, win.dones,
                              win.valid, cfg.gamma, cfg.retrace_lambda)

    head_enc = encode_state(win.head_states)
    q0, cache = agent.critic.q_cached(head_enc, win.torque[:, 0], win.gear[:, 0])
    err = q0 - targets
    loss = float(np.mean(err ** 2))
    if not math.isfinite(loss):
        warnings.warn("critic update aborted: non-finite loss", RuntimeWarning)
        return {"critic_loss": loss, "aborted": True}
    grads = agent.critic.backward_q(cache, 2.0 * err / B)
    new_params, agent.critic_opt = nn.adam_step(
        agent.critic_opt, agent.critic.mlp.params_list(), nn.flatten_grads(grads))
    agent.critic.mlp = agent.critic.mlp.replace_params(new_params)
    agent.target_critic.mlp = nn.polyak_mix(agent.target_critic.mlp,
                                            agent.critic.mlp, cfg.target_mix)
    return {"critic_loss": loss, "aborted": False}


# -- E-step -------------------------------------------------------------------


def e_step(agent: Agent, states_enc, rng, actions_per_state=None) -> EStepResult:
    """Nonparametric reweighting of sampled actions by exponentiated Q.

    Per state: M torque samples from the current actor (weights over the
    samples, uniform prior) and the 3 gear commands in full support (prior =
    current categorical).  Component Q values marginalize the other
    component under the actor.  Temperatures solve the standard dual per
    batch so each component KL stays within its bound.
    """
    cfg = agent.cfg
    M = actions_per_state or cfg.action_samples
    h = agent.actor.heads(states_enc)
    B = states_enc.shape[0]
    probs = nn.softmax(h.logits)

    eps = rng.standard_normal((B, M))
    torques = np.clip(h.mu[:, None] + h.sigma[:, None] * eps, -1.0, 1.0)

    # Q over the sample grid: (B, M, 3) in one batched evaluation
    rep_states = np.repeat(states_enc, M * 3, axis=0)
    rep_torque = np.repeat(torques.reshape(B * M), 3)
    rep_gear = np.tile(np.arange(3), B * M)
    q = agent.target_critic.q_values(rep_states, rep_torque, rep_gear)
    q = q.reshape(B, M, 3)

    q_cont = np.einsum("bmd,bd->bm", q, probs)   # marginal over gears
    q_disc = q.mean(axis=1)                      # marginal over torque samples

    eta_c, _ = solve_mpo_dual(q_cont, -math.log(M), cfg.estep_kl_bound_cont,
                              cfg.dual_max_iters)
    log_prior_d = np.log(np.maximum(probs, 1e-300))
    eta_d, _ = solve_mpo_dual(q_disc, log_prior_d, cfg.estep_kl_bound_disc,
                              cfg.dual_max_iters)

    w_cont = weights_from_temperature(q_cont, -math.log(M), eta_c)
    w_disc = weights_from_temperature(q_disc, log_prior_d, eta_d)

    v_mean = float(q.mean())
    adv = float((w_cont * q_cont).sum(axis=1).mean() - v_mean)
    tau = agent.cfg.advantage_smoothing
    agent.adv_ema = tau * agent.adv_ema + (1.0 - tau) * adv

    return EStepResult(torques, w_cont, w_disc, h, eta_c, eta_d, adv)


# -- M-step -------------------------------------------------------------------


def mstep_loss_and_grads(actor: nn.HybridPolicy, states_enc, es: EStepResult,
                         mult: Multipliers, cfg: MpoConfig,
                         group_policy: nn.HybridPolicy | None = None):
    """Full M-step objective and its exact parameter gradients.

    Loss = -weighted log-likelihood of the E-step actions
           + multiplier-weighted per-component KL trust regions vs the
             pre-update actor
           + (when a group policy is present and its weights are nonzero)
             fixed-weight + multiplier-weighted forward KL toward the group
             policy, per component.
    Returns (loss, grads, kl_stats).
    """
    B, M = es.torque_samples.shape
    h = actor.heads(states_enc)
    probs = nn.softmax(h.logits)
    old = es.old_heads
    p_old = nn.softmax(old.logits)

    # weighted negative log-likelihood
    z = (es.torque_samples - h.mu[:, None]) / h.sigma[:, None]
    logp_c = -0.5 * nn.losses.LOG_2PI - h.log_std[:, None] - 0.5 * z * z
    logp_d = nn.log_softmax(h.logits)
    nll = -(es.weights_cont * logp_c).sum(axis=1).mean() \
        - (es.weights_disc * logp_d).sum(axis=1).mean()

    d_mu = -(es.weights_cont * z / h.sigma[:, None]).sum(axis=1) / B
    d_ls = -(es.weights_cont * (z * z - 1.0)).sum(axis=1) / B
    d_logits = (probs - es.weights_disc) / B

    # decoupled trust regions against the pre-update actor
    kl_mean = ((h.mu - old.mu) ** 2 / (2.0 * old.sigma ** 2)).mean()
    kl_std = (np.log(h.sigma / old.sigma)
              + old.sigma ** 2 / (2.0 * h.sigma ** 2) - 0.5).mean()
    kl_disc = nn.kl_categorical_vs_logits(p_old, h.logits).mean()

    d_mu += mult.mean * (h.mu - old.mu) / old.sigma ** 2 / B
    d_ls += mult.std * (1.0 - old.sigma ** 2 / h.sigma ** 2) / B
    d_logits += mult.disc * (probs - p_old) / B

    loss = nll + mult.mean * kl_mean + mult.std * kl_std + mult.disc * kl_disc
    stats = {"kl_mean": float(kl_mean), "kl_std": float(kl_std),
             "kl_disc": float(kl_disc), "nll": float(nll),
             "group_kl_cont": 0.0, "group_kl_disc": 0.0}

    share = group_policy is not None and (cfg.group_kl_weight_cont > 0
                                          or cfg.group_kl_weight_disc > 0)
    if share:
        gh = group_policy.heads(states_enc)
        pg = nn.softmax(gh.logits)
        klg_c = nn.kl_gaussian(gh.mu, gh.sigma, h.mu, h.sigma).mean()
        klg_d = nn.kl_categorical_vs_logits(pg, h.logits).mean()
        w_c = cfg.group_kl_weight_cont + mult.group_mean
        w_d = cfg.group_kl_weight_disc + mult.group_disc
        gm, gl = nn.grad_kl_gaussian_student(gh.mu, gh.sigma, h.mu, h.sigma)
        d_mu += w_c * gm / B
        d_ls += w_c * gl / B
        d_logits += w_d * (probs - pg) / B
        loss = loss + w_c * klg_c + w_d * klg_d
        stats["group_kl_cont"] = float(klg_c)
        stats["group_kl_disc"] = float(klg_d)

    grads = actor.backward_heads(h, d_logits, d_mu, d_ls)
    return float(loss), nn.flatten_grads(grads), stats


def m_step(agent: Agent, states_enc, es: EStepResult,
           group_policy: nn.HybridPolicy | None = None) -> dict:
    """One Adam step on the M-step objective plus dual ascent on the
    trust-region multipliers.  Diverging multipliers abort the update."""
    cfg = agent.cfg
    mult = agent.multipliers
    loss, grads, stats = mstep_loss_and_grads(agent.actor, states_enc, es,
                                              mult, cfg, group_policy)
    if not math.isfinite(loss):
        warnings.warn("m-step aborted: non-finite loss", RuntimeWarning)
        return {**stats, "mstep_loss": loss, "aborted": True}

    new_params, agent.actor_opt = nn.adam_step(
        agent.actor_opt, agent.actor.mlp.params_list(), grads)
    agent.actor.mlp = agent.actor.mlp.replace_params(new_params)

    lr = cfg.multiplier_lr
    mult.mean = min(max(mult.mean + lr * (stats["kl_mean"] - cfg.mstep_kl_bound_mean), 0.0),
                    cfg.multiplier_max)
    mult.std = min(max(mult.std + lr * (stats["kl_std"] - cfg.mstep_kl_bound_std), 0.0),
                   cfg.multiplier_max)
    mult.disc = min(max(mult.disc + lr * (stats["kl_disc"] - cfg.mstep_kl_bound_disc), 0.0),
                    cfg.multiplier_max)
    if group_policy is not None and (cfg.group_kl_weight_cont > 0
                                     or cfg.group_kl_weight_disc > 0):
        mult.group_mean = min(max(
            mult.group_mean + lr * (stats["group_kl_cont"] - cfg.group_kl_bound_mean),
            0.0), cfg.multiplier_max)
        mult.group_disc = min(max(
            mult.group_disc + lr * (stats["group_kl_disc"] - cfg.group_kl_bound_disc),
            0.0), cfg.multiplier_max)

    diverged = any(m >= cfg.multiplier_max for m in
                   (mult.mean, mult.std, mult.disc, mult.group_mean,
                    mult.group_disc))
    if diverged:
        warnings.warn("m-step: trust-region multiplier diverged", RuntimeWarning)
    return {**stats, "mstep_loss": loss, "aborted": False,
            "multiplier_diverged": diverged}


# -- cycle --------------------------------------------------------------------


def learn_cycle(agent: Agent, group_policy: nn.HybridPolicy | None,
                rng: np.random.Generator, buffer: ReplayBuffer | None = None) -> dict:
    """n_batches of (critic update, E-step, M-step) on uniform replay samples.

    No-op with a warning when the buffer holds less than one batch."""
    cfg = agent.cfg
    buf = buffer if buffer is not None else agent.buffer
    if buf.size < cfg.batch_size:
        warnings.warn(f"agent {agent.agent_id}: buffer {buf.size} < batch "
                      f"{cfg.batch_size}; skipping learn cycle", RuntimeWarning)
        return {"skipped": True, "batches": 0}
    reports = []
    for _ in range(cfg.n_batches):
        win = buf.sample_windows(cfg.batch_size, cfg.retrace_steps, rng)
        c_rep = critic_update(agent, win, rng)
        states_enc = encode_state(win.head_states)
        es = e_step(agent, states_enc, rng)
        m_rep = m_step(agent, states_enc, es, group_policy)
        reports.append({**c_rep, **m_rep, "eta_cont": es.eta_cont,
                        "eta_disc": es.eta_disc})
    agent.cycle_count += 1
    return {"skipped": False, "batches": len(reports), "last": reports[-1],
            "critic_loss_trace": [r["critic_loss"] for r in reports],
            "adv_ema": agent.adv_ema}


def make_snapshot(agent: Agent, batch: int, rng_seed: int):
    """Copy (actor, critic, B uniformly sampled raw states) for the
    coordinator.  States are non-sequential by construction."""
    from .coordinator import AgentSnapshot  # local import avoids a module cycle

    if agent.buffer.size < batch:
        raise InvalidInput(
            f"buffer holds {agent.buffer.size} < snapshot batch {batch}")
    rng = np.random.default_rng(rng_seed)
    states = agent.buffer.sample_states(batch, rng)
    return AgentSnapshot(agent_id=agent.agent_id, actor=agent.actor.copy(),
                         critic=agent.critic.copy(), states=states,
                         cycle_index=agent.cycle_count)


# -- checkpointing -------------------------------------------------------------


def config_hash(cfg: MpoConfig) -> str:
    import hashlib

    text = ",".join(f"{k}={v!r}" for k, v in sorted(vars(cfg).items()))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def save_agent(agent: Agent, dir_path):
    """Actor/critic in the binary tensor format plus a text metadata sidecar."""
    import os

    os.makedirs(dir_path, exist_ok=True)
    nn.save_tensors(os.path.join(dir_path, "actor.fln"),
                    agent.actor.named_tensors())
    nn.save_tensors(os.path.join(dir_path, "critic.fln"),
                    agent.critic.named_tensors())
    nn.save_tensors(os.path.join(dir_path, "target_critic.fln"),
                    agent.target_critic.named_tensors())
    cfg_hash = config_hash(agent.cfg)
    with open(os.path.join(dir_path, "meta.txt"), "w", encoding="utf-8") as fh:
        fh.write(f"agent_id={agent.agent_id}\n")
        fh.write(f"cycle_count={agent.cycle_count}\n")
        fh.write(f"rng_seed={agent.rng_seed}\n")
        fh.write(f"config_hash={cfg_hash}\n")


def load_agent(dir_path, cfg: MpoConfig) -> Agent:
    import os

    meta = {}
    with open(os.path.join(dir_path, "meta.txt"), encoding="utf-8") as fh:
        for line in fh:
            key, _, val = line.strip().partition("=")
            meta[key] = val
    actor = nn.HybridPolicy.from_named_tensors(
        nn.load_tensors(os.path.join(dir_path, "actor.fln")))
    critic = nn.Critic.from_named_tensors(
        nn.load_tensors(os.path.join(dir_path, "critic.fln")), STATE_DIM)
    agent = Agent(int(meta["agent_id"]), actor, critic, cfg,
                  rng_seed=int(meta["rng_seed"]))
    agent.target_critic = nn.Critic.from_named_tensors(
        nn.load_tensors(os.path.join(dir_path, "target_critic.fln")), STATE_DIM)
    agent.cycle_count = int(meta["cycle_count"])
    return agent
