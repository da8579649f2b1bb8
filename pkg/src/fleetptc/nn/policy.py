"""Hybrid policy and critic networks.

The policy maps an encoded state to a categorical head (3 gear-command
classes) and a Gaussian head (normalized torque), realized as one tanh MLP
whose 5 outputs are [logit0, logit1, logit2, mean, raw log-std].  The
log-std is clamped to [LOG_STD_MIN, LOG_STD_MAX] to prevent collapse.  The
critic maps (encoded state, torque, one-hot gear command) to a scalar Q.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .backend import make_runner
from .losses import log_softmax, softmax
from .mlp import Mlp, MlpSpec

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
N_GEAR_CLASSES = 3
POLICY_OUT_DIM = N_GEAR_CLASSES + 2

LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class PolicyHeads:
    """Head outputs for a batch of states, plus what backward() needs."""

    logits: np.ndarray      # (n, 3)
    mu: np.ndarray          # (n,)
    sigma: np.ndarray       # (n,)
    log_std: np.ndarray     # (n,) clamped
    clamp_pass: np.ndarray  # (n,) 1.0 where log-std gradient passes through
    cache: list


class HybridPolicy:
    """Categorical gear head x Gaussian torque head over a shared trunk."""

    def __init__(self, mlp: Mlp):
        if mlp.dims[-1] != POLICY_OUT_DIM:
            raise ValueError(f"policy net must have {POLICY_OUT_DIM} outputs")
        self.mlp = mlp

    @classmethod
    def init(cls, input_dim, rng, hidden=(256, 256, 256), log_std_init=-0.5):
        spec = MlpSpec(input_dim, tuple(hidden), POLICY_OUT_DIM)
        mlp = Mlp.init(spec, rng)
        mlp.biases[-1][N_GEAR_CLASSES + 1] = log_std_init
        return cls(mlp)

    def copy(self) -> "HybridPolicy":
        return HybridPolicy(self.mlp.copy())

    # -- batched heads -----------------------------------------------------

    def heads(self, X) -> PolicyHeads:
        Y, cache = self.mlp.forward_cached(np.atleast_2d(X))
        logits = Y[:, :N_GEAR_CLASSES]
        mu = Y[:, N_GEAR_CLASSES]
        raw = Y[:, N_GEAR_CLASSES + 1]
        log_std = np.clip(raw, LOG_STD_MIN, LOG_STD_MAX)
        clamp_pass = ((raw > LOG_STD_MIN) & (raw < LOG_STD_MAX)).astype(np.float64)
        return PolicyHeads(logits, mu, np.exp(log_std), log_std, clamp_pass, cache)

    def backward_heads(self, h: PolicyHeads, d_logits, d_mu, d_log_std):
        """Parameter gradients given gradients at the three head outputs."""
        n = h.mu.shape[0]
        dY = np.empty((n, POLICY_OUT_DIM))
        dY[:, :N_GEAR_CLASSES] = d_logits
        dY[:, N_GEAR_CLASSES] = d_mu
        dY[:, N_GEAR_CLASSES + 1] = d_log_std * h.clamp_pass
        grads, _ = self.mlp.backward(h.cache, dY)
        return grads

    def dists(self, X):
        """(gear probs (n,3), mu (n,), sigma (n,)) at the given states."""
        h = self.heads(X)
        return softmax(h.logits), h.mu, h.sigma

    def log_probs(self, X, torque, gear_class):
        """Per-sample log pi_d(gear) and log pi_c(torque)."""
        h = self.heads(X)
        logp_all = log_softmax(h.logits)
        idx = np.asarray(gear_class, dtype=np.intp)
        logp_d = logp_all[np.arange(len(idx)), idx]
        z = (np.asarray(torque, float) - h.mu) / h.sigma
        logp_c = -0.5 * LOG_2PI - h.log_std - 0.5 * z * z
        return logp_d, logp_c

    # -- single-state action selection (rollout hot path) -------------------

    def runner(self):
        """Prepared single-state evaluator bound to the current params."""
        return _PolicyRunner(self)

    # -- serialization -------------------------------------------------------

    def named_tensors(self):
        return self.mlp.named_tensors()

    @classmethod
    def from_named_tensors(cls, tensors):
        return cls(Mlp.from_named_tensors(tensors))

    def params_equal(self, other):
        return self.mlp.params_equal(other.mlp)


class _PolicyRunner:
    """Scalar-path sampling/greedy evaluation via the active kernel backend."""

    def __init__(self, policy: HybridPolicy):
        self._fwd = make_runner(policy.mlp).forward_one

    def outputs(self, x):
        y = self._fwd(x)
        log_std = min(max(y[N_GEAR_CLASSES + 1], LOG_STD_MIN), LOG_STD_MAX)
        return y[:N_GEAR_CLASSES], y[N_GEAR_CLASSES], log_std

    def sample(self, x, rng):
        """Draw (gear_class, torque_norm, logp_d, logp_c).

        Consumes exactly two draws (one uniform, one normal) per call.  The
        torque sample is clipped to [-1, 1] and its log-density evaluated at
        the clipped value, which is also what gets stored and replayed.
        """
        logits, mu, log_std = self.outputs(x)
        zmax = logits.max()
        e = np.exp(logits - zmax)
        total = e.sum()
        u = rng.random() * total
        k = 0
        acc = e[0]
        while acc < u and k < N_GEAR_CLASSES - 1:
            k += 1
            acc += e[k]
        logp_d = math.log(e[k] / total)

        sigma = math.exp(log_std)
        t = mu + sigma * rng.standard_normal()
        t = min(max(t, -1.0), 1.0)
        z = (t - mu) / sigma
        logp_c = -0.5 * LOG_2PI - log_std - 0.5 * z * z
        return k, t, logp_d, logp_c

    def greedy(self, x):
        """(argmax gear class, clipped mean torque)."""
        logits, mu, _ = self.outputs(x)
        k = int(np.argmax(logits))
        return k, min(max(mu, -1.0), 1.0)


class Critic:
    """Scalar state-action value over (encoded state, action features)."""

    def __init__(self, mlp: Mlp, state_dim):
        self.mlp = mlp
        self.state_dim = state_dim

    @classmethod
    def init(cls, state_dim, rng, hidden=(256, 256, 256)):
        spec = MlpSpec(state_dim + 1 + N_GEAR_CLASSES, tuple(hidden), 1)
        return cls(Mlp.init(spec, rng), state_dim)

    def copy(self) -> "Critic":
        return Critic(self.mlp.copy(), self.state_dim)

    def features(self, X, torque, gear_class):
        """Concatenate encoded states with [torque, one-hot gear command]."""
        X = np.atleast_2d(X)
        n = X.shape[0]
        F = np.zeros((n, X.shape[1] + 1 + N_GEAR_CLASSES))
        F[:, :X.shape[1]] = X
        F[:, X.shape[1]] = torque
        F[np.arange(n), X.shape[1] + 1 + np.asarray(gear_class, dtype=np.intp)] = 1.0
        return F

    def q_values(self, X, torque, gear_class):
        return self.mlp.forward(self.features(X, torque, gear_class)).ravel()

    def q_cached(self, X, torque, gear_class):
        Y, cache = self.mlp.forward_cached(self.features(X, torque, gear_class))
        return Y.ravel(), cache

    def backward_q(self, cache, dq):
        grads, _ = self.mlp.backward(cache, np.asarray(dq, float)[:, None])
        return grads

    def named_tensors(self):
        return self.mlp.named_tensors()

    @classmethod
    def from_named_tensors(cls, tensors, state_dim):
        return cls(Mlp.from_named_tensors(tensors), state_dim)

    def params_equal(self, other):
        return self.mlp.params_equal(other.mlp)


def polyak_mix(target: Mlp, online: Mlp, tau: float) -> Mlp:
    """target <- (1 - tau) * target + tau * online, as a new Mlp."""
    ws = [(1.0 - tau) * tw + tau * ow for tw, ow in zip(target.weights, online.weights)]
    bs = [(1.0 - tau) * tb + tau * ob for tb, ob in zip(target.biases, online.biases)]
    return Mlp(ws, bs)
