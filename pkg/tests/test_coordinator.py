"""Coordinator tests.  Oracles: closed-form expectation over the uniform
action box for value estimates (via a near-linear critic construction), a
simplex grid search for the weighted categorical distillation minimizer,
and bitwise reduction of the pooled central learner to a single agent."""

import math

import numpy as np
import pytest

from fleetptc import agent as ag
from fleetptc import coordinator as co
from fleetptc import nn
from fleetptc.env import encode_state
from fleetptc.errors import InvalidInput

from .test_agent import desk_cfg, fill_buffer, fresh_agent

RNG = np.random.default_rng


def random_states(rng, n):
    return np.column_stack([
        rng.uniform(0, 30, n), rng.uniform(-3, 3, n), rng.uniform(-6, 3, n),
        rng.integers(1, 11, n).astype(float), rng.uniform(-6, 3, n),
        rng.integers(1, 11, n).astype(float)])


def perturbed_policy(base, rng, scale=0.05):
    pol = base.copy()
    for W, b in zip(pol.mlp.weights, pol.mlp.biases):
        W += rng.normal(scale=scale, size=W.shape)
        b += rng.normal(scale=scale, size=b.shape)
    return pol


def make_snapshot_like(agent_id, actor, critic, states):
    return co.AgentSnapshot(agent_id=agent_id, actor=actor, critic=critic,
                            states=states, cycle_index=1)


def constant_critic(c=3.25):
    critic = nn.Critic.init(6, RNG(0), hidden=(8,))
    for W in critic.mlp.weights:
        W[:] = 0.0
    for b in critic.mlp.biases:
        b[:] = 0.0
    critic.mlp.biases[-1][0] = c
    return critic


# ---------------------------------------------------------------------------
# value estimation


def test_estimate_value_constant_critic():
    critic = constant_critic(3.25)
    states = encode_state(random_states(RNG(1), 4))
    for m in (1, 7, 30):
        v = co.estimate_value(critic, states, m, RNG(2))
        np.testing.assert_allclose(v, 3.25, atol=1e-12)


def test_estimate_value_single_sample():
    critic = nn.Critic.init(6, RNG(3), hidden=(16,))
    s = encode_state(random_states(RNG(4), 1))
    v = co.estimate_value(critic, s, 1, RNG(5))
    rng = RNG(5)
    t = rng.uniform(-1, 1, size=(1, 1))
    g = rng.integers(0, 3, size=(1, 1))
    q = critic.q_values(s, t.ravel(), g.ravel())
    assert v[0] == pytest.approx(q[0], abs=1e-12)


def test_estimate_value_matches_closed_form_on_linear_critic():
    # near-linear critic: tiny first layer inside tanh, rescaled output, so
    # Q ~= A @ features exactly; the closed form integrates the uniform box:
    # E[torque] = 0, E[gear one-hot] = 1/3 each
    rng = RNG(6)
    delta = 1e-4
    critic = nn.Critic.init(6, rng, hidden=(16,))
    R1 = rng.normal(size=(16, 10))
    R2 = rng.normal(size=(1, 16))
    critic.mlp.weights[0] = delta * R1
    critic.mlp.weights[1] = R2 / delta
    critic.mlp.biases[0][:] = 0.0
    critic.mlp.biases[1][:] = 0.0
    A = (R2 @ R1).ravel()
    states = encode_state(random_states(RNG(7), 3))
    for s in states:
        feat_mean = np.concatenate([s, [0.0], [1 / 3, 1 / 3, 1 / 3]])
        want = float(A @ feat_mean)
        got = co.estimate_value(critic, s[None, :], 10_000, RNG(8))[0]
        scale = float(np.abs(A).sum())  # error budget relative to Q scale
        assert abs(got - want) < 0.01 * scale


# ---------------------------------------------------------------------------
# advantage weights


def test_zeta_values():
    assert co.advantage_to_weight(0.0, 0.8) == 1.0
    assert co.advantage_to_weight(0.4, 0.8) == pytest.approx(math.exp(0.5),
                                                             abs=1e-12)
    assert co.advantage_to_weight(0.8, 0.8) == pytest.approx(math.e, rel=1e-12)
    # clamp
    assert co.advantage_to_weight(1e9, 0.8) == pytest.approx(math.exp(10.0))
    assert co.advantage_to_weight(-1e9, 0.8) == pytest.approx(math.exp(-10.0))
    with pytest.raises(InvalidInput):
        co.advantage_to_weight(0.0, 0.0)


def test_zeta_one_when_greedy_matches_mean():
    critic = constant_critic(1.7)
    actor = nn.HybridPolicy.init(6, RNG(9))
    states = encode_state(random_states(RNG(10), 5))
    v = co.estimate_value(critic, states, 30, RNG(11))
    z = co.advantage_weight(critic, actor, states, v, beta=0.8)
    np.testing.assert_allclose(z, 1.0, atol=1e-12)


# ---------------------------------------------------------------------------
# group regression


def test_single_teacher_distillation_converges():
    init = nn.HybridPolicy.init(6, RNG(12))
    teacher = perturbed_policy(init, RNG(13), scale=0.05)
    states = random_states(RNG(14), 64)
    snap = make_snapshot_like(0, teacher, nn.Critic.init(6, RNG(15)), states)
    group = co.GroupPolicy(init.copy(), 0)
    new, rep = co.group_regression([snap], group, iterations=300,
                                   rng=RNG(16), zeta_override=np.ones(64))
    enc = encode_state(states)
    th = teacher.heads(enc)
    sh = new.policy.heads(enc)
    pt = nn.softmax(th.logits)
    kl = float(nn.kl_categorical_vs_logits(pt, sh.logits).mean()
               + nn.kl_gaussian(th.mu, th.sigma, sh.mu, sh.sigma).mean())
    assert kl < 1e-3
    assert new.version == 1
    assert rep.loss_last < rep.loss_first


def test_unanimous_teachers_any_zeta():
    init = nn.HybridPolicy.init(6, RNG(17))
    teacher = perturbed_policy(init, RNG(18), scale=0.04)
    states_a = random_states(RNG(19), 32)
    states_b = random_states(RNG(20), 32)
    critic = nn.Critic.init(6, RNG(21))
    snaps = [make_snapshot_like(0, teacher.copy(), critic, states_a),
             make_snapshot_like(1, teacher.copy(), critic, states_b)]
    group = co.GroupPolicy(init.copy(), 3)
    zeta = np.concatenate([np.full(32, 0.2), np.full(32, 5.0)])
    new, _ = co.group_regression(snaps, group, iterations=300, rng=RNG(22),
                                 zeta_override=zeta)
    enc = encode_state(np.concatenate([states_a, states_b]))
    th = teacher.heads(enc)
    sh = new.policy.heads(enc)
    kl = float(nn.kl_categorical_vs_logits(nn.softmax(th.logits),
                                           sh.logits).mean()
               + nn.kl_gaussian(th.mu, th.sigma, sh.mu, sh.sigma).mean())
    assert kl < 1e-3
    assert new.version == 4


def simplex_grid_minimizer(teachers, zeta, step=0.004):
    """Independent grid search for argmin_q sum_i zeta_i xent(p_i, q)."""
    best, best_q = math.inf, None
    n = int(round(1.0 / step))
    for i in range(1, n):
        for j in range(1, n - i):
            q = np.array([i * step, j * step, 1.0 - (i + j) * step])
            loss = -sum(z * float(p @ np.log(q)) for p, z in zip(teachers, zeta))
            if loss < best:
                best, best_q = loss, q
    return best_q


def test_weighted_distillation_matches_grid_search():
    # two fixed categorical teachers on one shared state, zeta = (1, e)
    rng = RNG(23)
    init = nn.HybridPolicy.init(6, RNG(24))
    t1 = perturbed_policy(init, RNG(25), scale=0.3)
    t2 = perturbed_policy(init, RNG(26), scale=0.3)
    state = random_states(RNG(27), 1)
    critic = nn.Critic.init(6, RNG(28))
    snaps = [make_snapshot_like(0, t1, critic, state.copy()),
             make_snapshot_like(1, t2, critic, state.copy())]
    zeta = np.array([1.0, math.e])
    group = co.GroupPolicy(init.copy(), 0)
    new, _ = co.group_regression(snaps, group, iterations=500, rng=rng,
                                 zeta_override=zeta)
    enc = encode_state(state)
    p1 = nn.softmax(t1.heads(enc).logits)[0]
    p2 = nn.softmax(t2.heads(enc).logits)[0]
    q_star = simplex_grid_minimizer([p1, p2], zeta)
    q_got = nn.softmax(new.policy.heads(enc).logits)[0]
    tv = 0.5 * np.abs(q_got - q_star).sum()
    assert tv < 0.01, f"TV {tv:.4f}: got {q_got}, grid {q_star}"


def test_zeta_scaling_scales_gradients_exactly():
    init = nn.HybridPolicy.init(6, RNG(29))
    teacher = perturbed_policy(init, RNG(30), scale=0.1)
    states = encode_state(random_states(RNG(31), 16))
    p, mu, sig = teacher.dists(states)
    zeta = RNG(32).uniform(0.5, 2.0, size=16)
    student = init.copy()
    _, h = co.regression_loss(student, states, p, mu, sig, zeta)
    g1 = co.regression_grads(student, h, p, mu, sig, zeta)
    # scaling by a power of two commutes exactly with every float op, so the
    # linearity in zeta is observable bitwise
    _, h2 = co.regression_loss(student, states, p, mu, sig, 2.0 * zeta)
    g2 = co.regression_grads(student, h2, p, mu, sig, 2.0 * zeta)
    for a, b in zip(g1, g2):
        np.testing.assert_array_equal(b, 2.0 * a)
    # and a generic positive factor scales to rounding noise
    _, h3 = co.regression_loss(student, states, p, mu, sig, 3.0 * zeta)
    g3 = co.regression_grads(student, h3, p, mu, sig, 3.0 * zeta)
    for a, b in zip(g1, g3):
        np.testing.assert_allclose(b, 3.0 * a, rtol=1e-9, atol=1e-15)


def test_group_regression_never_mutates_snapshots_and_is_deterministic():
    init = nn.HybridPolicy.init(6, RNG(33))
    teacher = perturbed_policy(init, RNG(34), scale=0.05)
    states = random_states(RNG(35), 16)
    critic = nn.Critic.init(6, RNG(36))
    snap = make_snapshot_like(0, teacher, critic, states)
    before = [W.copy() for W in teacher.mlp.weights]
    group = co.GroupPolicy(init.copy(), 0)
    a, _ = co.group_regression([snap], group, iterations=20, rng=RNG(37))
    b, _ = co.group_regression([snap], group, iterations=20, rng=RNG(37))
    assert a.policy.params_equal(b.policy)
    for W0, W1 in zip(before, snap.actor.mlp.weights):
        np.testing.assert_array_equal(W0, W1)
    # group output is a valid distribution everywhere
    probs, _, sigma = a.policy.dists(encode_state(random_states(RNG(38), 50)))
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(sigma >= math.exp(nn.LOG_STD_MIN) - 1e-300)
    assert np.all(sigma <= math.exp(nn.LOG_STD_MAX) + 1e-300)


def test_group_regression_input_validation():
    init = nn.HybridPolicy.init(6, RNG(39))
    group = co.GroupPolicy(init.copy(), 0)
    with pytest.raises(InvalidInput):
        co.group_regression([], group, iterations=10, rng=RNG(40))
    small = nn.HybridPolicy.init(6, RNG(41), hidden=(8,))
    snap_small = make_snapshot_like(0, small, nn.Critic.init(6, RNG(42), hidden=(8,)),
                                    random_states(RNG(43), 4))
    with pytest.raises(InvalidInput):
        co.group_regression([snap_small], group, iterations=10, rng=RNG(44))


# ---------------------------------------------------------------------------
# centralized baseline


def test_impala_single_agent_reduces_to_local_learning():
    local = fresh_agent(40)
    central = fresh_agent(40)
    fill_buffer(local, RNG(45))
    central_buffers = [local.buffer]
    rep_local = ag.learn_cycle(local, None, RNG(46))
    rep_central = co.impala_central_update(central, central_buffers, RNG(46))
    assert not rep_local["skipped"] and not rep_central["skipped"]
    assert rep_local["critic_loss_trace"] == rep_central["critic_loss_trace"]
    assert local.actor.params_equal(central.actor)
    assert local.critic.params_equal(central.critic)


def test_impala_pooled_permutation_invariance():
    # pooling duplicated identical data behaves like the duplicated buffer
    a = fresh_agent(41)
    fill_buffer(a, RNG(47), episodes=2, n=40)
    b = fresh_agent(41)
    fill_buffer(b, RNG(47), episodes=2, n=40)
    pooled_ab = co.PooledBuffer([a.buffer, b.buffer])
    assert pooled_ab.size == a.buffer.size + b.buffer.size
    wb = pooled_ab.sample_windows(32, 6, RNG(48))
    assert wb.valid.any(axis=1).all()


def test_impala_loss_decreases_on_frozen_pool():
    central = fresh_agent(42, n_batches=1, batch_size=64)
    agents = [fresh_agent(43), fresh_agent(44)]
    for i, a in enumerate(agents):
        fill_buffer(a, RNG(50 + i), episodes=4, n=60)
    buffers = [a.buffer for a in agents]
    losses = []
    rng = RNG(52)
    for _ in range(40):
        rep = co.impala_central_update(central, buffers, rng)
        losses.append(rep["critic_loss_trace"][0])
    assert np.mean(losses[-8:]) < np.mean(losses[:8])


# ---------------------------------------------------------------------------
# coordinator object


def test_coordinator_versions_and_inbox():
    init = nn.HybridPolicy.init(6, RNG(53))
    coord = co.Coordinator(init)
    assert coord.group.version == 0
    teacher = perturbed_policy(init, RNG(54), scale=0.03)
    snap = make_snapshot_like(0, teacher, nn.Critic.init(6, RNG(55)),
                              random_states(RNG(56), 8))
    coord.ingest(snap)
    coord.run_regression(RNG(57), iterations=5)
    assert coord.group.version == 1
    assert coord.inbox == []
    coord.ingest(snap)
    coord.run_regression(RNG(58), iterations=5)
    assert coord.group.version == 2
