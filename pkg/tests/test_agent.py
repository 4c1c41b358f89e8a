import numpy as np
import pytest
from scipy import stats

from uavorbit.agent import (
    NOT_CHOSEN, OBS_SIZE, PAD, STACK_SIZE, AbsMaxScaler, DQNAgent, DuelingNet, ReplayBuffer,
    StateStack, build_observation, decay_epsilon, load_checkpoint, make_optimizer,
    save_checkpoint, select_action, td_loss_and_grads, train_step, update_target,
)
from uavorbit.config import ScenarioConfig
from uavorbit.oracles import finite_difference_check
from uavorbit.policies import Action

CFG = ScenarioConfig()


# --- observations ---------------------------------------------------------

def test_first_step_observation():
    obs = build_observation(50.0, 100.0, 0.0, Action.NOOP, [1200.0, 2400.0],
                            [None, None], CFG, diagonal=4800.0)
    assert obs.shape == (OBS_SIZE,) == (16,)
    assert obs[0] == 0.05 and obs[1] == pytest.approx(1 / 3)
    assert obs[2] == 0.0 and obs[3] == 1.0
    assert obs[4:6].tolist() == [0.25, 0.5]
    assert np.all(obs[6:10] == PAD)
    assert np.all(obs[10:] == NOT_CHOSEN)


def test_neighbor_action_encoding():
    obs = build_observation(60.0, 100.0, 0.3, Action.RADIUS_UP, [100.0, 200.0],
                            [Action.RADIUS_UP, Action.HEIGHT_DOWN], CFG, diagonal=1000.0)
    assert obs[3] == 0.0
    assert obs[10] == 0.0 and obs[11] == 0.75


def test_abs_max_scaler_bounded():
    s = AbsMaxScaler()
    assert s(0.0) == 0.0
    assert s(5.0) == 1.0
    assert s(-2.5) == -0.5
    assert s(-10.0) == -1.0


def test_state_stack_replicates_then_rolls():
    stack = StateStack()
    first = np.full(OBS_SIZE, 1.0)
    stack.reset(first)
    assert np.array_equal(stack.vector(), np.tile(first, 4))
    stack.push(np.full(OBS_SIZE, 2.0))
    vec = stack.vector()
    assert vec.shape == (STACK_SIZE,) == (64,)
    assert np.all(vec[:48] == 1.0) and np.all(vec[48:] == 2.0)


# --- network --------------------------------------------------------------

def test_layer_shapes():
    net = DuelingNet(rng=np.random.default_rng(0))
    assert [w.shape for w, _ in net.trunk] == [(64, 64)] * 4
    assert [w.shape for w, _ in net.value] == [(64, 64), (64, 64), (64, 1)]
    assert [w.shape for w, _ in net.advantage] == [(64, 64), (64, 64), (64, 5)]


def test_zero_weights_give_zero_q():
    net = DuelingNet(rng=np.random.default_rng(0))
    for p in net.parameters():
        p[...] = 0
    assert np.all(net.forward(np.random.default_rng(1).normal(size=64)) == 0)


def test_advantage_bias_shift_leaves_q_unchanged():
    net = DuelingNet(rng=np.random.default_rng(2), dtype="float64")
    x = np.random.default_rng(3).normal(size=(10, 64))
    q = net.forward(x)
    net.advantage[-1][1][...] += 7.5
    assert np.allclose(net.forward(x), q, atol=1e-12)


def test_dueling_identity():
    net = DuelingNet(rng=np.random.default_rng(4), dtype="float64")
    x = np.random.default_rng(5).normal(size=(50, 64))
    q = net.forward(x)
    v, _ = net.value_advantage(x)
    assert np.allclose((q - v).sum(axis=1), 0.0, atol=1e-9)


def relu(x):
    return [max(0.0, t) for t in x]


def dense(x, w, b):
    return [sum(x[i] * w[i][j] for i in range(len(x))) + b[j] for j in range(len(b))]


def test_forward_matches_hand_arithmetic():
    rng = np.random.default_rng(6)
    net = DuelingNet(n_in=4, n_actions=5, hidden=3, rng=rng, dtype="float64")
    for p in net.parameters():
        p[...] = rng.normal(size=p.shape)
    x = rng.normal(size=4).tolist()
    h = x
    for w, b in net.trunk:
        h = relu(dense(h, w.tolist(), b.tolist()))
    v = h
    for k, (w, b) in enumerate(net.value):
        v = dense(v, w.tolist(), b.tolist())
        v = relu(v) if k < 2 else v
    a = h
    for k, (w, b) in enumerate(net.advantage):
        a = dense(a, w.tolist(), b.tolist())
        a = relu(a) if k < 2 else a
    expected = [v[0] + ai - sum(a) / 5 for ai in a]
    assert np.allclose(net.forward(np.array(x)), expected, atol=1e-12, rtol=0)


def test_non_finite_activations_raise():
    net = DuelingNet(rng=np.random.default_rng(7), dtype="float64")
    with pytest.raises(FloatingPointError):
        net.forward(np.full(64, np.nan))


@pytest.mark.parametrize("seed", range(4))
def test_gradients_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    net = DuelingNet(n_in=16, n_actions=5, hidden=16, rng=rng, dtype="float64")
    for w, b in net.value[-1:] + net.advantage[-1:]:
        w *= 10.0
        b += rng.normal(size=b.shape)
    states = rng.normal(size=(20, 16))
    actions = rng.integers(0, 5, size=20)
    targets = rng.normal(size=20)
    assert finite_difference_check(net, states, actions, targets, rng, probes=40) < 1e-4


def test_every_layer_receives_correct_gradient():
    rng = np.random.default_rng(12)
    net = DuelingNet(n_in=8, n_actions=5, hidden=8, rng=rng, dtype="float64")
    states = rng.normal(size=(16, 8))
    actions = rng.integers(0, 5, size=16)
    targets = rng.normal(size=16)
    _, grads = td_loss_and_grads(net, states, actions, targets)
    step = 1e-6
    for k, p in enumerate(net.parameters()):
        idx = tuple(int(rng.integers(s)) for s in p.shape)
        old = p[idx]
        p[idx] = old + step
        up, _ = td_loss_and_grads(net, states, actions, targets)
        p[idx] = old - step
        down, _ = td_loss_and_grads(net, states, actions, targets)
        p[idx] = old
        numeric = (up - down) / (2 * step)
        assert abs(numeric - grads[k][idx]) <= 1e-4 * max(abs(numeric) + abs(grads[k][idx]), 1e-8)


def test_checkpoint_round_trip_bit_exact(tmp_path):
    for dtype in ("float32", "float64"):
        net = DuelingNet(rng=np.random.default_rng(8), dtype=dtype)
        path = tmp_path / f"net_{dtype}.npz"
        save_checkpoint(net, path)
        back = load_checkpoint(path)
        assert back.dtype == net.dtype
        for a, b in zip(net.parameters(), back.parameters()):
            assert a.tobytes() == b.tobytes()


# --- action selection -----------------------------------------------------

def test_greedy_and_masked_selection():
    rng = np.random.default_rng(0)
    assert select_action([1, 0, 0, 0, 0], 0.0, rng) is Action.RADIUS_UP
    assert select_action([0, 0, 0, 0, 0], 0.0, rng) is Action.RADIUS_UP
    mask = np.array([False, True, True, True, True])
    assert select_action([9, 1, 0, 0, 0], 0.0, rng, mask) is Action.RADIUS_DOWN


def test_fully_random_selection_uniform_over_legal():
    rng = np.random.default_rng(1)
    mask = np.array([True, False, True, True, True])
    counts = np.bincount([select_action(np.zeros(5), 1.0, rng, mask) for _ in range(20_000)], minlength=5)
    assert counts[1] == 0
    assert stats.chisquare(counts[mask]).pvalue > 1e-3


def test_epsilon_decay():
    assert decay_epsilon(1.0) == 0.99995
    eps = 1.0
    seq = []
    for _ in range(125_000):
        eps = decay_epsilon(eps)
        seq.append(eps)
    assert eps == pytest.approx(0.00193, abs=1e-5)
    assert all(b <= a for a, b in zip(seq, seq[1:]))
    for _ in range(100_000):
        eps = decay_epsilon(eps)
    assert eps == 0.001


# --- replay and training --------------------------------------------------

def test_replay_fifo_and_capacity():
    buf = ReplayBuffer(5000, state_size=4)
    for k in range(6200):
        buf.push(np.full(4, k), k % 5, float(k), np.full(4, k + 1))
    assert len(buf) == 5000
    assert buf.tags.min() == 1200 and buf.tags.max() == 6199
    s, a, r, s2 = buf.sample(1000, np.random.default_rng(0))
    assert len(set(r.tolist())) == 1000
    assert np.all(s[:, 0] == r) and np.all(s2[:, 0] == r + 1)


def small_cfg(**kw):
    base = dict(batch_size=32, buffer_size=64, hidden_units=16, net_dtype="float64")
    base.update(kw)
    return CFG.with_(**base)


def test_train_step_noop_on_cold_buffer():
    cfg = small_cfg()
    rng = np.random.default_rng(0)
    agent = DQNAgent(cfg, rng)
    for _ in range(31):
        agent.remember(rng.normal(size=64), 0, 1.0, rng.normal(size=64))
    before = [p.copy() for p in agent.net.parameters()]
    assert train_step(agent.net, agent.target, agent.buffer, agent.optimizer, rng, cfg) is None
    assert all(np.array_equal(a, b) for a, b in zip(before, agent.net.parameters()))


def test_regression_limit_with_zero_discount():
    cfg = small_cfg(discount=0.0, learning_rate=1e-3)
    rng = np.random.default_rng(1)
    agent = DQNAgent(cfg, rng)
    s = rng.normal(size=64)
    for _ in range(64):
        agent.remember(s, 2, 0.7, s)
    losses = [train_step(agent.net, agent.target, agent.buffer, agent.optimizer, rng, cfg) for _ in range(800)]
    assert losses[-1] < 1e-6 < losses[0]
    assert agent.net.forward(s)[2] == pytest.approx(0.7, abs=1e-3)


def test_sgd_step_follows_negative_gradient():
    cfg = small_cfg(optimizer="sgd", learning_rate=1e-2)
    rng = np.random.default_rng(2)
    net = DuelingNet(n_in=64, hidden=16, rng=rng, dtype="float64")
    states = rng.normal(size=(8, 64))
    actions = rng.integers(0, 5, 8)
    targets = rng.normal(size=8)
    before = [p.copy() for p in net.parameters()]
    loss, grads = td_loss_and_grads(net, states, actions, targets)
    make_optimizer("sgd", net.parameters(), cfg.learning_rate).step(grads)
    for b, p, g in zip(before, net.parameters(), grads):
        assert np.allclose(p, b - 1e-2 * g)
    assert td_loss_and_grads(net, states, actions, targets)[0] < loss


def test_target_network_hard_updates():
    cfg = small_cfg(target_update=5)
    rng = np.random.default_rng(3)
    agent = DQNAgent(cfg, rng)
    for _ in range(64):
        agent.remember(rng.normal(size=64), int(rng.integers(5)), float(rng.normal()), rng.normal(size=64))
    x = rng.normal(size=(10, 64))
    frozen = agent.target.forward(x)
    for _ in range(4):
        agent.end_step(rng)
    assert np.array_equal(agent.target.forward(x), frozen)
    assert not np.allclose(agent.net.forward(x), frozen)
    agent.end_step(rng)
    assert agent.train_steps == 5
    assert np.array_equal(agent.target.forward(x), agent.net.forward(x))


def test_update_target_copies_everything():
    a = DuelingNet(rng=np.random.default_rng(4))
    b = DuelingNet(rng=np.random.default_rng(5))
    update_target(a, b)
    x = np.random.default_rng(6).normal(size=(5, 64))
    assert np.array_equal(a.forward(x), b.forward(x))


def test_double_q_targets_use_online_argmax():
    from uavorbit.agent import td_targets
    rng = np.random.default_rng(7)
    online = DuelingNet(rng=rng, dtype="float64")
    target = DuelingNet(rng=rng, dtype="float64")
    nxt = rng.normal(size=(6, 64))
    r = rng.normal(size=6)
    plain = td_targets(target, r, nxt, 0.1)
    assert np.allclose(plain, r + 0.1 * target.forward(nxt).max(axis=1))
    double = td_targets(target, r, nxt, 0.1, online_net=online)
    pick = online.forward(nxt).argmax(axis=1)
    assert np.allclose(double, r + 0.1 * target.forward(nxt)[np.arange(6), pick])


def test_greedy_agent_deterministic():
    cfg = CFG.with_(epsilon_start=0.0, epsilon_min=0.0)
    agent = DQNAgent(cfg, np.random.default_rng(9))
    s = np.random.default_rng(10).normal(size=64)
    legal = np.ones(5, dtype=bool)
    picks = {agent.act(s, legal, np.random.default_rng(k)) for k in range(20)}
    assert len(picks) == 1
