"""Per-UAV dueling deep Q-network agent, written directly in numpy.

Observation layout (16 features, all roughly in [-1, 1]):

    0      radius / r_max
    1      height / h_max
    2      own EE change since the last step, divided by a running |max|
    3      previous own action index / 4
    4..9   horizontal distance of each neighbour UAV to our center-point,
           divided by the area diagonal; -1 for an empty neighbour slot
    10..15 action index / 4 already chosen this step by each neighbour;
           -1 when the neighbour has not chosen yet or the slot is empty

Four consecutive observations are concatenated (oldest first) before they
enter the network.
"""
from __future__ import annotations

import math
from collections import deque
from pathlib import Path

import numpy as np

from .config import ScenarioConfig
from .environment import N_NEIGHBORS
from .policies import N_ACTIONS, Action

OBS_SIZE = 4 + 2 * N_NEIGHBORS
STACK_DEPTH = 4
STACK_SIZE = OBS_SIZE * STACK_DEPTH
NOT_CHOSEN = -1.0
PAD = -1.0
CHECKPOINT_VERSION = 1


def encode_action(action: int) -> float:
    return float(action) / (N_ACTIONS - 1)


def build_observation(radius: float, height: float, ee_delta: float, prev_action: int,
                      neighbor_dists, neighbor_actions, cfg: ScenarioConfig,
                      diagonal: float) -> np.ndarray:
    """Assemble one normalised observation.

    ``ee_delta`` must already be scaled.  ``neighbor_actions`` holds an action
    index per neighbour, or ``None`` for neighbours that have not decided yet.
    """
    if len(neighbor_dists) > N_NEIGHBORS or len(neighbor_dists) != len(neighbor_actions):
        raise ValueError("neighbour features must have matching length <= 6")
    obs = np.full(OBS_SIZE, PAD)
    obs[0] = radius / cfg.r_max
    obs[1] = height / cfg.h_max
    obs[2] = ee_delta
    obs[3] = encode_action(prev_action)
    for slot, (dist, act) in enumerate(zip(neighbor_dists, neighbor_actions)):
        obs[4 + slot] = dist / diagonal
        obs[4 + N_NEIGHBORS + slot] = NOT_CHOSEN if act is None else encode_action(act)
    return obs


class AbsMaxScaler:
    """Divides by the largest magnitude seen so far, so outputs stay in [-1, 1]."""

    def __init__(self):
        self.absmax = 0.0

    def __call__(self, x: float) -> float:
        self.absmax = max(self.absmax, abs(x))
        return x / self.absmax if self.absmax > 0 else 0.0


class StateStack:
    def __init__(self, depth: int = STACK_DEPTH):
        self.frames: deque[np.ndarray] = deque(maxlen=depth)

    def reset(self, obs: np.ndarray) -> None:
        self.frames.clear()
        for _ in range(self.frames.maxlen):
            self.frames.append(obs)

    def push(self, obs: np.ndarray) -> None:
        if not self.frames:
            self.reset(obs)
        else:
            self.frames.append(obs)

    def vector(self) -> np.ndarray:
        return np.concatenate(self.frames)


# ---------------------------------------------------------------------------
# network
# ---------------------------------------------------------------------------

def _dense_init(n_in: int, n_out: int, rng: np.random.Generator, dtype, scale: float = 1.0):
    w = rng.normal(0.0, scale * math.sqrt(2.0 / n_in), size=(n_in, n_out)).astype(dtype)
    return w, np.zeros(n_out, dtype=dtype)


class DuelingNet:
    """Dense trunk feeding separate state-value and action-advantage streams.

    Every layer is ReLU except the last layer of each stream; the two streams
    are merged as ``Q = V + A - mean(A)``.
    """

    def __init__(self, n_in: int = STACK_SIZE, n_actions: int = N_ACTIONS, hidden: int = 64,
                 trunk_layers: int = 4, stream_layers: int = 3,
                 rng: np.random.Generator | None = None, dtype="float32"):
        rng = np.random.default_rng() if rng is None else rng
        self.dtype = np.dtype(dtype)
        self.n_in = n_in
        self.n_actions = n_actions
        self.trunk = []
        width = n_in
        for _ in range(trunk_layers):
            self.trunk.append(_dense_init(width, hidden, rng, self.dtype))
            width = hidden
        self.value = self._stream(hidden, 1, stream_layers, rng)
        self.advantage = self._stream(hidden, n_actions, stream_layers, rng)

    def _stream(self, n_in, n_out, n_layers, rng):
        layers = [_dense_init(n_in, n_in, rng, self.dtype) for _ in range(n_layers - 1)]
        layers.append(_dense_init(n_in, n_out, rng, self.dtype, scale=0.1))
        return layers

    def layers(self):
        return [*self.trunk, *self.value, *self.advantage]

    def parameters(self) -> list[np.ndarray]:
        return [p for layer in self.layers() for p in layer]

    def set_parameters(self, params) -> None:
        params = list(params)
        mine = self.parameters()
        if len(params) != len(mine):
            raise ValueError(f"expected {len(mine)} arrays, got {len(params)}")
        for dst, src in zip(mine, params):
            if dst.shape != src.shape:
                raise ValueError(f"shape mismatch {dst.shape} vs {src.shape}")
            dst[...] = src

    def copy_from(self, other: DuelingNet) -> None:
        self.set_parameters(other.parameters())

    def clone(self) -> DuelingNet:
        twin = object.__new__(DuelingNet)
        twin.dtype, twin.n_in, twin.n_actions = self.dtype, self.n_in, self.n_actions
        twin.trunk = [(w.copy(), b.copy()) for w, b in self.trunk]
        twin.value = [(w.copy(), b.copy()) for w, b in self.value]
        twin.advantage = [(w.copy(), b.copy()) for w, b in self.advantage]
        return twin

    @staticmethod
    def _run(layers, h, cache, relu_last):
        for k, (w, b) in enumerate(layers):
            if cache is not None:
                cache.append(h)
            h = h @ w + b
            if k < len(layers) - 1 or relu_last:
                h = np.maximum(h, 0.0)
        return h

    def forward(self, x, cache: list | None = None) -> np.ndarray:
        """Q-values for a batch ``(B, n_in)`` (or a single vector)."""
        x = np.asarray(x, dtype=self.dtype)
        single = x.ndim == 1
        x = x.reshape(-1, self.n_in)
        trunk_cache = value_cache = adv_cache = None
        if cache is not None:
            trunk_cache, value_cache, adv_cache = [], [], []
        feat = self._run(self.trunk, x, trunk_cache, relu_last=True)
        v = self._run(self.value, feat, value_cache, relu_last=False)
        a = self._run(self.advantage, feat, adv_cache, relu_last=False)
        q = v + a - a.mean(axis=1, keepdims=True)
        if not np.all(np.isfinite(q)):
            raise FloatingPointError(
                f"non-finite Q-values: |feat|max={np.abs(feat).max():.3g} "
                f"V range=({v.min():.3g}, {v.max():.3g}) A range=({a.min():.3g}, {a.max():.3g})")
        if cache is not None:
            cache.extend([trunk_cache, value_cache, adv_cache, feat])
        return q[0] if single else q

    @staticmethod
    def _back(layers, layer_inputs, grad):
        grads = [None] * len(layers)
        for k in range(len(layers) - 1, -1, -1):
            w, _ = layers[k]
            h_in = layer_inputs[k]
            grads[k] = (h_in.T @ grad, grad.sum(axis=0))
            grad = grad @ w.T
            # layer_inputs[k] is the ReLU output of layer k-1 (or the raw input)
            if k > 0:
                grad = grad * (h_in > 0)
        return grads, grad

    def backward(self, cache: list, dq: np.ndarray) -> list[np.ndarray]:
        """Gradients of ``sum(dq * Q)`` w.r.t. every parameter, in ``parameters()`` order."""
        trunk_cache, value_cache, adv_cache, feat = cache
        dq = np.asarray(dq, dtype=self.dtype).reshape(-1, self.n_actions)
        dv = dq.sum(axis=1, keepdims=True)
        da = dq - dq.mean(axis=1, keepdims=True)
        g_value, dfeat_v = self._back(self.value, value_cache, dv)
        g_adv, dfeat_a = self._back(self.advantage, adv_cache, da)
        dfeat = (dfeat_v + dfeat_a) * (feat > 0)
        g_trunk, _ = self._back(self.trunk, trunk_cache, dfeat)
        return [g for layer in (*g_trunk, *g_value, *g_adv) for g in layer]

    def value_advantage(self, x):
        """Separate (V, A) stream outputs, mostly for inspection and tests."""
        x = np.asarray(x, dtype=self.dtype).reshape(-1, self.n_in)
        feat = self._run(self.trunk, x, None, relu_last=True)
        return self._run(self.value, feat, None, False), self._run(self.advantage, feat, None, False)


def save_checkpoint(net: DuelingNet, path: str | Path) -> None:
    """Write an uncompressed ``.npz``: version, dtype, layer shapes, arrays p000...

    Arrays are stored row-major in ``parameters()`` order (W then b per layer,
    trunk, value stream, advantage stream).
    """
    params = net.parameters()
    payload = {f"p{k:03d}": p for k, p in enumerate(params)}
    payload["format_version"] = np.array(CHECKPOINT_VERSION)
    payload["dtype"] = np.array(net.dtype.str)
    payload["architecture"] = np.array([net.n_in, net.n_actions, len(net.trunk),
                                        len(net.value), net.trunk[0][0].shape[1]])
    with open(path, "wb") as fh:
        np.savez(fh, **payload)


def load_checkpoint(path: str | Path) -> DuelingNet:
    with np.load(path) as data:
        version = int(data["format_version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        n_in, n_actions, trunk_layers, stream_layers, hidden = (int(x) for x in data["architecture"])
        net = DuelingNet(n_in, n_actions, hidden, trunk_layers, stream_layers,
                         rng=np.random.default_rng(0), dtype=str(data["dtype"]))
        n_params = 2 * (trunk_layers + 2 * stream_layers)
        net.set_parameters(data[f"p{k:03d}"] for k in range(n_params))
    return net


# ---------------------------------------------------------------------------
# optimisers
# ---------------------------------------------------------------------------

class SGD:
    def __init__(self, params, lr: float):
        self.params, self.lr = params, lr

    def step(self, grads) -> None:
        for p, g in zip(self.params, grads):
            p -= self.lr * g


class Momentum:
    def __init__(self, params, lr: float, beta: float = 0.9):
        self.params, self.lr, self.beta = params, lr, beta
        self.vel = [np.zeros_like(p) for p in params]

    def step(self, grads) -> None:
        for p, g, v in zip(self.params, grads, self.vel):
            v *= self.beta
            v += g
            p -= self.lr * v


class Adam:
    def __init__(self, params, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-7):
        self.params, self.lr = params, lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        lr_t = self.lr * math.sqrt(1 - b2**self.t) / (1 - b1**self.t)
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p -= lr_t * m / (np.sqrt(v) + self.eps)


def make_optimizer(kind: str, params, lr: float):
    return {"sgd": SGD, "momentum": Momentum, "adam": Adam}[kind](params, lr)


# ---------------------------------------------------------------------------
# replay and action selection
# ---------------------------------------------------------------------------

class ReplayBuffer:
    """Fixed-capacity FIFO of (stack, action, reward, next_stack) transitions."""

    def __init__(self, capacity: int, state_size: int = STACK_SIZE, dtype="float32"):
        self.capacity = capacity
        self.states = np.zeros((capacity, state_size), dtype=dtype)
        self.next_states = np.zeros((capacity, state_size), dtype=dtype)
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity, dtype=np.float64)
        self.tags = np.full(capacity, -1, dtype=np.int64)
        self.pushed = 0

    def __len__(self) -> int:
        return min(self.pushed, self.capacity)

    def push(self, state, action: int, reward: float, next_state) -> None:
        slot = self.pushed % self.capacity
        self.states[slot] = state
        self.actions[slot] = action
        self.rewards[slot] = reward
        self.next_states[slot] = next_state
        self.tags[slot] = self.pushed
        self.pushed += 1

    def sample(self, batch_size: int, rng: np.random.Generator):
        idx = rng.choice(len(self), size=batch_size, replace=False)
        return self.states[idx], self.actions[idx], self.rewards[idx], self.next_states[idx]


def select_action(q, epsilon: float, rng: np.random.Generator, legal=None) -> Action:
    """Epsilon-greedy over the legal actions; greedy ties go to the lowest index."""
    q = np.asarray(q, dtype=float)
    legal = np.ones(len(q), dtype=bool) if legal is None else np.asarray(legal, dtype=bool)
    if not legal.any():
        raise ValueError("no legal action")
    if rng.random() < epsilon:
        choices = np.flatnonzero(legal)
        return Action(int(choices[rng.integers(len(choices))]))
    return Action(int(np.argmax(np.where(legal, q, -np.inf))))


def decay_epsilon(epsilon: float, decay: float = 0.99995, floor: float = 0.001) -> float:
    return max(floor, epsilon * decay)


def td_targets(target_net: DuelingNet, rewards, next_states, discount: float,
               online_net: DuelingNet | None = None) -> np.ndarray:
    """r + discount * max_a Q_target(s', a); with ``online_net`` the argmax is
    taken by the online net (double Q-learning)."""
    q_next = target_net.forward(next_states)
    if online_net is None:
        best = q_next.max(axis=1)
    else:
        pick = online_net.forward(next_states).argmax(axis=1)
        best = q_next[np.arange(len(pick)), pick]
    return np.asarray(rewards, dtype=float) + discount * best.astype(float)


def td_loss_and_grads(net: DuelingNet, states, actions, targets):
    """Mean squared TD error and its parameter gradients."""
    cache: list = []
    q = net.forward(states, cache)
    rows = np.arange(len(actions))
    err = q[rows, actions].astype(float) - targets
    loss = float(np.mean(err**2))
    if not math.isfinite(loss):
        raise FloatingPointError(f"non-finite TD loss (max |err| = {np.abs(err).max():.3g})")
    dq = np.zeros_like(q)
    dq[rows, actions] = 2.0 * err / len(actions)
    return loss, net.backward(cache, dq)


def train_step(net: DuelingNet, target_net: DuelingNet, buffer: ReplayBuffer, optimizer,
               rng: np.random.Generator, cfg: ScenarioConfig) -> float | None:
    """One minibatch update of the online net; ``None`` while the buffer is cold."""
    if len(buffer) < cfg.batch_size:
        return None
    states, actions, rewards, next_states = buffer.sample(cfg.batch_size, rng)
    targets = td_targets(target_net, rewards, next_states, cfg.discount,
                         online_net=net if cfg.double_q else None)
    loss, grads = td_loss_and_grads(net, states, actions, targets)
    optimizer.step(grads)
    return loss


def update_target(net: DuelingNet, target_net: DuelingNet) -> None:
    target_net.copy_from(net)


class DQNAgent:
    """Online net, frozen target, replay memory and exploration state of one UAV."""

    def __init__(self, cfg: ScenarioConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.net = DuelingNet(STACK_SIZE, N_ACTIONS, cfg.hidden_units, rng=rng, dtype=cfg.net_dtype)
        self.target = self.net.clone()
        self.buffer = ReplayBuffer(cfg.buffer_size, STACK_SIZE, dtype=cfg.net_dtype)
        self.optimizer = make_optimizer(cfg.optimizer, self.net.parameters(), cfg.learning_rate)
        self.epsilon = cfg.epsilon_start
        self.ee_scaler = AbsMaxScaler()
        self.train_steps = 0
        self.env_steps = 0
        self.last_loss: float | None = None

    def act(self, stack: np.ndarray, legal, rng: np.random.Generator) -> Action:
        # a fully random step skips the forward pass but consumes the same draws
        if rng.random() < self.epsilon:
            choices = np.flatnonzero(legal)
            return Action(int(choices[rng.integers(len(choices))]))
        return select_action(self.net.forward(stack), 0.0, rng, legal)

    def remember(self, state, action: int, reward: float, next_state) -> None:
        self.buffer.push(state, action, reward, next_state)

    def end_step(self, rng: np.random.Generator) -> float | None:
        """Train on the replay memory (per cadence), sync target, decay epsilon."""
        self.env_steps += 1
        loss = None
        if self.env_steps % self.cfg.train_every == 0:
            loss = train_step(self.net, self.target, self.buffer, self.optimizer, rng, self.cfg)
            if loss is not None:
                self.train_steps += 1
                self.last_loss = loss
                if self.train_steps % self.cfg.target_update == 0:
                    update_target(self.net, self.target)
        self.epsilon = decay_epsilon(self.epsilon, self.cfg.epsilon_decay, self.cfg.epsilon_min)
        return loss
