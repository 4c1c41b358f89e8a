"""Episode engine.

Each timestep the UAVs decide one after another (ascending index unless the
order is randomised), every decision seeing the actions its neighbours have
already picked.  All actions are then applied at once, the UAVs move along
their orbits, and throughput and energy are measured for the new positions.

Before the first decision the initial deployment (r_min, h_init) is measured
once; that snapshot is the reference for the first reward and EE change but
is not counted in the episode totals, so an episode has exactly
``steps_per_episode`` measured steps.
"""
from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field, replace

import numpy as np

from .agent import DQNAgent, StateStack, build_observation
from .config import ScenarioConfig
from .energy import EnergyParams, fixed_wing_energy, hover_energy, network_ee, optimal_velocity
from .environment import UavState, World, advance_orbit, build_world, init_uavs
from .policies import (
    POLICY_KINDS, Action, EnergySavingPolicy, RandomWalkPolicy, apply_action, hover_policy,
    legal_mask, min_radius_policy,
)
from .radio import per_uav_throughput

LEARNING_KIND = "ddqn"
ALL_KINDS = (LEARNING_KIND, *POLICY_KINDS)


def derive_rng(seed: int, label: str, *extra: int) -> np.random.Generator:
    """Independent stream per (seed, label, extra...) so components don't perturb each other."""
    return np.random.default_rng([seed, zlib.crc32(label.encode()), *extra])


@dataclass(frozen=True)
class Snapshot:
    """Per-UAV throughput (bits) and energy (J) measured over one timestep."""

    throughput: np.ndarray
    energy: np.ndarray

    def uav_ee(self) -> np.ndarray:
        return self.throughput / self.energy

    def group_ee(self, members) -> float:
        members = list(members)
        return float(self.throughput[members].sum() / self.energy[members].sum())


@dataclass
class EpisodeMetrics:
    throughput: np.ndarray   # (T, U) bits
    energy: np.ndarray       # (T, U) J
    radius: np.ndarray       # (T, U) m, after each step's actions
    height: np.ndarray       # (T, U) m
    actions: np.ndarray      # (T, U) action indices
    epsilon: float | None = None

    @property
    def total_throughput(self) -> float:
        return float(self.throughput.sum())

    @property
    def total_energy(self) -> float:
        return float(self.energy.sum())

    @property
    def ee(self) -> float:
        return network_ee(self.throughput, self.energy)


def _ratio(a: float, b: float) -> float:
    return a / b if b != 0 else math.nan


def normalize(metrics: EpisodeMetrics, baseline: EpisodeMetrics) -> dict[str, float]:
    """EE, throughput and energy as ratios of the baseline run on the same world."""
    return {
        "norm_ee": _ratio(metrics.ee, baseline.ee),
        "norm_throughput": _ratio(metrics.total_throughput, baseline.total_throughput),
        "norm_energy": _ratio(metrics.total_energy, baseline.total_energy),
    }


def compute_reward(i: int, neighbors, before: Snapshot, after: Snapshot) -> float:
    """Change in the joint EE of UAV ``i`` and its neighbours between two steps."""
    group = [i, *neighbors]
    if before.energy[group].sum() <= 0 or after.energy[group].sum() <= 0:
        raise ZeroDivisionError("neighbourhood energy must be positive")
    return after.group_ee(group) - before.group_ee(group)


# ---------------------------------------------------------------------------
# fleet kinematics and measurement
# ---------------------------------------------------------------------------

def positions_of(uavs: list[UavState]) -> np.ndarray:
    return np.array([u.position for u in uavs]).reshape(-1, 2)


def measure(world: World, uavs: list[UavState], cfg: ScenarioConfig, params: EnergyParams,
            hover: bool = False) -> Snapshot:
    heights = np.array([u.height for u in uavs])
    bits = per_uav_throughput(world.users, positions_of(uavs), heights, cfg)
    if hover:
        energy = np.full(len(uavs), hover_energy(cfg.timestep, params))
    else:
        energy = fixed_wing_energy(np.array([u.radius for u in uavs]),
                                   np.array([u.velocity for u in uavs]), cfg.timestep, params)
    return Snapshot(throughput=bits, energy=np.asarray(energy, dtype=float).reshape(-1))


def apply_actions(uavs: list[UavState], actions, cfg: ScenarioConfig, params: EnergyParams,
                  hover: bool = False) -> list[UavState]:
    """Apply every action simultaneously, re-pick v*(r) and advance the orbits."""
    out = []
    for u, a in zip(uavs, actions):
        if hover:
            r, h = 0.0, u.height
            moved = replace(u, radius=0.0, velocity=0.0)
        else:
            r, h = apply_action(u.radius, u.height, Action(a), cfg)
            moved = replace(u, radius=r, height=h, velocity=optimal_velocity(r, params))
            moved = advance_orbit(moved, cfg.timestep)
        check_bounds(moved, cfg, hover)
        out.append(moved)
    return out


def check_bounds(u: UavState, cfg: ScenarioConfig, hover: bool = False) -> None:
    ok_h = cfg.h_min <= u.height <= cfg.h_max
    ok_r = hover or cfg.r_min <= u.radius <= cfg.r_max
    if not (ok_h and ok_r):
        raise RuntimeError(f"UAV {u.index} left the orbit bounds: r={u.radius}, h={u.height}")


# ---------------------------------------------------------------------------
# controllers: who picks each UAV's action
# ---------------------------------------------------------------------------

class HeuristicController:
    """Wraps a stateless ``policy(state, rng)`` callable."""

    def __init__(self, policy, rng: np.random.Generator):
        self.policy = policy
        self.rng = rng

    def decide(self, i, uavs, chosen, ctx) -> Action:
        return self.policy(uavs[i], self.rng)

    def after_step(self, ctx, actions, before: Snapshot, after: Snapshot) -> None:
        pass

    def finish(self, ctx) -> None:
        pass


class LearningFleet:
    """Persistent DQN agents of one fleet; survives across episodes."""

    def __init__(self, n_uavs: int, cfg: ScenarioConfig, seed: int):
        self.cfg = cfg
        self.rng = derive_rng(seed, "agents", n_uavs)
        if cfg.shared_weights:
            shared = DQNAgent(cfg, self.rng)
            self.agents = [shared] * n_uavs
        else:
            self.agents = [DQNAgent(cfg, self.rng) for _ in range(n_uavs)]

    def unique_agents(self) -> list[DQNAgent]:
        seen, out = set(), []
        for a in self.agents:
            if id(a) not in seen:
                seen.add(id(a))
                out.append(a)
        return out

    @property
    def epsilon(self) -> float:
        return self.agents[0].epsilon


class LearningController:
    """Observation building, exploration, replay storage and training for one episode."""

    def __init__(self, fleet: LearningFleet, world: World, cfg: ScenarioConfig):
        self.fleet = fleet
        self.world = world
        self.cfg = cfg
        n = world.n_uavs
        self.stacks = [StateStack() for _ in range(n)]
        self.prev_action = [int(Action.NOOP)] * n
        self.ee_delta = np.zeros(n)
        self.pending: list[tuple | None] = [None] * n
        self.reward_ref: np.ndarray | None = None

    def observation(self, i, uavs, chosen) -> np.ndarray:
        center = np.asarray(uavs[i].center)
        nbrs = self.world.neighbors[i]
        dists = [math.dist(uavs[j].position, center) for j in nbrs]
        acts = [chosen.get(j) for j in nbrs]
        agent = self.fleet.agents[i]
        return build_observation(uavs[i].radius, uavs[i].height, agent.ee_scaler(self.ee_delta[i]),
                                 self.prev_action[i], dists, acts, self.cfg, self.world.diagonal)

    def _stack_with(self, i, obs) -> np.ndarray:
        self.stacks[i].push(obs)
        return self.stacks[i].vector()

    def decide(self, i, uavs, chosen, ctx) -> Action:
        state = self._stack_with(i, self.observation(i, uavs, chosen))
        agent = self.fleet.agents[i]
        if self.pending[i] is not None:
            s, a, r = self.pending[i]
            agent.remember(s, a, r, state)
            self.pending[i] = None
        action = agent.act(state, legal_mask(uavs[i].radius, uavs[i].height, self.cfg), self.fleet.rng)
        self.pending[i] = (state, int(action))
        return action

    def after_step(self, ctx, actions, before: Snapshot, after: Snapshot) -> None:
        nbrs = self.world.neighbors
        n = self.world.n_uavs
        if self.reward_ref is None:
            self.reward_ref = np.array([ctx.initial.group_ee([i, *nbrs[i]]) for i in range(n)])
        for i in range(n):
            raw = compute_reward(i, nbrs[i], before, after)
            ref = self.reward_ref[i]
            reward = self.cfg.reward_scale * raw / ref if ref > 0 else 0.0
            s, a = self.pending[i]
            self.pending[i] = (s, a, reward)
            self.prev_action[i] = int(actions[i])
        self.ee_delta = after.uav_ee() - before.uav_ee()
        for agent in self.fleet.unique_agents():
            agent.end_step(self.fleet.rng)

    def finish(self, ctx) -> None:
        """Store the last transitions, using the post-episode observation as s'."""
        for i in range(self.world.n_uavs):
            if self.pending[i] is not None and len(self.pending[i]) == 3:
                s, a, r = self.pending[i]
                nxt = self._stack_with(i, self.observation(i, ctx.uavs, {}))
                self.fleet.agents[i].remember(s, a, r, nxt)
            self.pending[i] = None


@dataclass
class _EpisodeContext:
    uavs: list[UavState]
    initial: Snapshot
    order_rng: np.random.Generator
    history: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# timestep / episode / experiment
# ---------------------------------------------------------------------------

def decision_order(n: int, cfg: ScenarioConfig, rng: np.random.Generator) -> list[int]:
    return list(rng.permutation(n)) if cfg.random_decision_order else list(range(n))


def run_timestep(world: World, uavs: list[UavState], controller, cfg: ScenarioConfig,
                 params: EnergyParams, order, hover: bool = False, ctx=None):
    """Sequential decisions, then simultaneous moves.  Returns (uavs', actions)."""
    chosen: dict[int, Action] = {}
    for i in order:
        chosen[i] = Action(controller.decide(i, uavs, chosen, ctx))
    actions = [chosen[i] for i in range(len(uavs))]
    return apply_actions(uavs, actions, cfg, params, hover), actions


def make_controller(kind: str, world: World, cfg: ScenarioConfig, rng: np.random.Generator,
                    fleet: LearningFleet | None = None):
    if kind == LEARNING_KIND:
        if fleet is None:
            raise ValueError("the learning policy needs a LearningFleet")
        return LearningController(fleet, world, cfg)
    if kind == "min-radius":
        return HeuristicController(min_radius_policy, rng)
    if kind == "hover":
        return HeuristicController(hover_policy, rng)
    if kind == "random-walk":
        return HeuristicController(RandomWalkPolicy(cfg), rng)
    if kind == "energy-saving":
        return HeuristicController(EnergySavingPolicy(world.centers, cfg), rng)
    raise ValueError(f"unknown policy kind {kind!r}; expected one of {ALL_KINDS}")


def world_for(n_uavs: int, cfg: ScenarioConfig, seed: int, episode: int) -> World:
    return build_world(n_uavs, cfg, derive_rng(seed, "world", n_uavs, episode))


def simulate(world: World, kind: str, cfg: ScenarioConfig, seed: int, episode: int,
             fleet: LearningFleet | None = None) -> EpisodeMetrics:
    """Run one episode of ``kind`` on a prepared world."""
    params = EnergyParams.from_config(cfg)
    hover = kind == "hover"
    policy_rng = derive_rng(seed, f"policy:{kind}", world.n_uavs, episode)
    controller = make_controller(kind, world, cfg, policy_rng, fleet)
    uavs = init_uavs(world.centers, cfg, phases=world.initial_phases)
    if hover:
        uavs = [replace(u, radius=0.0, velocity=0.0) for u in uavs]
    before = measure(world, uavs, cfg, params, hover)
    ctx = _EpisodeContext(uavs=uavs, initial=before, order_rng=derive_rng(seed, "order", episode))

    T, U = cfg.steps_per_episode, world.n_uavs
    rec = {k: np.empty((T, U)) for k in ("throughput", "energy", "radius", "height")}
    acts = np.empty((T, U), dtype=np.int64)
    order = decision_order(U, cfg, ctx.order_rng)
    for t in range(T):
        uavs, actions = run_timestep(world, uavs, controller, cfg, params, order, hover, ctx)
        ctx.uavs = uavs
        after = measure(world, uavs, cfg, params, hover)
        controller.after_step(ctx, actions, before, after)
        rec["throughput"][t] = after.throughput
        rec["energy"][t] = after.energy
        rec["radius"][t] = [u.radius for u in uavs]
        rec["height"][t] = [u.height for u in uavs]
        acts[t] = actions
        before = after
    controller.finish(ctx)
    return EpisodeMetrics(**rec, actions=acts, epsilon=fleet.epsilon if fleet else None)


def run_episode(cfg: ScenarioConfig, kind: str, n_uavs: int, seed: int, episode: int = 0,
                fleet: LearningFleet | None = None) -> EpisodeMetrics:
    """Fresh world for (seed, episode), then one episode of ``kind``."""
    return simulate(world_for(n_uavs, cfg, seed, episode), kind, cfg, seed, episode, fleet)


ROW_FIELDS = ("fleet_size", "episode", "policy", "seed", "total_throughput_bits",
              "total_energy_J", "ee_bits_per_J", "norm_ee", "norm_throughput", "norm_energy")


def episode_row(n_uavs, episode, kind, seed, metrics: EpisodeMetrics, baseline: EpisodeMetrics) -> dict:
    row = {
        "fleet_size": n_uavs, "episode": episode, "policy": kind, "seed": seed,
        "total_throughput_bits": metrics.total_throughput,
        "total_energy_J": metrics.total_energy,
        "ee_bits_per_J": metrics.ee,
    }
    row.update(normalize(metrics, baseline))
    return row


def run_experiment(cfg: ScenarioConfig, kind: str, fleet_sizes, seed: int,
                   episodes: int | None = None, progress=None, keep_metrics: bool = False,
                   fleets: dict | None = None):
    """Episode rows for every fleet size, each normalised by a min-radius run on the same world.

    Learning agents persist across the episodes of one fleet size; pass a dict
    as ``fleets`` to get them back keyed by fleet size.  With ``keep_metrics``
    the raw :class:`EpisodeMetrics` are returned too.
    """
    if kind not in ALL_KINDS:
        raise ValueError(f"unknown policy kind {kind!r}; expected one of {ALL_KINDS}")
    episodes = cfg.episodes if episodes is None else episodes
    rows, raw = [], []
    for n in fleet_sizes:
        fleet = LearningFleet(n, cfg, seed) if kind == LEARNING_KIND else None
        if fleets is not None and fleet is not None:
            fleets[n] = fleet
        for ep in range(episodes):
            world = world_for(n, cfg, seed, ep)
            metrics = simulate(world, kind, cfg, seed, ep, fleet)
            baseline = simulate(world, "min-radius", cfg, seed, ep)
            rows.append(episode_row(n, ep, kind, seed, metrics, baseline))
            if keep_metrics:
                raw.append(metrics)
            if progress is not None:
                progress(rows[-1], metrics)
    return (rows, raw) if keep_metrics else rows


def aggregate(rows, warmup_episodes: int) -> list[dict]:
    """Per-fleet-size means over the episodes after ``warmup_episodes``.

    If a run is shorter than the warm-up, all of its episodes are averaged.
    """
    out = []
    for n in sorted({r["fleet_size"] for r in rows}):
        group = [r for r in rows if r["fleet_size"] == n]
        window = [r for r in group if r["episode"] >= warmup_episodes] or group
        agg = {"fleet_size": n, "policy": group[0]["policy"], "seed": group[0]["seed"],
               "episodes": len(window)}
        for key in ROW_FIELDS[4:]:
            agg[key] = float(np.mean([r[key] for r in window]))
        out.append(agg)
    return out
