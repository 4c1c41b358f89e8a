"""Discrete trajectory actions and the four heuristic orbit policies.

A policy is any callable ``policy(state, rng) -> Action``.  The harness owns
clamping and the hover special case (radius and speed forced to zero).
"""
from __future__ import annotations

import math
from enum import IntEnum
from itertools import combinations

import numpy as np

from .config import ScenarioConfig
from .environment import UavState


class Action(IntEnum):
    RADIUS_UP = 0
    RADIUS_DOWN = 1
    HEIGHT_UP = 2
    HEIGHT_DOWN = 3
    NOOP = 4


N_ACTIONS = len(Action)

POLICY_KINDS = ("min-radius", "hover", "random-walk", "energy-saving")

_EPS = 1e-9


def legal_mask(radius: float, height: float, cfg: ScenarioConfig) -> np.ndarray:
    """Boolean mask over actions that keep (r, h) inside the orbit bounds."""
    mask = np.ones(N_ACTIONS, dtype=bool)
    mask[Action.RADIUS_UP] = radius + cfg.r_inc <= cfg.r_max + _EPS
    mask[Action.RADIUS_DOWN] = radius - cfg.r_inc >= cfg.r_min - _EPS
    mask[Action.HEIGHT_UP] = height + cfg.h_inc <= cfg.h_max + _EPS
    mask[Action.HEIGHT_DOWN] = height - cfg.h_inc >= cfg.h_min - _EPS
    return mask


def apply_action(radius: float, height: float, action: Action,
                 cfg: ScenarioConfig) -> tuple[float, float]:
    """New (r, h) after ``action``, clamped to the bounds."""
    if action == Action.RADIUS_UP:
        radius += cfg.r_inc
    elif action == Action.RADIUS_DOWN:
        radius -= cfg.r_inc
    elif action == Action.HEIGHT_UP:
        height += cfg.h_inc
    elif action == Action.HEIGHT_DOWN:
        height -= cfg.h_inc
    radius = min(max(radius, cfg.r_min), cfg.r_max)
    height = min(max(height, cfg.h_min), cfg.h_max)
    return radius, height


def min_radius_policy(state: UavState, rng=None) -> Action:
    return Action.NOOP


def hover_policy(state: UavState, rng=None) -> Action:
    return Action.NOOP


class RandomWalkPolicy:
    """Uniform choice among the actions that keep (r, h) in bounds."""

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg

    def __call__(self, state: UavState, rng: np.random.Generator) -> Action:
        legal = np.flatnonzero(legal_mask(state.radius, state.height, self.cfg))
        return Action(int(legal[rng.integers(len(legal))]))


def energy_saving_radius(centers, cfg: ScenarioConfig) -> float:
    """Half the smallest inter-center distance, clamped to [r_min, r_max].

    A lone UAV has no pair distance and flies at r_max.
    """
    centers = np.asarray(centers, dtype=float).reshape(-1, 2)
    if len(centers) < 2:
        return cfg.r_max
    gap = min(math.dist(a, b) for a, b in combinations(centers.tolist(), 2))
    return min(max(0.5 * gap, cfg.r_min), cfg.r_max)


class EnergySavingPolicy:
    """Widen the orbit one increment per step until within r_inc of the target."""

    def __init__(self, centers, cfg: ScenarioConfig):
        self.cfg = cfg
        self.target = energy_saving_radius(centers, cfg)

    def __call__(self, state: UavState, rng=None) -> Action:
        if self.target - state.radius >= self.cfg.r_inc - _EPS:
            return Action.RADIUS_UP
        return Action.NOOP
