"""Simulation world: ground users, service center-points and UAV orbits."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .config import ScenarioConfig
from .energy import EnergyParams, optimal_velocity

N_NEIGHBORS = 6


@dataclass(frozen=True)
class UavState:
    index: int
    center: tuple[float, float]
    radius: float
    height: float
    velocity: float
    phase: float

    @property
    def position(self) -> tuple[float, float]:
        """Horizontal position on the orbit circle."""
        return (self.center[0] + self.radius * math.cos(self.phase),
                self.center[1] + self.radius * math.sin(self.phase))


@dataclass(frozen=True)
class World:
    """Everything that stays fixed for an episode."""

    users: np.ndarray          # (N, 2) metres
    centers: np.ndarray        # (U, 2) metres
    area_side: float
    neighbors: tuple[tuple[int, ...], ...]
    initial_phases: np.ndarray  # (U,) radians

    @property
    def n_uavs(self) -> int:
        return len(self.centers)

    @property
    def diagonal(self) -> float:
        return math.sqrt(2.0) * self.area_side


def generate_users(area_side_m: float, density_per_km2: float, rng: np.random.Generator) -> np.ndarray:
    """Homogeneous PPP realisation in the square ``[0, side]^2``."""
    if area_side_m <= 0:
        raise ValueError("area side must be positive")
    if density_per_km2 < 0:
        raise ValueError("density must be non-negative")
    mean = density_per_km2 * area_side_m**2 * 1e-6
    count = rng.poisson(mean)
    return rng.uniform(0.0, area_side_m, size=(count, 2))


def area_side_for_fleet(n_uavs: int, uav_density_per_km2: float) -> float:
    """Square side in metres that keeps ``n_uavs`` at the given density."""
    if n_uavs < 1:
        raise ValueError("need at least one UAV")
    return math.sqrt(n_uavs / (uav_density_per_km2 * 1e-6))


def _sq_dists(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - centers[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = np.empty((k, 2))
    centers[0] = points[rng.integers(len(points))]
    closest = _sq_dists(points, centers[:1])[:, 0]
    for c in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = rng.choice(len(points), p=closest / total)
        else:
            idx = rng.integers(len(points))
        centers[c] = points[idx]
        closest = np.minimum(closest, _sq_dists(points, centers[c:c + 1])[:, 0])
    return centers


def kmeans_objective(points: np.ndarray, centers: np.ndarray) -> float:
    return float(_sq_dists(points, centers).min(axis=1).sum())


def kmeans_centers(users: np.ndarray, k: int, rng: np.random.Generator,
                   max_iter: int = 100, history: list[float] | None = None) -> np.ndarray:
    """Lloyd's algorithm with k-means++ seeding.

    An emptied cluster is re-seeded at the user farthest from its nearest
    centroid.  If ``history`` is given, the objective after each assignment
    step is appended to it.
    """
    points = np.asarray(users, dtype=float).reshape(-1, 2)
    if k < 1:
        raise ValueError("need at least one cluster")
    if len(points) == 0:
        raise ValueError("k-means needs at least one user")
    centers = _kmeans_pp_init(points, k, rng)
    labels = None
    for _ in range(max_iter):
        d2 = _sq_dists(points, centers)
        new_labels = d2.argmin(axis=1)
        if history is not None:
            history.append(float(d2[np.arange(len(points)), new_labels].sum()))
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for c in range(k):
            members = points[labels == c]
            if len(members):
                centers[c] = members.mean(axis=0)
            else:
                far = _sq_dists(points, centers).min(axis=1).argmax()
                centers[c] = points[far]
                labels = labels.copy()
                labels[far] = c
    return centers


def init_uavs(centers, cfg: ScenarioConfig, rng: np.random.Generator | None = None,
              phases=None) -> list[UavState]:
    """UAVs start at the minimum radius and ``h_init``, flying at v*(r_min)."""
    centers = np.asarray(centers, dtype=float).reshape(-1, 2)
    if len(centers) == 0:
        raise ValueError("need at least one center-point")
    if phases is None:
        if rng is None:
            raise ValueError("pass either rng or phases")
        phases = rng.uniform(0.0, 2.0 * math.pi, size=len(centers))
    v = optimal_velocity(cfg.r_min, EnergyParams.from_config(cfg))
    return [
        UavState(index=i, center=(float(c[0]), float(c[1])), radius=cfg.r_min,
                 height=cfg.h_init, velocity=v, phase=float(phases[i]))
        for i, c in enumerate(centers)
    ]


def advance_orbit(state: UavState, tau: float) -> UavState:
    """Move counter-clockwise along the orbit for one timestep."""
    if state.velocity == 0.0 or state.radius == 0.0:
        return state
    phase = math.fmod(state.phase + state.velocity * tau / state.radius, 2.0 * math.pi)
    return replace(state, phase=phase)


def neighbor_sets(centers, k: int = N_NEIGHBORS) -> tuple[tuple[int, ...], ...]:
    """Up to ``k`` closest other center-points per UAV, nearest first, ties by index."""
    centers = np.asarray(centers, dtype=float).reshape(-1, 2)
    n = len(centers)
    if n < 1:
        raise ValueError("need at least one center-point")
    d2 = _sq_dists(centers, centers)
    out = []
    for i in range(n):
        order = sorted((j for j in range(n) if j != i), key=lambda j: (d2[i, j], j))
        out.append(tuple(order[:k]))
    return tuple(out)


def build_world(n_uavs: int, cfg: ScenarioConfig, rng: np.random.Generator) -> World:
    """Draw users, place center-points with k-means and draw orbit phases."""
    side = area_side_for_fleet(n_uavs, cfg.uav_density)
    users = generate_users(side, cfg.user_density, rng)
    if len(users) >= n_uavs:
        centers = kmeans_centers(users, n_uavs, rng, max_iter=cfg.kmeans_max_iter)
    else:
        # degenerate draw: too few users to cluster, pad with uniform points
        extra = rng.uniform(0.0, side, size=(n_uavs - len(users), 2))
        centers = np.vstack([users, extra])
    phases = rng.uniform(0.0, 2.0 * math.pi, size=n_uavs)
    return World(users=users, centers=centers, area_side=side,
                 neighbors=neighbor_sets(centers), initial_phases=phases)
