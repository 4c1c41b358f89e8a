"""Downlink radio model: cone antenna gain, LoS pathloss, SINR and throughput.

All functions are vectorised over numpy arrays.  The usual pipeline is

    power = received_power_matrix(users, positions, heights, cfg)   # (N, U)
    serving = associate(power)                                        # (N,)
    gamma = sinr(power, serving, cfg.noise_power)                     # (N,)
    bits = throughput_bits(gamma, cfg.timestep, cfg.bandwidth)
"""
from __future__ import annotations

import numpy as np

from .config import ScenarioConfig

GAIN_FLOOR_DB = -20.0


def antenna_gain_db(horiz_dist, height, beamwidth: float):
    """Gain in dB of a downtilted cone antenna towards a ground point.

    ``-min(20, 12 (arctan(d/h) / beamwidth)^2)``.  At zero height the
    off-axis angle is taken in the limit: 0 dB straight below, floor
    elsewhere.
    """
    if beamwidth <= 0:
        raise ValueError("beamwidth must be positive")
    d = np.asarray(horiz_dist, dtype=float)
    h = np.asarray(height, dtype=float)
    # arctan2 gives the h -> 0 limit (pi/2 off-nadir, 0 at d == 0)
    angle = np.arctan2(d, h)
    gain = 0.0 - np.minimum(-GAIN_FLOOR_DB, 12.0 * (angle / beamwidth) ** 2)
    return gain if gain.ndim else float(gain)


def db_to_linear(x):
    return 10.0 ** (np.asarray(x, dtype=float) / 10.0)


def received_power(horiz_dist, height, cfg: ScenarioConfig):
    """Received power in W: p * c * mu * (d^2 + h^2)^(-alpha/2), c and mu linear."""
    d = np.asarray(horiz_dist, dtype=float)
    h = np.asarray(height, dtype=float)
    gain = db_to_linear(antenna_gain_db(d, h, cfg.beamwidth))
    out = cfg.tx_power * cfg.nearfield_linear * gain * (d**2 + h**2) ** (-cfg.pathloss_exponent / 2.0)
    return out if np.ndim(out) else float(out)


def received_power_matrix(users, positions, heights, cfg: ScenarioConfig) -> np.ndarray:
    """Power from every UAV at every user, shape ``(n_users, n_uavs)``."""
    users = np.asarray(users, dtype=float).reshape(-1, 2)
    positions = np.asarray(positions, dtype=float).reshape(-1, 2)
    heights = np.asarray(heights, dtype=float).reshape(-1)
    diff = users[:, None, :] - positions[None, :, :]
    dist = np.hypot(diff[..., 0], diff[..., 1])
    return received_power(dist, heights[None, :], cfg).reshape(len(users), len(positions))


def associate(power: np.ndarray) -> np.ndarray:
    """Index of the strongest UAV per user; ties go to the lowest index."""
    power = np.asarray(power)
    if power.shape[1] == 0:
        raise ValueError("need at least one UAV")
    return np.argmax(power, axis=1)


def sinr(power: np.ndarray, serving: np.ndarray, noise_power: float) -> np.ndarray:
    """SINR of each user against its serving UAV; all other UAVs interfere."""
    power = np.asarray(power, dtype=float)
    serving = np.asarray(serving)
    rows = np.arange(power.shape[0])
    signal = power[rows, serving]
    others = power.copy()
    others[rows, serving] = 0.0
    return signal / (others.sum(axis=1) + noise_power)


def throughput_bits(gamma, tau: float, bandwidth: float):
    """Shannon-bound bits delivered in one timestep."""
    out = tau * bandwidth * np.log2(1.0 + np.asarray(gamma, dtype=float))
    return out if np.ndim(out) else float(out)


def per_uav_throughput(users, positions, heights, cfg: ScenarioConfig) -> np.ndarray:
    """Bits served by each UAV in one timestep (users not served contribute 0)."""
    n_uavs = len(np.asarray(heights).reshape(-1))
    if len(users) == 0:
        return np.zeros(n_uavs)
    power = received_power_matrix(users, positions, heights, cfg)
    serving = associate(power)
    bits = throughput_bits(sinr(power, serving, cfg.noise_power), cfg.timestep, cfg.bandwidth)
    return np.bincount(serving, weights=bits, minlength=n_uavs)
