"""Propulsion energy of fixed-wing and hovering UAVs, and energy efficiency.

The fixed-wing model is the classic circular-orbit power law

    P(r, v) = (c1 + c2 / (g r)^2) v^3 + c2 / v

integrated over one timestep.  Communication-equipment power is ignored.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ScenarioConfig


@dataclass(frozen=True)
class EnergyParams:
    c1: float = 9.26e-4
    c2: float = 2250.0
    g: float = 9.81
    mass: float = 10.0
    air_density: float = 1.225
    rotor_area: float = 0.5

    def __post_init__(self):
        for name in ("c1", "c2", "g", "air_density", "rotor_area"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.mass < 0:
            raise ValueError("mass must be non-negative")

    @classmethod
    def from_config(cls, cfg: ScenarioConfig) -> EnergyParams:
        return cls(c1=cfg.c1, c2=cfg.c2, g=cfg.gravity, mass=cfg.uav_mass,
                   air_density=cfg.air_density, rotor_area=cfg.rotor_area)


def fixed_wing_power(r, v, params: EnergyParams):
    """Propulsion power in W for a circular orbit of radius ``r`` at speed ``v``."""
    r = np.asarray(r, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.any(r <= 0) or np.any(v <= 0):
        raise ValueError("fixed-wing power is singular for r <= 0 or v <= 0")
    drag = params.c1 + params.c2 / (params.g * r) ** 2
    out = drag * v**3 + params.c2 / v
    return out if out.ndim else float(out)


def fixed_wing_energy(r, v, tau: float, params: EnergyParams):
    """Energy in J consumed over one timestep of length ``tau``."""
    if tau <= 0:
        raise ValueError("timestep must be positive")
    return tau * fixed_wing_power(r, v, params)


def optimal_velocity(r, params: EnergyParams):
    """Speed minimising orbit power at turn radius ``r``.

    ``r = inf`` gives the straight-flight optimum (c2 / (3 c1))^(1/4).
    """
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("turn radius must be positive")
    drag = params.c1 + params.c2 / (params.g * r) ** 2
    out = (params.c2 / (3.0 * drag)) ** 0.25
    return out if out.ndim else float(out)


def hover_power(params: EnergyParams) -> float:
    """Ideal induced power of a hovering rotorcraft, sqrt((m g)^3 / (2 rho A))."""
    weight = params.mass * params.g
    return float(np.sqrt(weight**3 / (2.0 * params.air_density * params.rotor_area)))


def hover_energy(tau: float, params: EnergyParams) -> float:
    if tau <= 0:
        raise ValueError("timestep must be positive")
    return tau * hover_power(params)


def uav_ee(throughput_bits: float, energy_j: float) -> float:
    """Bits delivered per joule for a single UAV and timestep."""
    if not energy_j > 0:
        raise ValueError(f"energy must be positive, got {energy_j!r}")
    return throughput_bits / energy_j


def network_ee(throughputs, energies) -> float:
    """Ratio of total bits to total joules over every UAV and timestep.

    Both inputs are array-likes of matching shape, typically ``(T, U)``.
    This is a ratio of sums, not a mean of per-step ratios.
    """
    throughputs = np.asarray(throughputs, dtype=float)
    energies = np.asarray(energies, dtype=float)
    if throughputs.size == 0 or energies.size == 0:
        raise ValueError("network EE of an empty series is undefined")
    if throughputs.shape != energies.shape:
        raise ValueError(f"shape mismatch: {throughputs.shape} vs {energies.shape}")
    total_energy = energies.sum()
    if not total_energy > 0:
        raise ValueError("total energy must be positive")
    return float(throughputs.sum() / total_energy)
