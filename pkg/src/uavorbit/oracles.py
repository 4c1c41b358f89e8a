"""Independent numeric checks behind ``uavorbit verify``.

Each check recomputes a quantity by a route that does not share code with
the production path (grid search, finite differences, hand-written link
budget) and compares.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .agent import DuelingNet, td_loss_and_grads
from .config import ScenarioConfig
from .energy import EnergyParams, fixed_wing_power, optimal_velocity
from .radio import antenna_gain_db, received_power_matrix, sinr


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def grid_optimal_velocity(r: float, c1: float, c2: float, g: float,
                          v_lo: float = 1.0, v_hi: float = 100.0, n: int = 10_000) -> float:
    v = np.linspace(v_lo, v_hi, n)
    power = (c1 + c2 / (g * r) ** 2) * v**3 + c2 / v
    return float(v[np.argmin(power)])


def check_velocity_grid(cfg: ScenarioConfig, radii=range(50, 1001, 50), tol: float = 1e-3) -> CheckResult:
    params = EnergyParams.from_config(cfg)
    worst = 0.0
    for r in radii:
        grid = grid_optimal_velocity(r, cfg.c1, cfg.c2, cfg.gravity)
        closed = optimal_velocity(r, params)
        worst = max(worst, abs(grid - closed) / closed)
    return CheckResult("optimal velocity vs grid search", worst < tol, f"max rel err {worst:.2e}")


def check_energy_monotone(cfg: ScenarioConfig, radii=range(50, 1001, 50)) -> CheckResult:
    params = EnergyParams.from_config(cfg)
    power = [fixed_wing_power(r, optimal_velocity(r, params), params) for r in radii]
    ok = all(b <= a for a, b in zip(power, power[1:]))
    return CheckResult("orbit power non-increasing in radius", ok,
                       f"{power[0]:.2f} W at r={radii[0]} -> {power[-1]:.2f} W at r={radii[-1]}")


def nadir_snr_by_hand(cfg: ScenarioConfig, height: float) -> float:
    """Noise-limited SNR straight below a UAV, written out from the link budget."""
    c_lin = 10 ** (cfg.nearfield_db / 10)
    return cfg.tx_power * c_lin * 1.0 * height ** (-cfg.pathloss_exponent) / cfg.noise_power


def check_radio_spots(cfg: ScenarioConfig) -> CheckResult:
    g0 = antenna_gain_db(0.0, 100.0, cfg.beamwidth)
    h = 100.0
    g_eta = antenna_gain_db(h * math.tan(cfg.beamwidth), h, cfg.beamwidth)
    power = received_power_matrix([[0.0, 0.0]], [[0.0, 0.0]], [h], cfg)
    gamma = float(sinr(power, np.array([0]), cfg.noise_power)[0])
    ref = nadir_snr_by_hand(cfg, h)
    ok = g0 == 0.0 and abs(g_eta + 12.0) < 1e-9 and abs(gamma - ref) / ref < 1e-12
    return CheckResult("radio spot values", ok,
                       f"nadir gain {g0} dB, gain at beamwidth {g_eta:.6f} dB, nadir SINR {gamma:.6g}")


def finite_difference_check(net: DuelingNet, states, actions, targets, rng: np.random.Generator,
                            probes: int = 20, step: float = 1e-6) -> float:
    """Worst relative error between backprop and central differences over random parameters."""
    _, grads = td_loss_and_grads(net, states, actions, targets)
    params = net.parameters()
    worst = 0.0
    for _ in range(probes):
        k = int(rng.integers(len(params)))
        idx = tuple(int(rng.integers(s)) for s in params[k].shape)
        old = params[k][idx]
        params[k][idx] = old + step
        up, _ = td_loss_and_grads(net, states, actions, targets)
        params[k][idx] = old - step
        down, _ = td_loss_and_grads(net, states, actions, targets)
        params[k][idx] = old
        numeric = (up - down) / (2 * step)
        analytic = float(grads[k][idx])
        denom = max(abs(numeric) + abs(analytic), 1e-8)
        worst = max(worst, abs(numeric - analytic) / denom)
    return worst


def check_gradients(seed: int = 0, n_nets: int = 5) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_nets):
        net = DuelingNet(n_in=8, n_actions=5, hidden=16, rng=rng, dtype="float64")
        # wake up the output layers so every path carries gradient
        for w, b in net.value[-1:] + net.advantage[-1:]:
            w *= 10.0
            b += rng.normal(size=b.shape)
        states = rng.normal(size=(12, 8))
        actions = rng.integers(0, 5, size=12)
        targets = rng.normal(size=12)
        worst = max(worst, finite_difference_check(net, states, actions, targets, rng))
    return CheckResult("backprop vs finite differences", worst < 1e-4, f"max rel err {worst:.2e}")


def run_all(cfg: ScenarioConfig | None = None) -> list[CheckResult]:
    cfg = ScenarioConfig() if cfg is None else cfg
    return [check_velocity_grid(cfg), check_energy_monotone(cfg), check_radio_spots(cfg),
            check_gradients()]
