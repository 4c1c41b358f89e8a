import math

import numpy as np
import pytest

from uavorbit.config import ScenarioConfig
from uavorbit.energy import (
    EnergyParams, fixed_wing_energy, fixed_wing_power, hover_energy, hover_power,
    network_ee, optimal_velocity, uav_ee,
)

P = EnergyParams()
RADII = np.arange(50, 1001, 50)


def grid_argmin(r, n=10_000):
    v = np.linspace(1.0, 100.0, n)
    power = (9.26e-4 + 2250.0 / (9.81 * r) ** 2) * v**3 + 2250.0 / v
    return v[np.argmin(power)]


def test_params_from_default_config():
    assert EnergyParams.from_config(ScenarioConfig()) == P


def test_energy_at_min_radius():
    # frozen from direct evaluation: 2 * 182.5295 J
    assert fixed_wing_energy(50.0, optimal_velocity(50.0, P), 2.0, P) == pytest.approx(365.059, rel=1e-5)


def test_straight_flight_limit():
    assert fixed_wing_energy(1e12, 30.0, 2.0, P) == pytest.approx(200.004, rel=1e-6)


def test_energy_linear_in_tau():
    assert fixed_wing_energy(80.0, 20.0, 4.0, P) == pytest.approx(2 * fixed_wing_energy(80.0, 20.0, 2.0, P))


@pytest.mark.parametrize("r, v", [(0.0, 10.0), (50.0, 0.0), (-1.0, 5.0)])
def test_energy_domain_errors(r, v):
    with pytest.raises(ValueError):
        fixed_wing_energy(r, v, 2.0, P)


def test_optimal_velocity_spot_values():
    assert optimal_velocity(math.inf, P) == pytest.approx((2250 / (3 * 9.26e-4)) ** 0.25)
    assert optimal_velocity(math.inf, P) == pytest.approx(30.0, abs=0.01)
    assert optimal_velocity(1000.0, P) == pytest.approx(29.8, abs=0.05)
    assert optimal_velocity(50.0, P) == pytest.approx(16.43, abs=0.01)


@pytest.mark.parametrize("r", RADII)
def test_optimal_velocity_matches_grid(r):
    assert grid_argmin(r) == pytest.approx(optimal_velocity(r, P), rel=1e-3)


def test_power_at_optimum_non_increasing_in_radius():
    power = fixed_wing_power(RADII, optimal_velocity(RADII, P), P)
    assert np.all(np.diff(power) <= 0)


def test_power_convex_in_velocity():
    v = np.linspace(1.0, 100.0, 2000)
    for r in (50.0, 300.0, 1000.0):
        p = fixed_wing_power(r, v, P)
        assert np.all(p[2:] - 2 * p[1:-1] + p[:-2] > 0)


def test_hover_energy():
    assert hover_power(P) == pytest.approx(877.88, rel=1e-4)
    assert hover_energy(2.0, P) == pytest.approx(1755.76, rel=1e-4)
    assert hover_power(EnergyParams(mass=0.0)) == 0.0
    assert hover_power(P) > 3 * fixed_wing_power(50.0, optimal_velocity(50.0, P), P)


def test_uav_ee():
    assert uav_ee(0.0, 123.0) == 0.0
    assert uav_ee(2e6, 200.0) == 1e4
    with pytest.raises(ValueError):
        uav_ee(1.0, 0.0)


def test_network_ee_is_ratio_of_sums():
    thr = [[3e6], [1e6]]
    en = [[100.0], [100.0]]
    # hand sum: 4e6 / 200
    assert network_ee(thr, en) == 2e4
    # mean of per-step ratios would give the same here; unequal energies tell them apart
    assert network_ee([[3e6], [1e6]], [[100.0], [300.0]]) == pytest.approx(1e4)
    assert network_ee([[5.0]], [[2.0]]) == uav_ee(5.0, 2.0)


def test_network_ee_homogeneous_and_order_independent():
    rng = np.random.default_rng(3)
    thr = rng.uniform(0, 1e8, size=(250, 10))
    en = rng.uniform(100, 400, size=(250, 10))
    assert network_ee(7 * thr, en) == pytest.approx(7 * network_ee(thr, en), rel=1e-12)
    reversed_ratio = math.fsum(thr.ravel()[::-1]) / math.fsum(en.ravel()[::-1])
    assert network_ee(thr, en) == pytest.approx(reversed_ratio, rel=1e-9)


def test_network_ee_errors():
    with pytest.raises(ValueError):
        network_ee([], [])
    with pytest.raises(ValueError):
        network_ee([[1.0, 2.0]], [[1.0]])


def test_uav_ee_bounded_by_max_per_uav():
    rng = np.random.default_rng(11)
    for _ in range(100):
        thr = rng.uniform(0, 1e7, size=5)
        en = rng.uniform(50, 500, size=5)
        assert network_ee(thr, en) <= max(thr / en) + 1e-9
