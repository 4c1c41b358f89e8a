"""Fixed-wing UAV access-point simulator with decentralised dueling-DQN orbit control."""

__version__ = "0.1.0"

from .config import ScenarioConfig, load_config

__all__ = ["ScenarioConfig", "load_config", "__version__"]
