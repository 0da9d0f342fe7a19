"""Discrete-event simulator of a power-limited BLE mesh network.

The protocol stack covers energy-aware access control, hop-count neighbor
discovery, greedy construction of node-disjoint multi-paths to a head
node, multi-path / hop-distance / adaptive failure recovery, and a
flooding baseline for comparison.
"""

from .config import ConfigError, ScenarioConfig, defaults, dumps, load, loads
from .network import NetConfig, World
from .scenario import RunResult, run, run_case1, run_case2, run_case3, run_many

__all__ = [
    "ConfigError",
    "NetConfig",
    "RunResult",
    "ScenarioConfig",
    "World",
    "defaults",
    "dumps",
    "load",
    "loads",
    "run",
    "run_case1",
    "run_case2",
    "run_case3",
    "run_many",
]

__version__ = "0.1.0"
