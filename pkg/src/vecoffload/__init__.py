"""Simulator and learning engine for multi-task vehicular service offloading
across heterogeneous edge nodes.

The usual flow: load or build a scenario, wrap it in an environment, then
train, evaluate, and compare against the baseline policies.

    from vecoffload import build_scenario, load_config, Hyperparams, train

    scenario = build_scenario(load_config("reference.toml"))
    report = train(scenario, Hyperparams.from_scenario(scenario))
"""

from .a3c import (
    GlobalStore,
    Hyperparams,
    TrainReport,
    evaluate,
    online_learn,
    train,
)
from .baselines import (
    RandomPolicy,
    brute_force_optimum,
    greedy_decide,
    local_decide,
    rollout,
)
from .env import OffloadEnv, adjusted_task_delay, raw_task_delay, service_delay
from .errors import (
    CheckpointError,
    ConfigError,
    DomainError,
    LifecycleError,
    PlacementError,
)
from .nn import load_checkpoint, save_checkpoint
from .scenario import (
    Scenario,
    ScenarioConfig,
    build_scenario,
    bundled_config_path,
    load_config,
    scenario_from_json,
    scenario_to_json,
)

__version__ = "0.1.0"

__all__ = [
    "CheckpointError",
    "ConfigError",
    "DomainError",
    "GlobalStore",
    "Hyperparams",
    "LifecycleError",
    "OffloadEnv",
    "PlacementError",
    "RandomPolicy",
    "Scenario",
    "ScenarioConfig",
    "TrainReport",
    "adjusted_task_delay",
    "brute_force_optimum",
    "build_scenario",
    "bundled_config_path",
    "evaluate",
    "greedy_decide",
    "load_checkpoint",
    "load_config",
    "local_decide",
    "online_learn",
    "raw_task_delay",
    "rollout",
    "save_checkpoint",
    "scenario_from_json",
    "scenario_to_json",
    "service_delay",
    "train",
    "__version__",
]
