from .base import AgentStatus as AgentStatus
from .base import Setting as Setting
from .config import ExperimentConfig as ExperimentConfig
from .config import PlannerConfig as PlannerConfig
from .model import AgentSpec as AgentSpec
from .model import Instance as Instance
from .model import SearchPolicy as SearchPolicy
from .model import Station as Station
from .model import StationGraph as StationGraph
from .model import SystemState as SystemState
from .runner import ExperimentRunner as ExperimentRunner

__version__ = "0.3.0"
__author__ = "polesearch developers"
__url__ = "https://github.com/polesearch/polesearch"

__all__ = [
    "AgentSpec",
    "AgentStatus",
    "ExperimentConfig",
    "ExperimentRunner",
    "Instance",
    "PlannerConfig",
    "SearchPolicy",
    "Setting",
    "Station",
    "StationGraph",
    "SystemState",
]
