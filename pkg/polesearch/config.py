"""
Configuration classes for polesearch

Planner and experiment configuration dataclasses with environment variable
support (prefix ``POLESEARCH_``) and JSON experiment files.
"""

import json
import logging
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Union

from .base import PenaltyConvention, Setting, TerminalMode
from .exceptions import ConfigurationError
from .utils import get_env_value

logger = logging.getLogger(__name__)

# Factorial design of the synthetic study: 9 x 3 x 2 x 4 = 216 configurations
DEFAULT_GRID: Dict[str, List[float]] = {
    "n_agents": [2, 3, 4, 5, 6, 7, 8, 9, 10],
    "start_radius": [100.0, 300.0, 700.0],
    "search_radius": [1000.0, 2000.0],
    "start_spread": [0.0, 1.0, 5.0, 15.0],
}

# Named mean-availability scenarios
AVAILABILITY_PRESETS: Dict[str, float] = {"low": 0.25, "high": 0.60}

GRID_AXES = ("n_agents", "start_radius", "search_radius", "start_spread", "mean_availability")

DEFAULT_SETTINGS = [
    "DEC-N",
    "DEC",
    "DEC-I",
    "DEC-I-c",
    "DEC-O",
    "DEC-IO",
    "DEC-O-d",
    "CEN-RO",
    "OFF",
]

P_DISTRIBUTION = "beta(mean=d_a, concentration={concentration:g})"


def _env(key: str, default: Any, value_type: type = str):
    return field(default_factory=lambda: get_env_value(f"POLESEARCH_{key}", default, value_type))


@dataclass
class PlannerConfig:
    """Knobs of the label-setting and rollout planners"""

    n_best: int = _env("N_BEST", 10, int)
    """Number of candidate policies compared by collaborative selection and LH-RO."""

    rollout_horizon: int = _env("ROLLOUT_HORIZON", 5, int)
    """Decision epochs simulated by the rollout base policy after the current one."""

    terminal_mode: str = _env("TERMINAL_MODE", TerminalMode.ANY_PREFIX.value, str)
    """Which labels are candidate policies: 'any_prefix' or 'dead_end'."""

    dominance: bool = _env("DOMINANCE", True, bool)
    """Prune dominated labels during label setting."""

    lookahead_pending: bool = _env("LOOKAHEAD_PENDING", False, bool)
    """Let the rollout anticipate agents that have not departed yet."""

    def __post_init__(self):
        self.validate()

    def validate(self) -> bool:
        errors = []
        if self.n_best < 1:
            errors.append("n_best must be at least 1")
        if self.rollout_horizon < 0:
            errors.append("rollout_horizon must be non-negative")
        if self.terminal_mode not in {m.value for m in TerminalMode}:
            errors.append(f"terminal_mode must be one of {[m.value for m in TerminalMode]}")
        if errors:
            raise ConfigurationError(f"Planner configuration invalid: {'; '.join(errors)}")
        return True

    def to_dict(self) -> Dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class ExperimentConfig:
    """Configuration of a batch experiment"""

    # Experiment Design
    # ---
    settings: List[str] = field(default_factory=lambda: list(DEFAULT_SETTINGS))
    """Settings evaluated on every instance."""

    grid: Dict[str, List[float]] = field(default_factory=lambda: {k: list(v) for k, v in DEFAULT_GRID.items()})
    """Factorial grid; axes n_agents, start_radius, search_radius, start_spread, mean_availability."""

    mean_availability: List[float] = field(default_factory=lambda: [AVAILABILITY_PRESETS["low"]])
    """Mean station availabilities d_a; added to the grid unless the grid names the axis."""

    replicates: int = _env("REPLICATES", 1, int)
    """Instances generated per grid point."""

    runs: int = _env("RUNS", 100, int)
    """Simulation runs per instance (shared availability realizations)."""

    seed: int = _env("SEED", 0, int)
    """Root seed of instance generation and realization sampling."""

    reference: str = _env("REFERENCE", "DEC", str)
    """Setting relative improvements are computed against."""

    # Instance Parameters
    # ---
    beta_global: float = _env("BETA_GLOBAL", 700.0, float)
    """Global penalty charged once if any agent fails (minutes-equivalent)."""

    budget: float = _env("BUDGET", 5.0, float)
    """Search time budget per agent in minutes."""

    penalty: float = _env("PENALTY", 60.0, float)
    """Individual failure penalty (minutes-equivalent)."""

    speed_kmh: float = _env("SPEED_KMH", 18.0, float)
    """Constant driving speed used to derive travel times."""

    station_density: float = _env("STATION_DENSITY", 3.0, float)
    """Stations per square kilometer."""

    concentration: float = _env("CONCENTRATION", 10.0, float)
    """Concentration of the Beta distribution of station availabilities."""

    heterogeneity: float = _env("HETEROGENEITY", 0.0, float)
    """Relative spread of agents' budgets and radii around their defaults."""

    max_usage_cost: float = _env("MAX_USAGE_COST", 0.0, float)
    """Upper bound of uniformly drawn station-usage costs (0 disables them)."""

    # Recovery Model
    # ---
    recovery_enabled: bool = _env("RECOVERY_ENABLED", False, bool)
    """Let occupied stations free up again over time."""

    obs_threshold: float = _env("OBS_THRESHOLD", 0.0, float)
    """Minutes after which an occupied observation no longer excludes a station."""

    recovery_rate: float = _env("RECOVERY_RATE", 1.0 / 60.0, float)
    """Per-minute rate at which occupied stations free up."""

    # Evaluation
    # ---
    penalty_convention: str = _env("PENALTY_CONVENTION", PenaltyConvention.FAILURE.value, str)
    """Runs whose search time is charged the penalty: 'failure' or 'success'."""

    beta_grid: List[float] = field(default_factory=lambda: [100.0, 300.0, 700.0, 1500.0])
    """Global penalties swept by the sensitivity analysis."""

    # Execution
    # ---
    out_dir: str = _env("OUT_DIR", "./results", str)
    """Directory receiving the CSV outputs."""

    jobs: int = _env("JOBS", 1, int)
    """Worker processes for (instance, setting) cells."""

    cell_timeout: float = _env("CELL_TIMEOUT", 600.0, float)
    """Wall-clock cap per (instance, setting) cell in seconds."""

    planner: PlannerConfig = field(default_factory=PlannerConfig)
    """Planner knobs shared by all settings."""

    def __post_init__(self):
        if isinstance(self.planner, dict):
            self.planner = PlannerConfig(**self.planner)
        self.validate()

    @classmethod
    def from_env(cls) -> "ExperimentConfig":
        return cls()

    @classmethod
    def from_file(cls, path: Union[str, Path], **overrides: Any) -> "ExperimentConfig":
        """
        Load a JSON experiment file

        Args:
            path: Path to the JSON file
            **overrides: Values taking precedence over the file (e.g. from CLI flags)

        Returns:
            Validated ExperimentConfig
        """
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except FileNotFoundError:
            raise ConfigurationError(f"Config file not found: {path}")
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"Config file {path} is not valid JSON: {e}")
        if not isinstance(data, dict):
            raise ConfigurationError(f"Config file {path} must hold a JSON object")
        return cls.from_dict(data, **overrides)

    @classmethod
    def from_dict(cls, data: Dict[str, Any], **overrides: Any) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError(f"Unknown configuration keys: {', '.join(unknown)}")
        values = dict(data)
        values.update({k: v for k, v in overrides.items() if v is not None})
        try:
            return cls(**values)
        except TypeError as e:
            raise ConfigurationError(f"Invalid configuration: {e}")

    def validate(self) -> bool:
        """Validate configuration settings"""
        errors = []

        if not self.settings:
            errors.append("at least one setting is required")
        for name in self.settings:
            try:
                Setting.parse(name)
            except ValueError:
                errors.append(f"unknown setting '{name}'")
        try:
            Setting.parse(self.reference)
        except ValueError:
            errors.append(f"unknown reference setting '{self.reference}'")

        for axis, values in self.grid.items():
            if axis not in GRID_AXES:
                errors.append(f"unknown grid axis '{axis}'")
            elif not values:
                errors.append(f"grid axis '{axis}' is empty")
        for d_a in self.grid.get("mean_availability", self.mean_availability):
            if not 0.0 < d_a < 1.0:
                errors.append("mean availability must lie in (0, 1)")

        if self.runs < 1:
            errors.append("runs must be at least 1")
        if self.replicates < 1:
            errors.append("replicates must be at least 1")
        if self.jobs < 1:
            errors.append("jobs must be at least 1")
        if self.beta_global < 0:
            errors.append("beta_global must be non-negative")
        if self.budget <= 0:
            errors.append("budget must be positive")
        if self.penalty < 0:
            errors.append("penalty must be non-negative")
        if self.speed_kmh <= 0:
            errors.append("speed_kmh must be positive")
        if self.station_density <= 0:
            errors.append("station_density must be positive")
        if self.concentration <= 0:
            errors.append("concentration must be positive")
        if not 0.0 <= self.heterogeneity < 1.0:
            errors.append("heterogeneity must lie in [0, 1)")
        if self.max_usage_cost < 0:
            errors.append("max_usage_cost must be non-negative")
        if self.recovery_rate < 0 or self.obs_threshold < 0:
            errors.append("recovery parameters must be non-negative")
        if self.penalty_convention not in {c.value for c in PenaltyConvention}:
            errors.append("penalty_convention must be 'failure' or 'success'")
        if any(b < 0 for b in self.beta_grid):
            errors.append("beta_grid values must be non-negative")
        if self.cell_timeout <= 0:
            errors.append("cell_timeout must be positive")

        if errors:
            raise ConfigurationError(f"Configuration validation failed: {'; '.join(errors)}")
        return True

    @property
    def parsed_settings(self) -> List[Setting]:
        return [Setting.parse(name) for name in self.settings]

    def full_grid(self) -> Dict[str, List[float]]:
        grid = {k: list(v) for k, v in self.grid.items()}
        grid.setdefault("mean_availability", list(self.mean_availability))
        return grid

    def to_dict(self) -> Dict[str, Any]:
        """Convert configuration to dictionary (emitted as run metadata)"""
        data = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "planner"}
        data["planner"] = self.planner.to_dict()
        data["p_distribution"] = P_DISTRIBUTION.format(concentration=self.concentration)
        return data
