"""
Synthetic instance generation and instance files

Stations are scattered uniformly in a disc around the origin, drivers start
uniformly in a smaller disc and depart at equally spaced times. Instance files
are JSON documents validated field by field on load.
"""

import itertools
import json
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict, List, Mapping, Sequence, Union

import numpy as np

from .config import P_DISTRIBUTION, ExperimentConfig
from .exceptions import GenerationError, InstanceSchemaError
from .model import AgentSpec, Instance, Station, StationGraph
from .utils import TIME_EPS

logger = logging.getLogger(__name__)

SCHEMA_VERSION = "polesearch-instance/1"


@dataclass(frozen=True)
class GenerationParams:
    """Parameters of one synthetic instance"""

    n_agents: int
    start_radius: float
    search_radius: float
    start_spread: float
    mean_availability: float
    station_density: float = 3.0
    budget: float = 5.0
    penalty: float = 60.0
    beta_global: float = 700.0
    speed_kmh: float = 18.0
    concentration: float = 10.0
    heterogeneity: float = 0.0
    max_usage_cost: float = 0.0
    recovery_enabled: bool = False
    obs_threshold: float = 0.0
    recovery_rate: float = 1.0 / 60.0

    def validate(self) -> None:
        errors = []
        if self.n_agents < 1:
            errors.append("n_agents must be at least 1")
        for name in ("start_radius", "search_radius", "station_density", "budget", "speed_kmh", "concentration"):
            if getattr(self, name) <= 0:
                errors.append(f"{name} must be positive")
        if self.start_spread < 0:
            errors.append("start_spread must be non-negative")
        if not 0.0 < self.mean_availability < 1.0:
            errors.append("mean_availability must lie in (0, 1)")
        if not 0.0 <= self.heterogeneity < 1.0:
            errors.append("heterogeneity must lie in [0, 1)")
        if errors:
            raise GenerationError(f"Invalid generation parameters: {'; '.join(errors)}")

    @classmethod
    def from_config(cls, point: Mapping[str, float], config: ExperimentConfig) -> "GenerationParams":
        """Combine one grid point with the experiment-wide instance parameters"""
        return cls(
            n_agents=int(point["n_agents"]),
            start_radius=float(point["start_radius"]),
            search_radius=float(point["search_radius"]),
            start_spread=float(point["start_spread"]),
            mean_availability=float(point["mean_availability"]),
            station_density=config.station_density,
            budget=config.budget,
            penalty=config.penalty,
            beta_global=config.beta_global,
            speed_kmh=config.speed_kmh,
            concentration=config.concentration,
            heterogeneity=config.heterogeneity,
            max_usage_cost=config.max_usage_cost,
            recovery_enabled=config.recovery_enabled,
            obs_threshold=config.obs_threshold,
            recovery_rate=config.recovery_rate,
        )


def _uniform_disc(rng: np.random.Generator, radius: float, count: int) -> np.ndarray:
    r = radius * np.sqrt(rng.random(count))
    theta = 2.0 * np.pi * rng.random(count)
    return np.column_stack((r * np.cos(theta), r * np.sin(theta)))


def _draw(params: GenerationParams, rng: np.random.Generator) -> Instance:
    outer = params.search_radius + params.start_radius
    area_km2 = math.pi * outer**2 / 1e6
    n_stations = max(1, int(round(params.station_density * area_km2)))

    points = _uniform_disc(rng, outer, n_stations)
    a = params.concentration * params.mean_availability
    b = params.concentration * (1.0 - params.mean_availability)
    probabilities = rng.beta(a, b, n_stations)
    stations = [
        Station(id=k, x=float(x), y=float(y), p=float(p), mu=params.recovery_rate)
        for k, ((x, y), p) in enumerate(zip(points, probabilities))
    ]

    starts = _uniform_disc(rng, params.start_radius, params.n_agents)
    graph = StationGraph.from_coordinates(
        stations, [tuple(s) for s in starts], speed_kmh=params.speed_kmh
    )
    departures = np.linspace(0.0, params.start_spread, params.n_agents)

    h = params.heterogeneity
    agents = []
    for k in range(params.n_agents):
        budget = params.budget * (rng.uniform(1.0 - h, 1.0 + h) if h > 0 else 1.0)
        radius = params.search_radius * (rng.uniform(1.0 - h, 1.0 + h) if h > 0 else 1.0)
        usage = {}
        if params.max_usage_cost > 0:
            usage = {v: float(c) for v, c in enumerate(rng.uniform(0.0, params.max_usage_cost, n_stations))}
        agents.append(
            AgentSpec(
                id=k,
                t0=float(departures[k]),
                start=n_stations + k,
                budget=float(budget),
                radius=float(radius),
                penalty=params.penalty,
                usage_cost=usage,
            )
        )

    return Instance(
        graph=graph,
        agents=tuple(agents),
        beta_global=params.beta_global,
        recovery_enabled=params.recovery_enabled,
        obs_threshold=params.obs_threshold,
    )


def _has_reachable_station(instance: Instance, agent: AgentSpec) -> bool:
    return any(
        instance.graph.time(agent.start, v) <= agent.budget + TIME_EPS
        for v in instance.stations_in_radius(agent)
    )


def generate(params: GenerationParams, seed: int, max_attempts: int = 20) -> Instance:
    """
    Draw a synthetic instance

    Args:
        params: Generation parameters
        seed: Root seed; each attempt uses its own spawned sub-seed
        max_attempts: Draws before giving up

    Returns:
        Instance in which every agent reaches at least one station at departure

    Raises:
        GenerationError: When no attempt yields a valid instance
    """
    params.validate()
    for attempt, sub_seed in enumerate(np.random.SeedSequence(seed).spawn(max_attempts)):
        instance = _draw(params, np.random.default_rng(sub_seed))
        stranded = [a.id for a in instance.agents if not _has_reachable_station(instance, a)]
        if not stranded:
            metadata = {
                "params": asdict(params),
                "seed": seed,
                "attempt": attempt,
                "p_distribution": P_DISTRIBUTION.format(concentration=params.concentration),
            }
            return Instance(
                graph=instance.graph,
                agents=instance.agents,
                beta_global=instance.beta_global,
                recovery_enabled=instance.recovery_enabled,
                obs_threshold=instance.obs_threshold,
                metadata=metadata,
            )
        logger.debug(f"Attempt {attempt}: agents {stranded} reach no station, redrawing")
    raise GenerationError(f"No valid instance after {max_attempts} attempts (seed={seed})")


def full_factorial(grid: Mapping[str, Sequence[Any]]) -> List[Dict[str, Any]]:
    """Cartesian product of the grid axes, in axis order"""
    axes = list(grid)
    return [dict(zip(axes, values)) for values in itertools.product(*(grid[a] for a in axes))]


# ==========================================
# INSTANCE FILES
# ==========================================


def instance_to_dict(instance: Instance) -> Dict[str, Any]:
    graph = instance.graph
    if graph.coords is None:
        raise InstanceSchemaError("only coordinate-based instances can be saved", "$.stations")
    data = {
        "schema": SCHEMA_VERSION,
        "travel_speed_kmh": graph.speed_kmh,
        "beta_global": instance.beta_global,
        "recovery": {"enabled": instance.recovery_enabled, "t_thres": instance.obs_threshold},
        "stations": [
            {"id": s.id, "x": s.x, "y": s.y, "p": s.p, "mu": s.mu} for s in graph.stations
        ],
        "agents": [],
    }
    for agent in instance.agents:
        x, y = graph.coords[agent.start]
        entry = {
            "id": agent.id,
            "t0": agent.t0,
            "start": {"x": float(x), "y": float(y)},
            "budget": agent.budget,
            "radius": agent.radius,
            "penalty": agent.penalty,
        }
        if agent.usage_cost:
            entry["usage_cost"] = {str(v): c for v, c in sorted(agent.usage_cost.items())}
        data["agents"].append(entry)
    if instance.metadata:
        data["metadata"] = instance.metadata
    return data


def _require(obj: Mapping[str, Any], key: str, path: str, kind=(int, float)) -> Any:
    if not isinstance(obj, Mapping):
        raise InstanceSchemaError("expected an object", path)
    if key not in obj:
        raise InstanceSchemaError(f"missing field '{key}'", path)
    value = obj[key]
    if isinstance(value, bool) and kind != bool:
        raise InstanceSchemaError(f"field '{key}' has the wrong type", f"{path}.{key}")
    if not isinstance(value, kind):
        raise InstanceSchemaError(f"field '{key}' has the wrong type", f"{path}.{key}")
    return value


def instance_from_dict(data: Mapping[str, Any]) -> Instance:
    """Validate a parsed instance document and build the instance"""
    speed = float(_require(data, "travel_speed_kmh", "$"))
    beta_global = float(_require(data, "beta_global", "$"))
    recovery = data.get("recovery", {"enabled": False, "t_thres": 0.0})
    enabled = _require(recovery, "enabled", "$.recovery", bool)
    threshold = float(_require(recovery, "t_thres", "$.recovery"))

    raw_stations = _require(data, "stations", "$", list)
    stations = []
    for k, entry in enumerate(raw_stations):
        path = f"$.stations[{k}]"
        station_id = _require(entry, "id", path, int)
        if station_id != k:
            raise InstanceSchemaError(f"station ids must be 0..{len(raw_stations) - 1} in order", f"{path}.id")
        stations.append(
            Station(
                id=station_id,
                x=float(_require(entry, "x", path)),
                y=float(_require(entry, "y", path)),
                p=float(_require(entry, "p", path)),
                mu=float(entry.get("mu", 0.0)),
            )
        )

    raw_agents = _require(data, "agents", "$", list)
    parsed = []
    for k, entry in enumerate(raw_agents):
        path = f"$.agents[{k}]"
        start = _require(entry, "start", path, dict)
        usage = entry.get("usage_cost", {})
        if not isinstance(usage, dict):
            raise InstanceSchemaError("usage_cost must be an object", f"{path}.usage_cost")
        try:
            usage_cost = {int(v): float(c) for v, c in usage.items()}
        except (TypeError, ValueError):
            raise InstanceSchemaError("usage_cost maps station ids to numbers", f"{path}.usage_cost")
        parsed.append(
            {
                "id": _require(entry, "id", path, int),
                "t0": float(_require(entry, "t0", path)),
                "start": (
                    float(_require(start, "x", f"{path}.start")),
                    float(_require(start, "y", f"{path}.start")),
                ),
                "budget": float(_require(entry, "budget", path)),
                "radius": float(_require(entry, "radius", path)),
                "penalty": float(_require(entry, "penalty", path)),
                "usage_cost": usage_cost,
            }
        )
    parsed.sort(key=lambda a: (a["t0"], a["id"]))

    graph = StationGraph.from_coordinates(stations, [a["start"] for a in parsed], speed_kmh=speed)
    agents = tuple(
        AgentSpec(
            id=a["id"],
            t0=a["t0"],
            start=len(stations) + k,
            budget=a["budget"],
            radius=a["radius"],
            penalty=a["penalty"],
            usage_cost=a["usage_cost"],
        )
        for k, a in enumerate(parsed)
    )
    return Instance(
        graph=graph,
        agents=agents,
        beta_global=beta_global,
        recovery_enabled=enabled,
        obs_threshold=threshold,
        metadata=data.get("metadata", {}),
    )


def load_instance(path: Union[str, Path]) -> Instance:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise InstanceSchemaError(f"invalid JSON in {path}: {e}")
    return instance_from_dict(data)


def save_instance(instance: Instance, path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(instance_to_dict(instance), indent=2, sort_keys=True) + "\n")
