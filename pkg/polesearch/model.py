"""
Domain model for the multi-agent stochastic charging-pole search

Contains the instance types (stations, agents, travel matrix), the search
policy value type and the centralized MDP state machine: reachable actions,
transitions with immediate costs, and an expectation-tree evaluator shared by
the rollout base policy and the exhaustive oracle.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .base import AgentStatus
from .exceptions import InstanceSchemaError, TransitionError
from .utils import TIME_EPS

logger = logging.getLogger(__name__)

DEFAULT_SPEED_KMH = 18.0
DEFAULT_PENALTY = 60.0
DEFAULT_BUDGET = 5.0
DEFAULT_BETA_GLOBAL = 700.0


def meters_per_minute(speed_kmh: float) -> float:
    return speed_kmh * 1000.0 / 60.0


@dataclass(frozen=True)
class Station:
    """Charging station with prior availability and recovery rate"""

    id: int
    x: float
    y: float
    p: float
    mu: float = 0.0


@dataclass(frozen=True, eq=False)
class StationGraph:
    """
    Complete directed graph over stations and agent start locations

    Node ``k < n_stations`` is station ``k``; node ``n_stations + j`` is the
    start location of the j-th agent of the owning instance.
    """

    stations: Tuple[Station, ...]
    travel: np.ndarray
    distance: np.ndarray
    coords: Optional[np.ndarray] = None
    metric: bool = False
    speed_kmh: float = DEFAULT_SPEED_KMH

    def __post_init__(self):
        errors = []
        n = self.travel.shape[0]
        if self.travel.shape != (n, n) or self.distance.shape != (n, n):
            errors.append("travel and distance must be square matrices of equal size")
        if n < len(self.stations):
            errors.append("travel matrix smaller than the station count")
        for index, station in enumerate(self.stations):
            if station.id != index:
                errors.append(f"station ids must be 0..{len(self.stations) - 1} in order")
                break
        for station in self.stations:
            if not 0.0 <= station.p <= 1.0:
                errors.append(f"station {station.id}: p={station.p} outside [0, 1]")
            if station.mu < 0:
                errors.append(f"station {station.id}: mu must be non-negative")
        if np.any(self.travel < 0):
            errors.append("travel times must be non-negative")
        if np.any(np.abs(np.diag(self.travel)) > 0):
            errors.append("travel(v, v) must be 0")
        if errors:
            raise InstanceSchemaError("; ".join(errors), "$.graph")
        self.travel.setflags(write=False)
        self.distance.setflags(write=False)

    @classmethod
    def from_coordinates(
        cls,
        stations: Sequence[Station],
        starts: Sequence[Tuple[float, float]],
        speed_kmh: float = DEFAULT_SPEED_KMH,
    ) -> "StationGraph":
        """Build a metric graph with Euclidean distances and constant speed"""
        points = [(s.x, s.y) for s in stations] + [tuple(p) for p in starts]
        coords = np.asarray(points, dtype=float).reshape(-1, 2)
        delta = coords[:, None, :] - coords[None, :, :]
        distance = np.sqrt((delta**2).sum(axis=2))
        travel = distance / meters_per_minute(speed_kmh)
        return cls(
            stations=tuple(stations),
            travel=travel,
            distance=distance,
            coords=coords,
            metric=True,
            speed_kmh=speed_kmh,
        )

    @classmethod
    def from_travel_matrix(
        cls,
        probabilities: Sequence[float],
        travel: Sequence[Sequence[float]],
        mu: Optional[Sequence[float]] = None,
        speed_kmh: float = DEFAULT_SPEED_KMH,
    ) -> "StationGraph":
        """Build a graph from an explicit travel-time matrix (hand-made fixtures)"""
        matrix = np.asarray(travel, dtype=float)
        rates = list(mu) if mu is not None else [0.0] * len(probabilities)
        stations = tuple(
            Station(id=k, x=0.0, y=0.0, p=float(p), mu=float(rates[k]))
            for k, p in enumerate(probabilities)
        )
        return cls(
            stations=stations,
            travel=matrix,
            distance=matrix * meters_per_minute(speed_kmh),
            metric=False,
            speed_kmh=speed_kmh,
        )

    @property
    def n_stations(self) -> int:
        return len(self.stations)

    @property
    def n_nodes(self) -> int:
        return self.travel.shape[0]

    def p(self, station: int) -> float:
        return self.stations[station].p

    def mu(self, station: int) -> float:
        return self.stations[station].mu

    def time(self, origin: int, target: int) -> float:
        return float(self.travel[origin, target])

    def dist(self, origin: int, target: int) -> float:
        return float(self.distance[origin, target])

    def base_probabilities(self) -> Dict[int, float]:
        return {s.id: s.p for s in self.stations}


@dataclass(frozen=True)
class AgentSpec:
    """One driver's charging request"""

    id: int
    t0: float
    start: int
    budget: float = DEFAULT_BUDGET
    radius: float = 2000.0
    penalty: float = DEFAULT_PENALTY
    usage_cost: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self):
        errors = []
        if self.budget <= 0:
            errors.append("budget must be positive")
        if self.radius <= 0:
            errors.append("radius must be positive")
        if self.penalty < 0:
            errors.append("penalty must be non-negative")
        if any(cost < 0 for cost in self.usage_cost.values()):
            errors.append("usage costs must be non-negative")
        if errors:
            raise InstanceSchemaError("; ".join(errors), f"$.agents[{self.id}]")

    def gamma(self, station: int) -> float:
        return float(self.usage_cost.get(station, 0.0))

    def __hash__(self) -> int:
        return hash((self.id, self.t0, self.start, self.budget, self.radius, self.penalty))


@dataclass(frozen=True, eq=False)
class Instance:
    """Station graph, ordered agent requests and global parameters"""

    graph: StationGraph
    agents: Tuple[AgentSpec, ...]
    beta_global: float = DEFAULT_BETA_GLOBAL
    recovery_enabled: bool = False
    obs_threshold: float = 0.0
    metadata: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        errors = []
        order = [(a.t0, a.id) for a in self.agents]
        if order != sorted(order):
            errors.append("agents must be sorted by departure time, ties by id")
        if len({a.id for a in self.agents}) != len(self.agents):
            errors.append("agent ids must be unique")
        if self.beta_global < 0:
            errors.append("beta_global must be non-negative")
        for agent in self.agents:
            if not 0 <= agent.start < self.graph.n_nodes:
                errors.append(f"agent {agent.id}: start node {agent.start} not in graph")
        if errors:
            raise InstanceSchemaError("; ".join(errors))
        object.__setattr__(self, "_by_id", {a.id: a for a in self.agents})

    def agent(self, agent_id: int) -> AgentSpec:
        return self._by_id[agent_id]

    @property
    def agent_ids(self) -> Tuple[int, ...]:
        return tuple(a.id for a in self.agents)

    def in_radius(self, agent: AgentSpec, station: int) -> bool:
        return self.graph.dist(agent.start, station) <= agent.radius + TIME_EPS

    def stations_in_radius(self, agent: AgentSpec) -> List[int]:
        return [s.id for s in self.graph.stations if self.in_radius(agent, s.id)]

    def readmitted(self, station: int, observed_at: float, now: float) -> bool:
        """Whether an observed-occupied station may be visited again at ``now``"""
        return self.recovery_enabled and now - observed_at > self.obs_threshold + TIME_EPS

    def effective_probability(
        self, station: int, now: float, observed: Mapping[int, float]
    ) -> float:
        """Availability of ``station`` at ``now`` given observation times"""
        if station not in observed:
            return self.graph.p(station)
        if not self.recovery_enabled:
            return 0.0
        from .probability import recovered_occupied_prob

        return recovered_occupied_prob(
            self.graph.p(station), self.graph.mu(station), max(0.0, now - observed[station])
        )

    def with_beta_global(self, beta_global: float) -> "Instance":
        return replace(self, beta_global=beta_global)


@dataclass(frozen=True)
class Visit:
    station: int
    planned_arrival: float


@dataclass(frozen=True)
class CostTriple:
    A: float
    rho: float
    alpha: float


@dataclass(frozen=True)
class SearchPolicy:
    """An ordered station-visit sequence for one agent with its cost triple"""

    agent: int
    visits: Tuple[Visit, ...]
    cost: CostTriple
    origin: int
    start_time: float

    @property
    def stations(self) -> Tuple[int, ...]:
        return tuple(v.station for v in self.visits)

    @property
    def first_station(self) -> Optional[int]:
        return self.visits[0].station if self.visits else None

    def arrival_at(self, station: int) -> Optional[float]:
        for visit in self.visits:
            if visit.station == station:
                return visit.planned_arrival
        return None

    def __len__(self) -> int:
        return len(self.visits)


# ==========================================
# CENTRALIZED MDP STATE MACHINE
# ==========================================


@dataclass(frozen=True)
class AgentState:
    station: int
    arrival: float
    status: AgentStatus
    history: Tuple[int, ...] = ()


@dataclass(frozen=True)
class Event:
    time: float
    agent: int
    kind: str  # "depart" or "arrive"


@dataclass(frozen=True)
class SystemState:
    """
    Centralized MDP state

    ``population`` is the set of agents the episode accounts for; the state is
    terminal once all of them are terminated. Observation times are kept next
    to the observed set for the recovery model.
    """

    agent_states: Tuple[Tuple[int, AgentState], ...]
    active: FrozenSet[int]
    terminated: FrozenSet[int]
    observed: FrozenSet[int]
    observed_at: Tuple[Tuple[int, float], ...]
    clock: float
    population: FrozenSet[int]

    def get(self, agent_id: int) -> Optional[AgentState]:
        for key, agent_state in self.agent_states:
            if key == agent_id:
                return agent_state
        return None

    def observation_times(self) -> Dict[int, float]:
        return dict(self.observed_at)

    @property
    def departed(self) -> FrozenSet[int]:
        return self.active | self.terminated

    @property
    def is_terminal(self) -> bool:
        return self.terminated >= self.population

    @property
    def failed_any(self) -> bool:
        return any(s.status == AgentStatus.FAILED for _, s in self.agent_states)

    def deciding_agent(self) -> Optional[int]:
        deciding = [k for k, s in self.agent_states if s.status == AgentStatus.DECIDING]
        return min(deciding) if deciding else None

    def restricted_to_departed(self) -> "SystemState":
        return replace(self, population=self.departed)


def initial_state(instance: Instance, population: Optional[Iterable[int]] = None) -> SystemState:
    members = frozenset(instance.agent_ids if population is None else population)
    return SystemState(
        agent_states=(),
        active=frozenset(),
        terminated=frozenset(),
        observed=frozenset(),
        observed_at=(),
        clock=0.0,
        population=members,
    )


def _with_agent(state: SystemState, agent_id: int, agent_state: AgentState) -> Tuple[Tuple[int, AgentState], ...]:
    others = [(k, s) for k, s in state.agent_states if k != agent_id]
    others.append((agent_id, agent_state))
    return tuple(sorted(others, key=lambda item: item[0]))


def _with_observation(state: SystemState, station: int, time: float) -> Tuple[FrozenSet[int], Tuple[Tuple[int, float], ...]]:
    times = dict(state.observed_at)
    times[station] = time
    return state.observed | {station}, tuple(sorted(times.items()))


def next_event(state: SystemState, instance: Instance) -> Optional[Event]:
    """Next decision epoch ordered by (time, agent id)"""
    candidates = []
    for agent_id in state.population:
        agent_state = state.get(agent_id)
        if agent_state is None:
            candidates.append(Event(instance.agent(agent_id).t0, agent_id, "depart"))
        elif agent_state.status == AgentStatus.EN_ROUTE:
            candidates.append(Event(agent_state.arrival, agent_id, "arrive"))
    if not candidates:
        return None
    return min(candidates, key=lambda e: (e.time, e.agent))


def reachable_actions(state: SystemState, agent: AgentSpec, instance: Instance) -> FrozenSet[int]:
    """Stations the deciding agent may visit next"""
    agent_state = state.get(agent.id)
    if agent_state is None:
        return frozenset()
    now = agent_state.arrival
    elapsed = now - agent.t0
    times = state.observation_times()
    graph = instance.graph
    feasible = set()
    for station in range(graph.n_stations):
        if station in agent_state.history:
            continue
        if station in times and not instance.readmitted(station, times[station], now):
            continue
        if not instance.in_radius(agent, station):
            continue
        if elapsed + graph.time(agent_state.station, station) <= agent.budget + TIME_EPS:
            feasible.add(station)
    return frozenset(feasible)


def arrival_probability(state: SystemState, agent_id: int, instance: Instance) -> float:
    """Probability that an en-route agent finds its target available"""
    agent_state = state.get(agent_id)
    return instance.effective_probability(
        agent_state.station, agent_state.arrival, state.observation_times()
    )


def _terminal_charge(state: SystemState, instance: Instance) -> float:
    if state.is_terminal and state.failed_any:
        return instance.beta_global
    return 0.0


def observe(
    state: SystemState, agent_id: int, available: Optional[bool], instance: Instance
) -> Tuple[SystemState, float]:
    """Process a departure (``available`` is None) or an arrival observation"""
    agent = instance.agent(agent_id)
    agent_state = state.get(agent_id)

    if agent_state is None:
        if available is not None:
            raise TransitionError(f"agent {agent_id} has not departed; nothing to observe")
        departed = AgentState(station=agent.start, arrival=agent.t0, status=AgentStatus.DECIDING)
        return (
            replace(
                state,
                agent_states=_with_agent(state, agent_id, departed),
                active=state.active | {agent_id},
                clock=max(state.clock, agent.t0),
            ),
            0.0,
        )

    if agent_state.status.is_absorbing:
        raise TransitionError(f"agent {agent_id} already terminated ({agent_state.status.name})")
    if agent_state.status != AgentStatus.EN_ROUTE:
        raise TransitionError(f"agent {agent_id} is not awaiting an observation")
    if available is None:
        raise TransitionError(f"arrival of agent {agent_id} needs an availability bit")

    station = agent_state.station
    now = agent_state.arrival
    times = state.observation_times()
    if available and station in times and not instance.recovery_enabled:
        raise TransitionError(f"station {station} was observed occupied and cannot be available")

    observed, observed_at = _with_observation(state, station, now)
    if available:
        found = replace(agent_state, status=AgentStatus.FOUND)
        next_state = replace(
            state,
            agent_states=_with_agent(state, agent_id, found),
            active=state.active - {agent_id},
            terminated=state.terminated | {agent_id},
            observed=observed,
            observed_at=observed_at,
            clock=max(state.clock, now),
        )
        return next_state, agent.gamma(station) + _terminal_charge(next_state, instance)

    deciding = replace(agent_state, status=AgentStatus.DECIDING)
    next_state = replace(
        state,
        agent_states=_with_agent(state, agent_id, deciding),
        observed=observed,
        observed_at=observed_at,
        clock=max(state.clock, now),
    )
    return next_state, 0.0


def decide(
    state: SystemState, agent_id: int, action: Optional[int], instance: Instance
) -> Tuple[SystemState, float]:
    """Apply the deciding agent's action (``None`` terminates unsuccessfully)"""
    agent = instance.agent(agent_id)
    agent_state = state.get(agent_id)
    if agent_state is None or agent_state.status != AgentStatus.DECIDING:
        raise TransitionError(f"agent {agent_id} is not deciding")

    feasible = reachable_actions(state, agent, instance)
    if action is None:
        if feasible:
            logger.debug(f"Agent {agent_id} gives up with {len(feasible)} reachable stations")
        failed = replace(agent_state, status=AgentStatus.FAILED)
        next_state = replace(
            state,
            agent_states=_with_agent(state, agent_id, failed),
            active=state.active - {agent_id},
            terminated=state.terminated | {agent_id},
        )
        return next_state, agent.penalty + _terminal_charge(next_state, instance)

    if action not in feasible:
        if action in state.observed:
            raise TransitionError(f"station {action} was already observed")
        raise TransitionError(f"station {action} is not reachable for agent {agent_id}")

    leg = instance.graph.time(agent_state.station, action)
    moving = AgentState(
        station=action,
        arrival=agent_state.arrival + leg,
        status=AgentStatus.EN_ROUTE,
        history=agent_state.history + (action,),
    )
    return replace(state, agent_states=_with_agent(state, agent_id, moving)), leg


def apply_transition(
    state: SystemState,
    agent_id: int,
    action: Optional[int],
    availability_observed: Optional[int],
    instance: Instance,
) -> Tuple[SystemState, float]:
    """
    One decision epoch for ``agent_id``: observation (if pending) then action

    Returns:
        (next_state, immediate_cost) where the cost includes the global penalty
        when the transition terminates the episode with a failed agent
    """
    cost = 0.0
    agent_state = state.get(agent_id)
    if agent_state is None or agent_state.status != AgentStatus.DECIDING:
        bit = None if availability_observed is None else bool(availability_observed)
        state, cost = observe(state, agent_id, bit, instance)
        if state.get(agent_id).status == AgentStatus.FOUND:
            if action is not None:
                raise TransitionError(f"agent {agent_id} found a station; no further action")
            return state, cost
    elif availability_observed is not None:
        raise TransitionError(f"agent {agent_id} already observed its station")
    state, step = decide(state, agent_id, action, instance)
    return state, cost + step


DecisionRule = Callable[[SystemState, int], Optional[int]]


def expected_cost(
    state: SystemState,
    instance: Instance,
    rule: Optional[DecisionRule] = None,
    horizon: Optional[int] = None,
) -> float:
    """
    Expected future cost from ``state`` by full expansion of the decision tree

    Args:
        state: Starting state; a pending decision belongs to the current epoch
        instance: Problem instance
        rule: Decision rule applied at every decision; ``None`` minimizes over
            all reachable actions (exact optimum)
        horizon: Number of further epochs (departures/observations) to expand;
            truncated branches contribute nothing. ``None`` expands to termination

    Returns:
        Expected sum of immediate costs incurred after ``state``
    """
    memo: Dict[Tuple[SystemState, Optional[int]], float] = {}

    def settle(x: SystemState, remaining: Optional[int]) -> float:
        if x.is_terminal:
            return 0.0
        deciding = x.deciding_agent()
        if deciding is None:
            return value(x, remaining)
        if rule is not None:
            nxt, cost = decide(x, deciding, rule(x, deciding), instance)
            return cost + value(nxt, remaining)
        actions = sorted(reachable_actions(x, instance.agent(deciding), instance))
        best = math.inf
        for action in actions or [None]:
            nxt, cost = decide(x, deciding, action, instance)
            best = min(best, cost + value(nxt, remaining))
        return best

    def value(x: SystemState, remaining: Optional[int]) -> float:
        if x.is_terminal or remaining == 0:
            return 0.0
        key = (x, remaining)
        if key in memo:
            return memo[key]
        if x.deciding_agent() is not None:
            result = settle(x, remaining)
        else:
            event = next_event(x, instance)
            left = None if remaining is None else remaining - 1
            if event is None:
                result = 0.0
            elif event.kind == "depart":
                nxt, cost = observe(x, event.agent, None, instance)
                result = cost + settle(nxt, left)
            else:
                q = arrival_probability(x, event.agent, instance)
                result = 0.0
                if q > 0.0:
                    nxt, cost = observe(x, event.agent, True, instance)
                    result += q * (cost + settle(nxt, left))
                if q < 1.0:
                    nxt, cost = observe(x, event.agent, False, instance)
                    result += (1.0 - q) * (cost + settle(nxt, left))
        memo[key] = result
        return result

    return value(state, horizon)
