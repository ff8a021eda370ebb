"""
Exhaustive reference computations for tiny instances

Slow and trusted: exact expected cost of fixed policy sets by enumerating
every availability realization, exact single-agent optima by enumerating
every visit sequence, and exact MDP values by full backward induction.
"""

import itertools
import logging
from typing import Iterator, List, Optional, Sequence, Tuple

from .exceptions import OracleSizeError
from .label_search import candidate_cost_ordering
from .model import (
    AgentSpec,
    DecisionRule,
    Instance,
    SearchPolicy,
    expected_cost,
    initial_state,
)
from .probability import AvailabilityContext, build_policy
from .simulation import realized_cost, replay_fixed_policies
from .utils import TIME_EPS

logger = logging.getLogger(__name__)

MAX_REALIZATION_STATIONS = 12
MAX_SEQUENCE_STATIONS = 8
MAX_MDP_STATIONS = 5
MAX_MDP_AGENTS = 3


def _check_size(instance: Instance, stations: int, agents: Optional[int] = None) -> None:
    if instance.graph.n_stations > stations:
        raise OracleSizeError(
            f"instance has {instance.graph.n_stations} stations, limit is {stations}"
        )
    if agents is not None and len(instance.agents) > agents:
        raise OracleSizeError(f"instance has {len(instance.agents)} agents, limit is {agents}")


def realizations(instance: Instance) -> Iterator[Tuple[Tuple[bool, ...], float]]:
    """Every availability vector with its probability"""
    probabilities = [s.p for s in instance.graph.stations]
    for bits in itertools.product((False, True), repeat=len(probabilities)):
        weight = 1.0
        for bit, p in zip(bits, probabilities):
            weight *= p if bit else 1.0 - p
        yield bits, weight


def exact_policy_set_value(policies: Sequence[SearchPolicy], instance: Instance) -> float:
    """
    Expected realized cost of fixed policies over all availability realizations

    Each realization is replayed with first-arriver claiming, charging travel,
    usage costs, individual penalties and the global penalty.
    """
    _check_size(instance, MAX_REALIZATION_STATIONS)
    total = 0.0
    for bits, weight in realizations(instance):
        if weight == 0.0:
            continue
        record = replay_fixed_policies(policies, bits, instance)
        total += weight * realized_cost(record, instance)
    return total


def feasible_sequences(agent: AgentSpec, instance: Instance) -> Iterator[Tuple[int, ...]]:
    """All non-empty visit sequences within radius and budget (depth-first, id order)"""
    graph = instance.graph
    targets = instance.stations_in_radius(agent)

    def extend(node: int, elapsed: float, prefix: Tuple[int, ...]):
        for station in targets:
            if station in prefix:
                continue
            t = elapsed + graph.time(node, station)
            if t > agent.budget + TIME_EPS:
                continue
            sequence = prefix + (station,)
            yield sequence
            yield from extend(station, t, sequence)

    yield from extend(agent.start, 0.0, ())


def exact_single_optimum(
    agent: AgentSpec,
    instance: Instance,
    ctx: Optional[AvailabilityContext] = None,
) -> SearchPolicy:
    """Minimum-alpha policy over every feasible visit sequence"""
    _check_size(instance, MAX_SEQUENCE_STATIONS)
    ctx = ctx or AvailabilityContext.independent(instance.graph.base_probabilities())
    policies = [
        build_policy(seq, agent, ctx, instance, check=False)
        for seq in feasible_sequences(agent, instance)
    ]
    if not policies:
        return build_policy((), agent, ctx, instance)
    return candidate_cost_ordering(policies)[0]


def exact_mdp_value(instance: Instance) -> float:
    """Optimal expected cost of the centralized MDP from the initial state"""
    _check_size(instance, MAX_MDP_STATIONS, MAX_MDP_AGENTS)
    return expected_cost(initial_state(instance), instance)


def exact_rule_value(instance: Instance, rule: DecisionRule) -> float:
    """Exact expected cost of applying ``rule`` at every decision epoch"""
    _check_size(instance, MAX_MDP_STATIONS, MAX_MDP_AGENTS)
    return expected_cost(initial_state(instance), instance, rule)


def all_policy_sets(instance: Instance) -> List[List[SearchPolicy]]:
    """Every combination of feasible single-agent sequences (independent costing)"""
    ctx = AvailabilityContext.independent(instance.graph.base_probabilities())
    options = []
    for agent in instance.agents:
        sequences = list(feasible_sequences(agent, instance)) or [()]
        options.append([build_policy(seq, agent, ctx, instance, check=False) for seq in sequences])
    return [list(combo) for combo in itertools.product(*options)]
