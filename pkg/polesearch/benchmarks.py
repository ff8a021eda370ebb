"""
Benchmarks: myopic greedy search and the perfect-information offline assignment
"""

import logging
from dataclasses import dataclass
from typing import Dict, Iterable, Mapping, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .model import AgentSpec, DecisionRule, Instance, StationGraph, SystemState, reachable_actions
from .utils import TIME_EPS

logger = logging.getLogger(__name__)


def greedy_decide(
    agent: AgentSpec,
    current: int,
    elapsed: float,
    candidates: Iterable[int],
    base_p: Mapping[int, float],
    graph: StationGraph,
) -> Optional[int]:
    """
    Myopic choice: argmin of travel(current, v) + (1 - p_v) * penalty

    ``candidates`` must already be filtered for budget, radius and whatever
    observations the setting exposes. Ties go to the smaller station id.
    """
    best = None
    best_key = None
    for station in candidates:
        if elapsed + graph.time(current, station) > agent.budget + TIME_EPS:
            continue
        key = (graph.time(current, station) + (1.0 - base_p[station]) * agent.penalty, station)
        if best_key is None or key < best_key:
            best, best_key = station, key
    return best


def greedy_rule(instance: Instance) -> DecisionRule:
    """Greedy decision rule over the centralized state (all observations shared)"""

    def rule(state: SystemState, agent_id: int) -> Optional[int]:
        agent = instance.agent(agent_id)
        agent_state = state.get(agent_id)
        candidates = reachable_actions(state, agent, instance)
        times = state.observation_times()
        probabilities = {
            v: instance.effective_probability(v, agent_state.arrival, times) for v in candidates
        }
        return greedy_decide(
            agent,
            agent_state.station,
            agent_state.arrival - agent.t0,
            sorted(candidates),
            probabilities,
            instance.graph,
        )

    return rule


@dataclass
class OfflineResult:
    """Offline assignment outcome; ``assignment`` maps agent id to station or None"""

    assignment: Dict[int, Optional[int]]
    per_agent: Dict[int, float]
    total: float


def offline_assignment(
    agents: Sequence[AgentSpec],
    realization: Sequence[bool],
    instance: Instance,
) -> OfflineResult:
    """
    Minimum-cost assignment of agents to available stations with full information

    Agents connect to available stations within radius and budget at their
    direct travel time. Dummy stations (one per agent, weight = the agent's
    penalty) absorb agents left without a station and dummy agents (weight 0)
    absorb surplus stations, making the cost matrix square.

    Args:
        agents: Agents to assign
        realization: Availability bit per station
        instance: Problem instance

    Returns:
        OfflineResult with per-agent travel or penalty and their total
    """
    graph = instance.graph
    available = [v for v in range(graph.n_stations) if realization[v]]
    n_agents, n_avail = len(agents), len(available)
    size = n_agents + n_avail
    if size == 0:
        return OfflineResult({}, {}, 0.0)

    cost = np.zeros((size, size))
    cost[:n_agents, :n_avail] = np.inf
    for row, agent in enumerate(agents):
        for col, station in enumerate(available):
            leg = graph.time(agent.start, station)
            if instance.in_radius(agent, station) and leg <= agent.budget + TIME_EPS:
                cost[row, col] = leg
        cost[row, n_avail:] = agent.penalty

    rows, cols = linear_sum_assignment(cost)
    assignment: Dict[int, Optional[int]] = {}
    per_agent: Dict[int, float] = {}
    for row, col in zip(rows, cols):
        if row >= n_agents:
            continue
        agent = agents[row]
        assignment[agent.id] = available[col] if col < n_avail else None
        per_agent[agent.id] = float(cost[row, col])
    return OfflineResult(assignment, per_agent, float(sum(per_agent.values())))
