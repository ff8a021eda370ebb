"""
Dynamic planners

Centralized rollout over a greedy base policy (CEN-RO), centralized
label-based re-planning (CEN-LHRO) and decentralized re-planning on shared
observations (DEC-O-d). Every decide function is deterministic.
"""

import logging
from typing import Dict, Iterable, Mapping, Optional, Tuple, Union

from .base import TerminalMode
from .benchmarks import greedy_rule
from .config import PlannerConfig
from .label_search import lh_search
from .model import (
    AgentSpec,
    DecisionRule,
    Instance,
    SearchPolicy,
    SystemState,
    decide,
    expected_cost,
    reachable_actions,
)
from .probability import AvailabilityContext, evaluate_policy_set
from .static_planners import truncate_intentions, visible_stations

logger = logging.getLogger(__name__)

PolicyMap = Dict[int, SearchPolicy]


def _lookahead_state(state: SystemState, include_pending: bool) -> SystemState:
    return state if include_pending else state.restricted_to_departed()


def greedy_base_cost(
    state: SystemState, instance: Instance, K: int, include_pending: bool = False
) -> float:
    """
    Expected cost-to-go of the greedy base policy over ``K`` decision epochs

    A pending decision in ``state`` belongs to the current epoch. Branches
    truncated by the horizon contribute nothing further, so the global penalty
    only enters through terminations reached within the horizon.
    """
    if K < 0:
        raise ValueError("K must be non-negative")
    return expected_cost(
        _lookahead_state(state, include_pending), instance, greedy_rule(instance), horizon=K
    )


def rollout_decide(
    state: SystemState, instance: Instance, K: int, include_pending: bool = False
) -> Optional[int]:
    """
    One-step lookahead with the greedy base policy as cost-to-go approximation

    Args:
        state: State with a deciding agent
        instance: Problem instance
        K: Decision epochs simulated after the candidate move; at 0 the
            successor states are valued myopically (success 0, failure the
            agent's penalty)
        include_pending: Also anticipate agents that have not departed

    Returns:
        Station minimizing travel plus expected cost-to-go (ties by smaller
        id), or None when the deciding agent has no reachable station
    """
    deciding = state.deciding_agent()
    if deciding is None:
        return None
    agent = instance.agent(deciding)
    actions = sorted(reachable_actions(state, agent, instance))
    if not actions:
        return None

    agent_state = state.get(deciding)
    times = state.observation_times()
    root = _lookahead_state(state, include_pending)
    rule = greedy_rule(instance)

    best, best_q = None, float("inf")
    for station in actions:
        if K == 0:
            p = instance.effective_probability(station, agent_state.arrival, times)
            q = instance.graph.time(agent_state.station, station) + (1.0 - p) * agent.penalty
        else:
            moved, leg = decide(root, deciding, station, instance)
            q = leg + expected_cost(moved, instance, rule, horizon=K)
        if q < best_q:
            best, best_q = station, q
    logger.debug(f"Rollout: agent {deciding} -> station {best} (Q={best_q:.4f})")
    return best


def rollout_rule(instance: Instance, K: int, include_pending: bool = False) -> DecisionRule:
    """Rollout wrapped as a decision rule for exact evaluation"""

    def rule(state: SystemState, agent_id: int) -> Optional[int]:
        return rollout_decide(state, instance, K, include_pending)

    return rule


def lhro_decide(
    state: SystemState,
    instance: Instance,
    Pi: Mapping[int, SearchPolicy],
    n_best: Optional[int] = None,
    config: Optional[PlannerConfig] = None,
) -> Tuple[Optional[int], PolicyMap]:
    """
    Re-plan the deciding agent and pick the candidate minimizing joint cost

    The deciding agent's stale policy is dropped from ``Pi``; label setting
    runs from its current node on the stations not excluded by observations;
    each candidate is costed together with the other agents' remaining plans.

    Returns:
        (first station of the chosen candidate or None, updated policy map)
    """
    config = config or PlannerConfig()
    n_best = config.n_best if n_best is None else n_best
    deciding = state.deciding_agent()
    policies: PolicyMap = dict(Pi)
    if deciding is None:
        return None, policies
    policies.pop(deciding, None)

    agent = instance.agent(deciding)
    agent_state = state.get(deciding)
    now = agent_state.arrival
    excluded, recovering = visible_stations(instance, state.observation_times(), now)
    excluded.update(agent_state.history)
    base_p = instance.graph.base_probabilities()

    candidates = lh_search(
        agent,
        instance,
        AvailabilityContext.independent(base_p, recovering),
        n_best=n_best,
        origin=agent_state.station,
        elapsed=now - agent.t0,
        excluded=excluded,
        terminal_mode=TerminalMode(config.terminal_mode),
        use_dominance=config.dominance,
    )
    candidates = [c for c in candidates if c.visits]
    if not candidates:
        return None, policies

    others = [policies[k] for k in sorted(policies, key=lambda k: (instance.agent(k).t0, k))]
    others = truncate_intentions(others, now, state.terminated)
    best, best_cost = None, float("inf")
    for candidate in candidates:
        _, joint = evaluate_policy_set(others + [candidate], instance, recovery=recovering)
        if joint < best_cost:
            best, best_cost = candidate, joint

    policies[deciding] = best
    logger.debug(
        f"LH-RO: agent {deciding} -> {list(best.stations)} (joint cost {best_cost:.4f})"
    )
    return best.first_station, policies


def dec_o_d_decide(
    agent: AgentSpec,
    current_node: int,
    elapsed: float,
    observations: Union[Mapping[int, float], Iterable[int]],
    instance: Instance,
    config: Optional[PlannerConfig] = None,
    visited: Iterable[int] = (),
) -> Optional[int]:
    """
    Next station of a fresh DEC-O plan from the agent's current position

    ``observations`` maps stations to the time they were seen occupied; a
    plain collection of station ids counts as observed right now.
    """
    config = config or PlannerConfig()
    now = agent.t0 + elapsed
    if not isinstance(observations, Mapping):
        observations = {station: now for station in observations}
    excluded, recovering = visible_stations(instance, observations, now)
    excluded.update(visited)
    best = lh_search(
        agent,
        instance,
        AvailabilityContext.independent(instance.graph.base_probabilities(), recovering),
        n_best=1,
        origin=current_node,
        elapsed=elapsed,
        excluded=excluded,
        terminal_mode=TerminalMode(config.terminal_mode),
        use_dominance=config.dominance,
    )[0]
    return best.first_station
