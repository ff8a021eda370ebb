"""
Static decentralized planners

Each request is planned once at departure, in departure order, from what the
shared board exposes to the setting: nothing (DEC), observed occupied
stations (DEC-O), prior agents' intentions (DEC-I) or both (DEC-IO).
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

from .base import Setting, TerminalMode
from .config import PlannerConfig
from .exceptions import ConfigurationError
from .label_search import lh_search
from .model import AgentSpec, Instance, SearchPolicy
from .probability import AvailabilityContext, evaluate_policy_set, system_cost

logger = logging.getLogger(__name__)


@dataclass
class SharedBoard:
    """
    Information shared between requests

    ``observations`` maps a station to the time it was last seen occupied
    (claims count as occupied observations). ``intentions`` are the plans of
    prior agents in departure order. ``terminated`` holds agents confirmed to
    have finished their search.
    """

    observations: Dict[int, float] = field(default_factory=dict)
    intentions: List[SearchPolicy] = field(default_factory=list)
    terminated: Set[int] = field(default_factory=set)

    def observe(self, station: int, time: float) -> None:
        self.observations[station] = time

    def publish(self, policy: SearchPolicy) -> None:
        self.intentions.append(policy)

    def observations_until(self, now: float) -> Dict[int, float]:
        return {v: t for v, t in self.observations.items() if t <= now}


def truncate_intentions(
    policies: Sequence[SearchPolicy],
    now: float,
    terminated: Iterable[int] = (),
) -> List[SearchPolicy]:
    """
    Keep only the parts of prior plans still ahead at ``now``

    Visits planned before ``now`` are dropped; policies of terminated agents
    and policies left without visits are removed entirely.
    """
    done = set(terminated)
    truncated = []
    for policy in policies:
        if policy.agent in done:
            continue
        remaining = tuple(v for v in policy.visits if v.planned_arrival >= now)
        if not remaining:
            continue
        if len(remaining) == len(policy.visits):
            truncated.append(policy)
            continue
        # the remaining path starts at the last visit already behind
        last = policy.visits[len(policy.visits) - len(remaining) - 1]
        truncated.append(
            SearchPolicy(
                agent=policy.agent,
                visits=remaining,
                cost=policy.cost,
                origin=last.station,
                start_time=last.planned_arrival,
            )
        )
    return truncated


def visible_stations(
    instance: Instance, observations: Mapping[int, float], now: float
) -> Tuple[Set[int], Dict[int, Tuple[float, float]]]:
    """
    Stations removed from the action space and the re-admitted ones

    Without recovery every observed station is removed. With recovery, stations
    observed longer than the threshold ago are re-admitted; they are returned
    as ``{station: (mu, observed_at)}`` so the availability context can
    evaluate the recovered probability at each planned arrival.
    """
    excluded = set()
    recovering = {}
    for station, seen in observations.items():
        if instance.readmitted(station, seen, now):
            recovering[station] = (instance.graph.mu(station), seen)
        else:
            excluded.add(station)
    return excluded, recovering


def select_collaborative(
    candidates: Sequence[SearchPolicy], priors: Sequence[SearchPolicy], beta_global: float
) -> SearchPolicy:
    """Candidate minimizing the joint cost of the prior policies plus itself"""
    best, best_cost = None, float("inf")
    for candidate in candidates:
        joint = system_cost(list(priors) + [candidate], beta_global)
        if joint < best_cost:
            best, best_cost = candidate, joint
    return best


def plan_request(
    agent: AgentSpec,
    board: SharedBoard,
    instance: Instance,
    setting: Setting,
    collaborative: Optional[bool] = None,
    n_best: Optional[int] = None,
    config: Optional[PlannerConfig] = None,
) -> SearchPolicy:
    """
    Plan one search request under a static setting

    Args:
        agent: Requesting agent, planning at its departure time
        board: Shared information available at departure
        instance: Problem instance
        setting: One of DEC, DEC-O, DEC-I(-c), DEC-IO(-c)
        collaborative: Pick the candidate minimizing joint cost; defaults to the
            setting's own flag
        n_best: Candidates considered when collaborative
        config: Planner configuration

    Returns:
        The selected search policy (zero visits when nothing is reachable)
    """
    config = config or PlannerConfig()
    setting = Setting(setting)
    if not setting.is_static:
        raise ConfigurationError(f"{setting.value} is not a static setting")
    collaborative = setting.is_collaborative if collaborative is None else collaborative
    n_best = config.n_best if n_best is None else n_best
    now = agent.t0

    excluded: Set[int] = set()
    recovering: Dict[int, Tuple[float, float]] = {}
    base_p = instance.graph.base_probabilities()
    if setting.shares_observations:
        excluded, recovering = visible_stations(instance, board.observations_until(now), now)

    priors: List[SearchPolicy] = []
    if setting.shares_intentions:
        priors = list(board.intentions)
        if setting.shares_observations:
            priors = truncate_intentions(priors, now, board.terminated)
        priors, _ = evaluate_policy_set(priors, instance, recovery=recovering)
        ctx = AvailabilityContext.dependent(base_p, priors, recovering)
    else:
        ctx = AvailabilityContext.independent(base_p, recovering)

    candidates = lh_search(
        agent,
        instance,
        ctx,
        n_best=n_best if collaborative else 1,
        excluded=excluded,
        terminal_mode=TerminalMode(config.terminal_mode),
        use_dominance=config.dominance,
    )
    if collaborative and setting.shares_intentions:
        chosen = select_collaborative(candidates, priors, instance.beta_global)
    else:
        chosen = candidates[0]
    logger.debug(
        f"{setting.value}: agent {agent.id} plans {list(chosen.stations)} "
        f"(alpha={chosen.cost.alpha:.3f}, rho={chosen.cost.rho:.3f})"
    )
    return chosen


def plan_all(
    instance: Instance,
    setting: Setting,
    config: Optional[PlannerConfig] = None,
    board: Optional[SharedBoard] = None,
) -> List[SearchPolicy]:
    """Plan every request in departure order, publishing each plan to the board"""
    board = board if board is not None else SharedBoard()
    plans = []
    for agent in instance.agents:
        policy = plan_request(agent, board, instance, setting, config=config)
        board.publish(policy)
        plans.append(policy)
    return plans
