"""
Closed-form probability and cost algebra for search policies

Prefix success probabilities, user-dependent station availabilities, the
per-policy cost decomposition (A, rho, alpha), the joint system cost and the
exponential recovery functions.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .base import AvailabilityMode
from .exceptions import InfeasiblePolicyError
from .model import AgentSpec, CostTriple, Instance, SearchPolicy, Visit
from .utils import TIME_EPS, product

logger = logging.getLogger(__name__)


@dataclass
class AvailabilityContext:
    """
    Availability model seen by a planning agent

    In dependent mode, the availability of a station is discounted by the
    success probabilities of the ``prior_policies`` (ordered by departure)
    that reach it no later than the query time. Each prior policy is in turn
    evaluated against the policies preceding it.

    ``recovery`` maps stations seen occupied but re-admitted to
    ``(mu, observed_at)``; their availability recovers with the time elapsed
    between the observation and the visit.
    """

    base_p: Mapping[int, float]
    prior_policies: Tuple[SearchPolicy, ...] = ()
    mode: AvailabilityMode = AvailabilityMode.INDEPENDENT
    recovery: Mapping[int, Tuple[float, float]] = field(default_factory=dict)
    _rho_cache: Dict[Tuple[int, float], float] = field(default_factory=dict, repr=False)

    @classmethod
    def independent(
        cls,
        base_p: Mapping[int, float],
        recovery: Optional[Mapping[int, Tuple[float, float]]] = None,
    ) -> "AvailabilityContext":
        return cls(base_p=dict(base_p), recovery=dict(recovery or {}))

    @classmethod
    def dependent(
        cls,
        base_p: Mapping[int, float],
        prior_policies: Sequence[SearchPolicy],
        recovery: Optional[Mapping[int, Tuple[float, float]]] = None,
    ) -> "AvailabilityContext":
        return cls(
            base_p=dict(base_p),
            prior_policies=tuple(prior_policies),
            mode=AvailabilityMode.DEPENDENT,
            recovery=dict(recovery or {}),
        )

    @property
    def is_dependent(self) -> bool:
        return self.mode == AvailabilityMode.DEPENDENT

    def base(self, station: int, t: float) -> float:
        """Availability of ``station`` at ``t`` before any discount by prior policies"""
        if station in self.recovery:
            mu, observed_at = self.recovery[station]
            return recovered_occupied_prob(self.base_p[station], mu, max(0.0, t - observed_at))
        return self.base_p[station]

    def probability(self, station: int, t: float) -> float:
        """Availability used for a visit of ``station`` at absolute time ``t``"""
        if not self.is_dependent:
            return self.base(station, t)
        return self._discounted(station, t, len(self.prior_policies))

    def _discounted(self, station: int, t: float, upto: int) -> float:
        value = self.base(station, t)
        for index in range(upto):
            arrival = self.prior_policies[index].arrival_at(station)
            if arrival is not None and arrival <= t + TIME_EPS:
                value *= self._prior_prefix(index, arrival)
        return value

    def _prior_prefix(self, index: int, t: float) -> float:
        key = (index, t)
        if key not in self._rho_cache:
            policy = self.prior_policies[index]
            failure = 1.0
            for visit in policy.visits:
                if visit.planned_arrival > t + TIME_EPS:
                    break
                failure *= 1.0 - self._discounted(visit.station, visit.planned_arrival, index)
            self._rho_cache[key] = 1.0 - failure
        return self._rho_cache[key]


def prefix_success(policy: SearchPolicy, t: float, ctx: AvailabilityContext) -> float:
    """
    Probability that ``policy`` has found an available station by time ``t``

    Args:
        policy: Policy whose visits are time-ranked
        t: Absolute time in minutes
        ctx: Availability context of the policy's agent

    Returns:
        1 - prod(1 - p(v)) over visits planned no later than ``t``
    """
    failure = 1.0
    for visit in policy.visits:
        if visit.planned_arrival > t + TIME_EPS:
            break
        failure *= 1.0 - ctx.probability(visit.station, visit.planned_arrival)
    return 1.0 - failure


def user_dependent_availability(station: int, t: float, ctx: AvailabilityContext) -> float:
    """Availability of ``station`` at ``t`` discounted by all prior policies of ``ctx``"""
    if not ctx.is_dependent:
        raise ValueError("user-dependent availability requires a dependent context")
    return ctx.probability(station, t)


def sequence_cost(
    legs: Sequence[float],
    probabilities: Sequence[float],
    gammas: Sequence[float],
    penalty: float,
) -> CostTriple:
    """
    Cost triple of a visit sequence from its legs and per-visit availabilities

    ``legs[k]`` is the travel time into the k-th visit. Travel of a leg is paid
    only if all earlier visits failed; usage cost only if the visit succeeds.
    """
    partial = 0.0
    failure = 1.0
    for leg, p, gamma in zip(legs, probabilities, gammas):
        partial += leg * failure + gamma * p * failure
        failure *= 1.0 - p
    rho = 1.0 - failure
    return CostTriple(A=partial, rho=rho, alpha=partial + failure * penalty)


def check_feasible(
    stations: Sequence[int],
    agent: AgentSpec,
    instance: Instance,
    origin: int,
    elapsed: float,
) -> None:
    """Raise :class:`InfeasiblePolicyError` on repeats, radius or budget violations"""
    errors = []
    if len(set(stations)) != len(stations):
        errors.append("station repeated")
    node = origin
    for station in stations:
        if not 0 <= station < instance.graph.n_stations:
            errors.append(f"unknown station {station}")
            break
        if not instance.in_radius(agent, station):
            errors.append(f"station {station} outside radius")
        elapsed += instance.graph.time(node, station)
        if elapsed > agent.budget + TIME_EPS:
            errors.append(f"budget exceeded at station {station}")
        node = station
    if errors:
        raise InfeasiblePolicyError(f"agent {agent.id}: " + "; ".join(errors))


def build_policy(
    stations: Sequence[int],
    agent: AgentSpec,
    ctx: AvailabilityContext,
    instance: Instance,
    origin: Optional[int] = None,
    start_time: Optional[float] = None,
    check: bool = True,
) -> SearchPolicy:
    """Construct a costed policy for ``agent`` visiting ``stations`` in order"""
    origin = agent.start if origin is None else origin
    start_time = agent.t0 if start_time is None else start_time
    stations = list(stations)
    if check:
        check_feasible(stations, agent, instance, origin, start_time - agent.t0)

    visits: List[Visit] = []
    legs: List[float] = []
    probabilities: List[float] = []
    node, clock = origin, start_time
    for station in stations:
        leg = instance.graph.time(node, station)
        clock += leg
        visits.append(Visit(station, clock))
        legs.append(leg)
        probabilities.append(ctx.probability(station, clock))
        node = station
    cost = sequence_cost(legs, probabilities, [agent.gamma(v) for v in stations], agent.penalty)
    return SearchPolicy(
        agent=agent.id,
        visits=tuple(visits),
        cost=cost,
        origin=origin,
        start_time=start_time,
    )


def policy_cost(
    stations: Sequence[int],
    agent: AgentSpec,
    ctx: AvailabilityContext,
    instance: Instance,
    origin: Optional[int] = None,
    start_time: Optional[float] = None,
) -> CostTriple:
    """(A, rho, alpha) of a feasible visit sequence"""
    return build_policy(stations, agent, ctx, instance, origin, start_time).cost


def system_cost(policies: Sequence[SearchPolicy], beta_global: float) -> float:
    """Joint cost: sum of alphas plus the global penalty weighted by P(any failure)"""
    if not policies:
        return 0.0
    total = sum(p.cost.alpha for p in policies)
    return total + (1.0 - product(p.cost.rho for p in policies)) * beta_global


def evaluate_policy_set(
    policies: Sequence[SearchPolicy],
    instance: Instance,
    mode: AvailabilityMode = AvailabilityMode.DEPENDENT,
    base_p: Optional[Mapping[int, float]] = None,
    recovery: Optional[Mapping[int, Tuple[float, float]]] = None,
) -> Tuple[List[SearchPolicy], float]:
    """
    Re-cost a set of policies, each against the ones listed before it

    Returns:
        (re-costed policies in input order, joint system cost)
    """
    base = dict(instance.graph.base_probabilities() if base_p is None else base_p)
    costed: List[SearchPolicy] = []
    for policy in policies:
        if mode == AvailabilityMode.DEPENDENT:
            ctx = AvailabilityContext.dependent(base, costed, recovery)
        else:
            ctx = AvailabilityContext.independent(base, recovery)
        costed.append(
            build_policy(
                policy.stations,
                instance.agent(policy.agent),
                ctx,
                instance,
                origin=policy.origin,
                start_time=policy.start_time,
                check=False,
            )
        )
    return costed, system_cost(costed, instance.beta_global)


def recovered_occupied_prob(p: float, mu: float, delta: float) -> float:
    """Availability of a station observed occupied ``delta`` minutes ago"""
    if delta < 0:
        raise ValueError(f"delta must be non-negative, got {delta}")
    if p <= 0.0:
        return 0.0
    return p * (1.0 - math.exp(-(mu / p) * delta))


def recovered_available_prob(p: float, mu: float, delta: float) -> float:
    """Availability of a station observed available ``delta`` minutes ago"""
    if delta < 0:
        raise ValueError(f"delta must be non-negative, got {delta}")
    if p <= 0.0:
        raise ValueError("recovered_available_prob is undefined for p = 0")
    return p + (1.0 - p) * math.exp(-(mu / p) * delta)


def gamma_transformed_travel(instance: Instance, agent: AgentSpec) -> np.ndarray:
    """
    Travel matrix with usage costs folded in: t(u, v) + p_v * gamma_v

    Costing a policy with these legs and zero usage costs reproduces the
    policy's cost with usage costs.
    """
    graph = instance.graph
    travel = np.array(graph.travel, dtype=float)
    for station in range(graph.n_stations):
        travel[:, station] += graph.p(station) * agent.gamma(station)
    return travel
