"""
Multi-label setting heuristic (LH) for single-agent search policies

Labels are partial policies propagated best-first from the agent's current
node. A label is pruned when another label at the same node is at least as
good in both failure probability and partial cost.
"""

import heapq
import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional

from .base import TerminalMode
from .model import AgentSpec, CostTriple, Instance, SearchPolicy, Visit
from .probability import AvailabilityContext
from .utils import TIME_EPS

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class Label:
    """Partial policy ending at ``node``; ``t`` is driving time since departure"""

    node: int
    t: float
    A: float
    rho: float
    alpha: float
    parent: Optional["Label"] = None
    visited: FrozenSet[int] = frozenset()
    seq: int = 0
    alive: bool = True

    def stations(self) -> List[int]:
        chain = []
        label = self
        while label.parent is not None:
            chain.append(label.node)
            label = label.parent
        chain.reverse()
        return chain


def root_label(agent: AgentSpec, node: Optional[int] = None, elapsed: float = 0.0) -> Label:
    """Empty partial policy at ``node`` (default: the agent's start)"""
    return Label(
        node=agent.start if node is None else node,
        t=elapsed,
        A=0.0,
        rho=0.0,
        alpha=agent.penalty,
    )


def propagate(
    label: Label,
    to: int,
    agent: AgentSpec,
    ctx: AvailabilityContext,
    instance: Instance,
    excluded: FrozenSet[int] = frozenset(),
) -> Optional[Label]:
    """
    Extend ``label`` by a visit of station ``to``

    Returns:
        The extended label, or None when the visit repeats a station, leaves
        the radius, exceeds the budget or targets an excluded station
    """
    if to in label.visited or to in excluded or to == label.node:
        return None
    if not instance.in_radius(agent, to):
        return None
    leg = instance.graph.time(label.node, to)
    t = label.t + leg
    if t > agent.budget + TIME_EPS:
        return None

    p = ctx.probability(to, agent.t0 + t)
    failure = 1.0 - label.rho
    partial = label.A + leg * failure + agent.gamma(to) * p * failure
    rho = 1.0 - failure * (1.0 - p)
    return Label(
        node=to,
        t=t,
        A=partial,
        rho=rho,
        alpha=partial + (1.0 - rho) * agent.penalty,
        parent=label,
        visited=label.visited | {to},
    )


def dominates(first: Label, second: Label) -> bool:
    """Whether ``first`` is at least as good as ``second`` in failure probability and partial cost"""
    if first.node != second.node:
        raise ValueError(f"labels at different nodes ({first.node} vs {second.node})")
    return (1.0 - first.rho) <= (1.0 - second.rho) and first.A <= second.A


def to_policy(label: Label, agent: AgentSpec) -> SearchPolicy:
    """Reconstruct the search policy described by ``label``"""
    visits = []
    chain = []
    node = label
    while node.parent is not None:
        chain.append(node)
        node = node.parent
    for step in reversed(chain):
        visits.append(Visit(step.node, agent.t0 + step.t))
    return SearchPolicy(
        agent=agent.id,
        visits=tuple(visits),
        cost=CostTriple(A=label.A, rho=label.rho, alpha=label.alpha),
        origin=node.node,
        start_time=agent.t0 + node.t,
    )


def candidate_cost_ordering(policies: Iterable[SearchPolicy]) -> List[SearchPolicy]:
    """Order candidates by alpha, then length, then station ids"""
    return sorted(policies, key=lambda p: (p.cost.alpha, len(p.visits), p.stations))


@dataclass
class SearchStats:
    created: int = 0
    pruned: int = 0
    popped: int = 0
    popped_keys: List[float] = field(default_factory=list)


class LabelSetting:
    """
    Best-first label setting for one agent

    Labels are popped by partial cost A (ties by alpha, then insertion
    order). With ``terminal_mode`` ANY_PREFIX every created label is a
    candidate policy; with DEAD_END only labels without a feasible successor.
    """

    def __init__(
        self,
        agent: AgentSpec,
        instance: Instance,
        ctx: AvailabilityContext,
        terminal_mode: TerminalMode = TerminalMode.ANY_PREFIX,
        use_dominance: bool = True,
        excluded: Iterable[int] = (),
    ):
        self.agent = agent
        self.instance = instance
        self.ctx = ctx
        self.terminal_mode = TerminalMode(terminal_mode)
        self.use_dominance = use_dominance
        self.excluded = frozenset(excluded)
        self.stats = SearchStats()
        self._pool: Dict[int, List[Label]] = {}
        self._counter = itertools.count()
        self._targets = [
            v
            for v in instance.stations_in_radius(agent)
            if v not in self.excluded
        ]

    def _admit(self, label: Label) -> bool:
        if not self.use_dominance:
            return True
        pool = self._pool.setdefault(label.node, [])
        for other in pool:
            if dominates(other, label):
                self.stats.pruned += 1
                return False
        survivors = []
        for other in pool:
            if dominates(label, other):
                other.alive = False
                self.stats.pruned += 1
            else:
                survivors.append(other)
        survivors.append(label)
        self._pool[label.node] = survivors
        return True

    def run(self, origin: Optional[int] = None, elapsed: float = 0.0) -> List[SearchPolicy]:
        """Run the search from ``origin`` after ``elapsed`` minutes; returns ordered candidates"""
        start = root_label(self.agent, origin, elapsed)
        start.seq = next(self._counter)
        heap = [(start.A, start.alpha, start.seq, start)]
        candidates: List[Label] = []
        targets = [v for v in self._targets if v != start.node]

        while heap:
            _, _, _, label = heapq.heappop(heap)
            if not label.alive:
                continue
            self.stats.popped += 1
            self.stats.popped_keys.append(label.A)

            extended = False
            for target in targets:
                successor = propagate(
                    label, target, self.agent, self.ctx, self.instance, self.excluded
                )
                if successor is None:
                    continue
                extended = True
                self.stats.created += 1
                successor.seq = next(self._counter)
                if not self._admit(successor):
                    continue
                heapq.heappush(heap, (successor.A, successor.alpha, successor.seq, successor))
                if self.terminal_mode == TerminalMode.ANY_PREFIX:
                    candidates.append(successor)

            if not extended and label.parent is not None and self.terminal_mode == TerminalMode.DEAD_END:
                candidates.append(label)

        policies = candidate_cost_ordering(to_policy(c, self.agent) for c in candidates if c.alive)
        if not policies:
            logger.debug(f"Agent {self.agent.id}: no reachable station, degenerate policy")
            policies = [to_policy(start, self.agent)]
        return policies


def lh_search(
    agent: AgentSpec,
    instance: Instance,
    ctx: AvailabilityContext,
    n_best: int = 1,
    origin: Optional[int] = None,
    elapsed: float = 0.0,
    excluded: Iterable[int] = (),
    terminal_mode: TerminalMode = TerminalMode.ANY_PREFIX,
    use_dominance: bool = True,
) -> List[SearchPolicy]:
    """
    Best (or n best) search policies for ``agent``

    Args:
        agent: Searching agent
        instance: Problem instance
        ctx: Availability context (independent or dependent)
        n_best: Number of candidates to return
        origin: Current node (default: the agent's start)
        elapsed: Minutes already spent since departure
        excluded: Stations removed from the action space
        terminal_mode: Which labels count as candidate policies
        use_dominance: Prune dominated labels

    Returns:
        Up to ``n_best`` policies ordered by alpha; a zero-visit policy with
        rho = 0 and alpha = penalty when no station is reachable
    """
    if n_best < 1:
        raise ValueError("n_best must be at least 1")
    search = LabelSetting(agent, instance, ctx, terminal_mode, use_dominance, excluded)
    return search.run(origin, elapsed)[:n_best]
