"""
Seeded Monte-Carlo evaluation of the search settings

Availability realizations are sampled once per instance and shared by every
setting. Each run is a discrete-event loop over departures and arrivals
ordered by (time, agent id); the first agent to reach an available station
claims it and the station reads occupied for everyone afterwards.
"""

import heapq
import logging
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Deque, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .base import PenaltyConvention, Setting
from .benchmarks import greedy_decide, greedy_rule, offline_assignment
from .config import PlannerConfig
from .exceptions import CellTimeoutError
from .dynamic_planners import PolicyMap, dec_o_d_decide, lhro_decide, rollout_decide
from .model import Instance, SearchPolicy, decide, initial_state, observe
from .static_planners import SharedBoard, plan_request
from .utils import array_digest

logger = logging.getLogger(__name__)

DEPART = 0
ARRIVE = 1


@dataclass(frozen=True)
class RealizationMatrix:
    """
    Availability draws per (run, station), shared across settings

    ``free_delay`` holds, for stations initially occupied, the minutes until
    they free up; ``hold_delay`` the minutes a claimed station stays occupied.
    Both are only drawn when recovery is enabled.
    """

    available: np.ndarray
    seed: int
    free_delay: Optional[np.ndarray] = None
    hold_delay: Optional[np.ndarray] = None

    @property
    def runs(self) -> int:
        return self.available.shape[0]

    @property
    def n_stations(self) -> int:
        return self.available.shape[1]

    def digest(self) -> str:
        return array_digest(self.available)

    def row(self, run: int) -> "StationLedger":
        return StationLedger(
            self.available[run],
            None if self.free_delay is None else self.free_delay[run],
            None if self.hold_delay is None else self.hold_delay[run],
        )


def sample_realizations(instance: Instance, runs: int, seed: int) -> RealizationMatrix:
    """
    Draw station availabilities for ``runs`` runs

    Station v is available with probability p_v, independently across stations
    and runs. Delays for the recovery model come from a separate stream so the
    availability bits do not depend on whether recovery is enabled.
    """
    if runs < 1:
        raise ValueError("runs must be at least 1")
    availability_seq, delay_seq = np.random.SeedSequence(seed).spawn(2)
    p = np.array([s.p for s in instance.graph.stations])
    rng = np.random.default_rng(availability_seq)
    available = rng.random((runs, len(p))) < p

    free_delay = hold_delay = None
    if instance.recovery_enabled:
        mu = np.array([s.mu for s in instance.graph.stations])
        delays = np.random.default_rng(delay_seq).standard_exponential((2, runs, len(p)))
        with np.errstate(divide="ignore"):
            scale = np.where(mu > 0, 1.0 / np.where(mu > 0, mu, 1.0), np.inf)
        free_delay = delays[0] * scale
        hold_delay = delays[1] * scale

    matrix = RealizationMatrix(available=available, seed=seed, free_delay=free_delay, hold_delay=hold_delay)
    logger.debug(f"Sampled {runs} realizations (seed={seed}, digest={matrix.digest()})")
    return matrix


class StationLedger:
    """Physical station occupancy during one run"""

    def __init__(
        self,
        available: Sequence[bool],
        free_delay: Optional[Sequence[float]] = None,
        hold_delay: Optional[Sequence[float]] = None,
    ):
        self.available = np.asarray(available, dtype=bool)
        self.free_delay = free_delay
        self.hold_delay = hold_delay
        self.claims: Dict[int, float] = {}

    def is_available(self, station: int, t: float) -> bool:
        if station in self.claims:
            if self.hold_delay is None:
                return False
            return t >= self.claims[station] + self.hold_delay[station]
        if self.available[station]:
            return True
        return self.free_delay is not None and t >= self.free_delay[station]

    def claim(self, station: int, t: float) -> None:
        self.claims[station] = t


@dataclass(frozen=True)
class AgentOutcome:
    agent: int
    search_time: float
    success: bool
    visited: Tuple[int, ...]
    final_station: Optional[int]
    usage_cost: float = 0.0


@dataclass(frozen=True)
class RunRecord:
    """Outcome of one run under one setting"""

    run: int
    setting: Setting
    outcomes: Tuple[AgentOutcome, ...]

    @property
    def any_failure(self) -> bool:
        return any(not o.success for o in self.outcomes)

    def outcome(self, agent_id: int) -> AgentOutcome:
        for outcome in self.outcomes:
            if outcome.agent == agent_id:
                return outcome
        raise KeyError(agent_id)


def realized_cost(
    record: RunRecord,
    instance: Instance,
    include_usage: bool = True,
    include_global: bool = True,
) -> float:
    """Realized cost of a run: search times, usage costs, penalties and the global penalty"""
    total = 0.0
    for outcome in record.outcomes:
        total += outcome.search_time
        if outcome.success:
            total += outcome.usage_cost if include_usage else 0.0
        else:
            total += instance.agent(outcome.agent).penalty
    if include_global and record.any_failure:
        total += instance.beta_global
    return total


@dataclass
class _AgentRun:
    node: int
    clock: float
    visited: List[int] = field(default_factory=list)
    plan: Deque = field(default_factory=deque)


class _Episode:
    """One run of one setting through the event loop"""

    def __init__(
        self,
        setting: Setting,
        instance: Instance,
        ledger: StationLedger,
        config: PlannerConfig,
        fixed_plans: Optional[Dict[int, SearchPolicy]] = None,
    ):
        self.setting = setting
        self.instance = instance
        self.ledger = ledger
        self.config = config
        self.fixed_plans = fixed_plans
        self.board = SharedBoard()
        self.state = initial_state(instance)
        self.policies: PolicyMap = {}
        self.agents: Dict[int, _AgentRun] = {}
        self.outcomes: Dict[int, AgentOutcome] = {}
        self.events: List[Tuple[float, int, int, int]] = []
        self.centralized = setting in (Setting.CEN_G, Setting.CEN_RO, Setting.CEN_LHRO)
        self.greedy = greedy_rule(instance)

    def run(self, run_index: int) -> RunRecord:
        for agent in self.instance.agents:
            heapq.heappush(self.events, (agent.t0, agent.id, DEPART, -1))
        while self.events:
            time, agent_id, kind, station = heapq.heappop(self.events)
            if kind == DEPART:
                self._depart(agent_id)
            else:
                self._arrive(agent_id, station, time)
        outcomes = tuple(self.outcomes[a.id] for a in self.instance.agents)
        return RunRecord(run=run_index, setting=self.setting, outcomes=outcomes)

    def _depart(self, agent_id: int) -> None:
        agent = self.instance.agent(agent_id)
        track = _AgentRun(node=agent.start, clock=agent.t0)
        self.agents[agent_id] = track
        if self.fixed_plans is not None:
            track.plan.extend(self.fixed_plans[agent_id].visits)
        elif self.setting.is_static:
            policy = plan_request(agent, self.board, self.instance, self.setting, config=self.config)
            self.board.publish(policy)
            track.plan.extend(policy.visits)
        if self.centralized:
            self.state, _ = observe(self.state, agent_id, None, self.instance)
        self._advance(agent_id)

    def _arrive(self, agent_id: int, station: int, time: float) -> None:
        track = self.agents[agent_id]
        track.node, track.clock = station, time
        track.visited.append(station)
        available = self.ledger.is_available(station, time)
        if self.centralized:
            self.state, _ = observe(self.state, agent_id, available, self.instance)
        self.board.observe(station, time)
        if available:
            self.ledger.claim(station, time)
            self._finish(agent_id, success=True)
        else:
            self._advance(agent_id)

    def _advance(self, agent_id: int) -> None:
        track = self.agents[agent_id]
        if track.plan:
            visit = track.plan.popleft()
            heapq.heappush(self.events, (visit.planned_arrival, agent_id, ARRIVE, visit.station))
            return
        station = self._choose(agent_id)
        if self.centralized:
            self.state, _ = decide(self.state, agent_id, station, self.instance)
        if station is None:
            self._finish(agent_id, success=False)
            return
        arrival = track.clock + self.instance.graph.time(track.node, station)
        heapq.heappush(self.events, (arrival, agent_id, ARRIVE, station))

    def _choose(self, agent_id: int) -> Optional[int]:
        if self.fixed_plans is not None or self.setting.is_static:
            return None
        agent = self.instance.agent(agent_id)
        track = self.agents[agent_id]
        elapsed = track.clock - agent.t0

        if self.setting == Setting.DEC_N:
            candidates = [
                v
                for v in self.instance.stations_in_radius(agent)
                if v not in track.visited
            ]
            return greedy_decide(
                agent,
                track.node,
                elapsed,
                candidates,
                self.instance.graph.base_probabilities(),
                self.instance.graph,
            )
        if self.setting == Setting.DEC_O_D:
            return dec_o_d_decide(
                agent,
                track.node,
                elapsed,
                self.board.observations_until(track.clock),
                self.instance,
                self.config,
                visited=track.visited,
            )
        if self.setting == Setting.CEN_G:
            return self.greedy(self.state, agent_id)
        if self.setting == Setting.CEN_RO:
            return rollout_decide(
                self.state,
                self.instance,
                self.config.rollout_horizon,
                include_pending=self.config.lookahead_pending,
            )
        if self.setting == Setting.CEN_LHRO:
            station, self.policies = lhro_decide(
                self.state, self.instance, self.policies, config=self.config
            )
            return station
        raise ValueError(f"Setting {self.setting.value} is not simulated by the event loop")

    def _finish(self, agent_id: int, success: bool) -> None:
        agent = self.instance.agent(agent_id)
        track = self.agents[agent_id]
        final = track.visited[-1] if track.visited else None
        self.outcomes[agent_id] = AgentOutcome(
            agent=agent_id,
            search_time=track.clock - agent.t0,
            success=success,
            visited=tuple(track.visited),
            final_station=final,
            usage_cost=agent.gamma(final) if success else 0.0,
        )
        self.board.terminated.add(agent_id)
        self.policies.pop(agent_id, None)


def _offline_record(instance: Instance, matrix: RealizationMatrix, run: int) -> RunRecord:
    result = offline_assignment(instance.agents, matrix.available[run], instance)
    outcomes = []
    for agent in instance.agents:
        station = result.assignment[agent.id]
        success = station is not None
        outcomes.append(
            AgentOutcome(
                agent=agent.id,
                search_time=result.per_agent[agent.id] if success else 0.0,
                success=success,
                visited=(station,) if success else (),
                final_station=station,
            )
        )
    return RunRecord(run=run, setting=Setting.OFF, outcomes=tuple(outcomes))


def simulate(
    setting: Setting,
    instance: Instance,
    matrix: RealizationMatrix,
    config: Optional[PlannerConfig] = None,
    deadline: Optional[float] = None,
) -> List[RunRecord]:
    """
    Run ``setting`` on every realization of ``matrix``

    Args:
        setting: Setting to evaluate
        instance: Problem instance
        matrix: Shared availability realizations
        config: Planner configuration
        deadline: ``time.monotonic()`` value after which remaining runs are abandoned

    Returns:
        One RunRecord per run, in run order
    """
    setting = Setting(setting)
    config = config or PlannerConfig()
    if matrix.n_stations != instance.graph.n_stations:
        raise ValueError("realization matrix does not match the instance")
    if setting == Setting.OFF:
        if instance.recovery_enabled:
            logger.warning("OFF ignores stations freed by recovery")
        return [_offline_record(instance, matrix, run) for run in range(matrix.runs)]
    records = []
    for run in range(matrix.runs):
        if deadline is not None and time.monotonic() > deadline:
            raise CellTimeoutError(f"{setting.value}: wall-clock cap reached after {run} runs")
        episode = _Episode(setting, instance, matrix.row(run), config)
        records.append(episode.run(run))
    return records


def replay_fixed_policies(
    policies: Sequence[SearchPolicy],
    available: Sequence[bool],
    instance: Instance,
    run: int = 0,
) -> RunRecord:
    """Execute fixed visit sequences on one availability vector with first-arriver claiming"""
    plans = {p.agent: p for p in policies}
    missing = [a.id for a in instance.agents if a.id not in plans]
    if missing:
        raise ValueError(f"no policy for agents {missing}")
    episode = _Episode(Setting.DEC, instance, StationLedger(available), PlannerConfig(), fixed_plans=plans)
    return episode.run(run)


def simulate_fixed(
    policies: Sequence[SearchPolicy], instance: Instance, matrix: RealizationMatrix
) -> List[RunRecord]:
    return [
        replay_fixed_policies(policies, matrix.available[run], instance, run)
        for run in range(matrix.runs)
    ]


@dataclass
class Metrics:
    """Simulated estimates over a set of runs"""

    alpha_hat_i: Dict[int, float]
    rho_hat_i: Dict[int, float]
    t_hat_i: Dict[int, float]
    alpha_hat: float
    rho_hat: float
    any_failure_rate: float
    t_hat: float
    t_max: float
    t_min: float
    rho_min: float
    rho_max: float
    runs: int


def compute_metrics(
    records: Sequence[RunRecord],
    instance: Instance,
    convention: PenaltyConvention = PenaltyConvention.FAILURE,
) -> Metrics:
    """
    Individual and system estimates from run records

    Individual cost adds the agent's penalty to the search time of failed runs
    (``convention`` SUCCESS charges successful runs instead). Worst/best search
    times are per-run extremes averaged over runs.
    """
    if not records:
        raise ValueError("at least one run record is required")
    convention = PenaltyConvention(convention)
    ids = [a.id for a in instance.agents]
    times = np.array([[r.outcome(k).search_time for k in ids] for r in records], dtype=float)
    success = np.array([[r.outcome(k).success for k in ids] for r in records], dtype=float)
    penalties = np.array([instance.agent(k).penalty for k in ids])
    charged = (1.0 - success) if convention == PenaltyConvention.FAILURE else success
    individual = times + charged * penalties

    alpha_i = individual.mean(axis=0)
    rho_i = success.mean(axis=0)
    rho_hat = float(np.prod(rho_i))
    return Metrics(
        alpha_hat_i={k: float(v) for k, v in zip(ids, alpha_i)},
        rho_hat_i={k: float(v) for k, v in zip(ids, rho_i)},
        t_hat_i={k: float(v) for k, v in zip(ids, times.mean(axis=0))},
        alpha_hat=float(alpha_i.sum()) + (1.0 - rho_hat) * instance.beta_global,
        rho_hat=rho_hat,
        any_failure_rate=float(np.mean([r.any_failure for r in records])),
        t_hat=float(times.mean()),
        t_max=float(times.max(axis=1).mean()),
        t_min=float(times.min(axis=1).mean()),
        rho_min=float(rho_i.min()),
        rho_max=float(rho_i.max()),
        runs=len(records),
    )
