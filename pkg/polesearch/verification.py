"""
Oracle verification suite

Cross-checks the closed-form algebra and the planners against the exhaustive
oracle on random tiny instances. Backs the ``polesearch verify`` command.
"""

import logging
import time
from typing import Dict, List, Optional

import numpy as np

from .benchmarks import greedy_decide, greedy_rule
from .label_search import lh_search
from .model import (
    AgentSpec,
    Instance,
    SearchPolicy,
    Station,
    StationGraph,
    SystemState,
    arrival_probability,
    decide,
    initial_state,
    next_event,
    observe,
    reachable_actions,
)
from .dynamic_planners import rollout_decide, rollout_rule
from .oracle import (
    exact_mdp_value,
    exact_policy_set_value,
    exact_rule_value,
    exact_single_optimum,
    realizations,
)
from .probability import (
    AvailabilityContext,
    build_policy,
    evaluate_policy_set,
    gamma_transformed_travel,
    sequence_cost,
)
from .utils import TIME_EPS

logger = logging.getLogger(__name__)


def random_tiny_instance(
    rng: np.random.Generator,
    n_stations: int,
    n_agents: int,
    with_usage_costs: bool = False,
    side: float = 600.0,
    budget: float = 5.0,
    beta_global: float = 700.0,
) -> Instance:
    """Small metric instance with every station inside every agent's radius"""
    stations = [
        Station(
            id=k,
            x=float(rng.uniform(0, side)),
            y=float(rng.uniform(0, side)),
            p=float(rng.uniform(0.05, 0.95)),
        )
        for k in range(n_stations)
    ]
    starts = [(float(rng.uniform(0, side)), float(rng.uniform(0, side))) for _ in range(n_agents)]
    graph = StationGraph.from_coordinates(stations, starts)
    departures = sorted(float(t) for t in rng.uniform(0.0, 2.0, n_agents))
    agents = []
    for k in range(n_agents):
        usage = {}
        if with_usage_costs:
            usage = {v: float(rng.uniform(0.0, 5.0)) for v in range(n_stations)}
        agents.append(
            AgentSpec(
                id=k,
                t0=departures[k],
                start=n_stations + k,
                budget=budget,
                radius=2.0 * side,
                penalty=float(rng.uniform(10.0, 60.0)),
                usage_cost=usage,
            )
        )
    return Instance(graph=graph, agents=tuple(agents), beta_global=beta_global)


def random_feasible_sequence(
    rng: np.random.Generator, agent: AgentSpec, instance: Instance, stations: List[int]
) -> List[int]:
    """Random order of ``stations`` cut at the first visit breaking the budget"""
    order = [int(v) for v in rng.permutation(stations)]
    length = int(rng.integers(0, len(order) + 1))
    sequence, node, elapsed = [], agent.start, 0.0
    for station in order[:length]:
        elapsed += instance.graph.time(node, station)
        if elapsed > agent.budget + TIME_EPS:
            break
        sequence.append(station)
        node = station
    return sequence


def random_disjoint_policies(rng: np.random.Generator, instance: Instance) -> List[SearchPolicy]:
    """User-independent policies whose station sets do not intersect"""
    owners = rng.integers(0, len(instance.agents), instance.graph.n_stations)
    ctx = AvailabilityContext.independent(instance.graph.base_probabilities())
    policies = []
    for index, agent in enumerate(instance.agents):
        own = [v for v in range(instance.graph.n_stations) if owners[v] == index]
        sequence = random_feasible_sequence(rng, agent, instance, own)
        policies.append(build_policy(sequence, agent, ctx, instance))
    return policies


def random_deciding_state(
    rng: np.random.Generator, instance: Instance, max_steps: int = 12
) -> Optional[SystemState]:
    """Walk a random trajectory and return a state where an agent must decide"""
    state = initial_state(instance)
    candidates = []
    for _ in range(max_steps):
        if state.is_terminal:
            break
        deciding = state.deciding_agent()
        if deciding is not None:
            actions = sorted(reachable_actions(state, instance.agent(deciding), instance))
            if actions:
                candidates.append(state)
            action = actions[int(rng.integers(0, len(actions)))] if actions else None
            state, _ = decide(state, deciding, action, instance)
            continue
        event = next_event(state, instance)
        if event is None:
            break
        if event.kind == "depart":
            state, _ = observe(state, event.agent, None, instance)
        else:
            q = arrival_probability(state, event.agent, instance)
            state, _ = observe(state, event.agent, bool(rng.random() < q), instance)
    if not candidates:
        return None
    return candidates[int(rng.integers(0, len(candidates)))]


class OracleVerifier:
    """Runs the oracle cross-checks and tallies pass/fail per category"""

    def __init__(self, seed: int = 0, scale: float = 1.0):
        self.seed = seed
        self.scale = scale
        self.results: Dict[str, Dict[str, object]] = {}

    def _cases(self, count: int) -> int:
        return max(1, int(round(count * self.scale)))

    def _rng(self, salt: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, salt])

    def log_result(self, check: str, passed: bool, details: str = "") -> None:
        status = "PASS" if passed else "FAIL"
        logger.info(f"{status}: {check}")
        if details:
            logger.info(f"  Details: {details}")
        self.results[check] = {"passed": passed, "details": details}

    def verify_policy_set_equivalence(self, cases: int = 200) -> bool:
        """
        Closed-form joint cost equals the exhaustive expectation for disjoint policy sets

        Policy sets sharing stations are evaluated too; their gap to the
        replayed expectation is reported but does not fail the check.
        """
        rng = self._rng(1)
        worst = overlap_worst = 0.0
        start = time.time()
        for _ in range(self._cases(cases)):
            instance = random_tiny_instance(rng, int(rng.integers(1, 6)), int(rng.integers(1, 4)))
            policies, joint = evaluate_policy_set(random_disjoint_policies(rng, instance), instance)
            worst = max(worst, abs(joint - exact_policy_set_value(policies, instance)))

            ctx = AvailabilityContext.independent(instance.graph.base_probabilities())
            stations = list(range(instance.graph.n_stations))
            overlapping = [
                build_policy(random_feasible_sequence(rng, agent, instance, stations), agent, ctx, instance)
                for agent in instance.agents
            ]
            overlapping, joint = evaluate_policy_set(overlapping, instance)
            overlap_worst = max(overlap_worst, abs(joint - exact_policy_set_value(overlapping, instance)))
        passed = worst <= 1e-9
        self.log_result(
            "policy set equivalence",
            passed,
            f"max |system_cost - exact| = {worst:.3e}, overlapping sets max gap {overlap_worst:.3e} "
            f"({time.time() - start:.1f}s)",
        )
        return passed

    def verify_gamma_transformation(self, cases: int = 500) -> bool:
        """Usage costs folded into travel times leave the policy cost unchanged"""
        rng = self._rng(2)
        worst = 0.0
        for _ in range(self._cases(cases)):
            instance = random_tiny_instance(rng, int(rng.integers(1, 7)), 1, with_usage_costs=True)
            agent = instance.agents[0]
            sequence = random_feasible_sequence(rng, agent, instance, list(range(instance.graph.n_stations)))
            ctx = AvailabilityContext.independent(instance.graph.base_probabilities())
            direct = build_policy(sequence, agent, ctx, instance).cost
            travel = gamma_transformed_travel(instance, agent)
            nodes = [agent.start] + sequence
            legs = [float(travel[a, b]) for a, b in zip(nodes, nodes[1:])]
            folded = sequence_cost(
                legs, [instance.graph.p(v) for v in sequence], [0.0] * len(sequence), agent.penalty
            )
            worst = max(worst, abs(direct.alpha - folded.alpha) / max(1.0, abs(direct.alpha)))
        passed = worst <= 1e-12
        self.log_result("usage cost transformation", passed, f"max relative error = {worst:.3e}")
        return passed

    def verify_label_quality(self, cases: int = 100) -> bool:
        """Label setting never beats the exhaustive optimum and stays close to it"""
        rng = self._rng(3)
        gaps = []
        below = 0
        for _ in range(self._cases(cases)):
            instance = random_tiny_instance(rng, int(rng.integers(2, 9)), 1)
            agent = instance.agents[0]
            ctx = AvailabilityContext.independent(instance.graph.base_probabilities())
            best = lh_search(agent, instance, ctx)[0].cost.alpha
            optimum = exact_single_optimum(agent, instance).cost.alpha
            if best < optimum - 1e-9:
                below += 1
            gaps.append((best - optimum) / optimum if optimum > 0 else 0.0)
        mean_gap = float(np.mean(gaps))
        passed = below == 0 and mean_gap <= 0.05
        self.log_result("label setting quality", passed, f"mean gap {mean_gap:.4%}, below optimum {below}")
        return passed

    def verify_rule_bounds(self, cases: int = 20) -> bool:
        """Exact optimum <= rollout <= greedy on 2-agent, 3-station instances"""
        rng = self._rng(4)
        violations = 0
        for _ in range(self._cases(cases)):
            instance = random_tiny_instance(rng, 3, 2)
            optimum = exact_mdp_value(instance)
            greedy = exact_rule_value(instance, greedy_rule(instance))
            rollout = exact_rule_value(instance, rollout_rule(instance, K=50, include_pending=True))
            if not (optimum <= rollout + 1e-9 and rollout <= greedy + 1e-9):
                violations += 1
        passed = violations == 0
        self.log_result("optimum <= rollout <= greedy", passed, f"violations: {violations}")
        return passed

    def verify_zero_lookahead(self, cases: int = 1000) -> bool:
        """Rollout without lookahead picks the greedy station"""
        rng = self._rng(5)
        mismatches = checked = 0
        while checked < self._cases(cases):
            instance = random_tiny_instance(rng, int(rng.integers(2, 6)), int(rng.integers(1, 4)))
            state = random_deciding_state(rng, instance)
            if state is None:
                continue
            checked += 1
            deciding = state.deciding_agent()
            agent = instance.agent(deciding)
            agent_state = state.get(deciding)
            candidates = reachable_actions(state, agent, instance)
            times = state.observation_times()
            expected = greedy_decide(
                agent,
                agent_state.station,
                agent_state.arrival - agent.t0,
                sorted(candidates),
                {v: instance.effective_probability(v, agent_state.arrival, times) for v in candidates},
                instance.graph,
            )
            if rollout_decide(state, instance, 0) != expected:
                mismatches += 1
        passed = mismatches == 0
        self.log_result("zero-lookahead rollout equals greedy", passed, f"{mismatches}/{checked} mismatches")
        return passed

    def verify_realization_weights(self, cases: int = 20) -> bool:
        rng = self._rng(6)
        worst = 0.0
        for _ in range(self._cases(cases)):
            instance = random_tiny_instance(rng, int(rng.integers(1, 9)), 1)
            worst = max(worst, abs(sum(w for _, w in realizations(instance)) - 1.0))
        passed = worst <= 1e-12
        self.log_result("realization weights sum to one", passed, f"max deviation {worst:.3e}")
        return passed

    def generate_report(self) -> str:
        lines = ["Oracle Verification Report", "=" * 40]
        for check, result in self.results.items():
            lines.append(f"{'PASS' if result['passed'] else 'FAIL'}  {check}: {result['details']}")
        passed = sum(1 for r in self.results.values() if r["passed"])
        lines.append(f"{passed}/{len(self.results)} checks passed")
        return "\n".join(lines)

    def run_validation(self) -> bool:
        checks = [
            self.verify_realization_weights,
            self.verify_policy_set_equivalence,
            self.verify_gamma_transformation,
            self.verify_label_quality,
            self.verify_zero_lookahead,
            self.verify_rule_bounds,
        ]
        outcome = True
        for check in checks:
            try:
                outcome = check() and outcome
            except Exception as e:
                self.log_result(check.__name__, False, f"{type(e).__name__}: {e}")
                outcome = False
        return outcome
