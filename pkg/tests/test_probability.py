import math

import numpy as np
import pytest

from conftest import A, B, conflict_instance, worked_instance
from polesearch.exceptions import InfeasiblePolicyError
from polesearch.model import AgentSpec, Instance, StationGraph
from polesearch.probability import (
    AvailabilityContext,
    build_policy,
    check_feasible,
    evaluate_policy_set,
    gamma_transformed_travel,
    policy_cost,
    prefix_success,
    recovered_available_prob,
    recovered_occupied_prob,
    sequence_cost,
    system_cost,
    user_dependent_availability,
)


def independent(instance):
    return AvailabilityContext.independent(instance.graph.base_probabilities())


@pytest.fixture
def conflict_policies():
    """Both agents plan A then B; agent 1 trails agent 0 by 0.1 min"""
    instance = conflict_instance()
    first = build_policy([A, B], instance.agents[0], independent(instance), instance)
    ctx = AvailabilityContext.dependent(instance.graph.base_probabilities(), [first])
    second = build_policy([A, B], instance.agents[1], ctx, instance)
    return instance, first, second, ctx


def test_prefix_success_before_first_visit(worked):
    policy = build_policy([A, B], worked.agents[0], independent(worked), worked)
    assert prefix_success(policy, 0.5, independent(worked)) == 0.0


def test_prefix_success_independent(worked):
    policy = build_policy([A, B], worked.agents[0], independent(worked), worked)
    assert prefix_success(policy, 1.0, independent(worked)) == pytest.approx(0.5)
    assert prefix_success(policy, 2.0, independent(worked)) == pytest.approx(0.75)


def test_user_dependent_availability_without_prior_visitor(conflict_policies):
    instance, first, _, _ = conflict_policies
    ctx = AvailabilityContext.dependent(instance.graph.base_probabilities(), [])
    assert user_dependent_availability(A, 1.1, ctx) == 0.5


def test_user_dependent_availability_conflict(conflict_policies):
    _, first, _, ctx = conflict_policies
    assert first.arrival_at(A) == 1.0
    assert first.arrival_at(B) == 2.0
    assert user_dependent_availability(A, 1.1, ctx) == pytest.approx(0.25)
    assert user_dependent_availability(B, 2.1, ctx) == pytest.approx(0.375)


def test_prior_visitor_after_query_time_ignored(conflict_policies):
    _, _, _, ctx = conflict_policies
    assert user_dependent_availability(B, 1.5, ctx) == 0.5


def test_prefix_success_dependent(conflict_policies):
    _, _, second, ctx = conflict_policies
    assert prefix_success(second, 10.0, ctx) == pytest.approx(0.53125)
    assert second.cost.rho == pytest.approx(0.53125)


def test_user_dependent_availability_needs_dependent_context(worked):
    with pytest.raises(ValueError):
        user_dependent_availability(A, 1.0, independent(worked))


def test_policy_cost_worked_example(worked):
    cost = policy_cost([A, B], worked.agents[0], independent(worked), worked)
    assert cost.A == pytest.approx(1.5)
    assert cost.rho == pytest.approx(0.75)
    assert cost.alpha == pytest.approx(4.0)


def test_policy_cost_certain_station_with_usage_cost():
    travel = [[0.0, 2.0], [2.0, 0.0]]
    graph = StationGraph.from_travel_matrix([1.0], travel)
    agent = AgentSpec(id=0, t0=0.0, start=1, penalty=10.0, usage_cost={0: 3.0})
    instance = Instance(graph=graph, agents=(agent,))
    cost = policy_cost([0], agent, independent(instance), instance)
    assert (cost.A, cost.rho, cost.alpha) == (5.0, 1.0, 5.0)


def test_policy_cost_hopeless_stations():
    instance = worked_instance(probabilities=(0.0, 0.0))
    cost = policy_cost([A, B], instance.agents[0], independent(instance), instance)
    assert (cost.A, cost.rho, cost.alpha) == (2.0, 0.0, 12.0)


def test_sequence_cost_empty_policy():
    cost = sequence_cost([], [], [], penalty=10.0)
    assert (cost.A, cost.rho, cost.alpha) == (0.0, 0.0, 10.0)


def test_check_feasible_reports_every_problem(worked):
    agent = worked.agents[0]
    with pytest.raises(InfeasiblePolicyError) as excinfo:
        check_feasible([A, A], agent, worked, agent.start, 4.5)
    message = str(excinfo.value)
    assert "repeated" in message
    assert "budget" in message


def test_build_policy_rejects_unknown_station(worked):
    with pytest.raises(InfeasiblePolicyError, match="unknown station"):
        build_policy([7], worked.agents[0], independent(worked), worked)


def test_system_cost_single_agent(worked):
    policy = build_policy([A, B], worked.agents[0], independent(worked), worked)
    assert system_cost([policy], 700.0) == pytest.approx(179.0)


def test_system_cost_all_certain():
    instance = worked_instance(probabilities=(1.0, 1.0))
    policy = build_policy([A], instance.agents[0], independent(instance), instance)
    assert system_cost([policy], 700.0) == policy.cost.alpha == 1.0


def test_system_cost_disjoint_pair(conflict):
    first = build_policy([A], conflict.agents[0], independent(conflict), conflict)
    second = build_policy([B], conflict.agents[1], independent(conflict), conflict)
    # 6 + 7 + (1 - 0.25) * 700
    assert system_cost([first, second], 700.0) == pytest.approx(538.0)


def test_evaluate_policy_set_recosts_in_order(conflict_policies):
    instance, first, second, _ = conflict_policies
    plain = build_policy([A, B], instance.agents[1], independent(instance), instance)
    costed, joint = evaluate_policy_set([first, plain], instance)
    assert costed[0].cost == first.cost
    assert costed[1].cost.rho == pytest.approx(second.cost.rho)
    assert joint == pytest.approx(system_cost(costed, instance.beta_global))


def test_recovered_occupied_prob():
    assert recovered_occupied_prob(0.5, 0.1, 0.0) == 0.0
    assert recovered_occupied_prob(0.5, 0.1, 1e6) == pytest.approx(0.5, abs=1e-9)
    assert recovered_occupied_prob(0.5, 0.1, 5.0) == pytest.approx(0.316060, abs=1e-6)
    assert recovered_occupied_prob(0.0, 0.1, 5.0) == 0.0


def test_recovered_occupied_prob_is_monotone():
    values = [recovered_occupied_prob(0.3, 0.05, d) for d in np.linspace(0.0, 100.0, 50)]
    assert all(a <= b for a, b in zip(values, values[1:]))


def test_recovered_available_prob():
    assert recovered_available_prob(0.5, 0.1, 0.0) == 1.0
    assert recovered_available_prob(0.5, 0.1, 1e6) == pytest.approx(0.5, abs=1e-9)
    assert recovered_available_prob(0.5, 0.1, 5.0) == pytest.approx(0.5 + 0.5 * math.exp(-1.0))
    assert recovered_available_prob(0.5, 0.1, 5.0) == pytest.approx(0.683940, abs=1e-6)


def test_recovery_rejects_bad_arguments():
    with pytest.raises(ValueError):
        recovered_occupied_prob(0.5, 0.1, -1.0)
    with pytest.raises(ValueError):
        recovered_available_prob(0.0, 0.1, 1.0)


def test_context_recovers_at_visit_time(worked):
    recovery = {A: (0.1, 0.0)}
    ctx = AvailabilityContext.independent(worked.graph.base_probabilities(), recovery)
    assert ctx.probability(A, 5.0) == pytest.approx(0.316060279, abs=1e-9)
    assert ctx.probability(A, 7.0) == pytest.approx(0.5 * (1.0 - math.exp(-1.4)))
    assert ctx.probability(B, 7.0) == 0.5
    dependent = AvailabilityContext.dependent(worked.graph.base_probabilities(), [], recovery)
    assert dependent.probability(A, 7.0) == pytest.approx(ctx.probability(A, 7.0))


def test_gamma_transformation_preserves_cost():
    instance = worked_instance(usage_cost={A: 4.0, B: 2.0})
    agent = instance.agents[0]
    direct = policy_cost([A, B], agent, independent(instance), instance)
    travel = gamma_transformed_travel(instance, agent)
    legs = [travel[agent.start, A], travel[A, B]]
    folded = sequence_cost(legs, [0.5, 0.5], [0.0, 0.0], agent.penalty)
    assert folded.alpha == pytest.approx(direct.alpha, rel=1e-12)
    assert folded.A == pytest.approx(direct.A, rel=1e-12)
