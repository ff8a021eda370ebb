import numpy as np
import pytest

from conftest import A, B, conflict_instance, single_station_instance, worked_instance
from polesearch.base import Setting
from polesearch.benchmarks import greedy_decide, greedy_rule
from polesearch.config import PlannerConfig
from polesearch.dynamic_planners import (
    dec_o_d_decide,
    greedy_base_cost,
    lhro_decide,
    rollout_decide,
    rollout_rule,
)
from polesearch.model import AgentSpec, Instance, StationGraph, decide, initial_state, observe, reachable_actions
from polesearch.oracle import exact_mdp_value, exact_rule_value, feasible_sequences
from polesearch.probability import AvailabilityContext, build_policy, evaluate_policy_set
from polesearch.static_planners import SharedBoard, plan_request
from polesearch.verification import random_deciding_state, random_tiny_instance


def departed(instance, agent_id=0):
    state, _ = observe(initial_state(instance), agent_id, None, instance)
    return state


def occupied_at(instance, station, agent_id=0):
    state, _ = decide(departed(instance, agent_id), agent_id, station, instance)
    state, _ = observe(state, agent_id, False, instance)
    return state


def test_greedy_base_cost_terminal_state():
    instance = single_station_instance()
    state, _ = decide(departed(instance), 0, None, instance)
    assert state.is_terminal
    assert greedy_base_cost(state, instance, 5) == 0.0


def test_greedy_base_cost_single_station():
    instance = single_station_instance(p=0.5, travel=1.0, penalty=10.0, beta_global=700.0)
    expected = 1.0 + 0.5 * 10.0 + 0.5 * 700.0
    assert greedy_base_cost(departed(instance), instance, 1) == pytest.approx(expected)
    assert greedy_base_cost(departed(instance), instance, 5) == pytest.approx(expected)


def test_greedy_base_cost_zero_horizon():
    instance = single_station_instance()
    assert greedy_base_cost(departed(instance), instance, 0) == 0.0


def test_greedy_base_cost_rejects_negative_horizon():
    instance = single_station_instance()
    with pytest.raises(ValueError):
        greedy_base_cost(departed(instance), instance, -1)


def test_rollout_single_feasible_station():
    instance = single_station_instance()
    assert rollout_decide(departed(instance), instance, 5) == 0


def test_rollout_without_actions():
    instance = worked_instance(budget=0.5)
    assert rollout_decide(departed(instance), instance, 5) is None


def test_rollout_without_deciding_agent(worked):
    state, _ = decide(departed(worked), 0, A, worked)
    assert rollout_decide(state, worked, 5) is None


def test_rollout_zero_horizon_matches_greedy(worked):
    state = departed(worked)
    agent = worked.agents[0]
    expected = greedy_decide(agent, agent.start, 0.0, [A, B], worked.graph.base_probabilities(), worked.graph)
    assert rollout_decide(state, worked, 0) == expected == A


def test_rollout_zero_horizon_matches_greedy_on_random_states():
    rng = np.random.default_rng(21)
    checked = 0
    while checked < 40:
        instance = random_tiny_instance(rng, int(rng.integers(2, 5)), int(rng.integers(1, 3)))
        state = random_deciding_state(rng, instance)
        if state is None:
            continue
        checked += 1
        deciding = state.deciding_agent()
        assert rollout_decide(state, instance, 0) == greedy_rule(instance)(state, deciding)


def test_rollout_improves_on_greedy_exactly():
    rng = np.random.default_rng(5)
    for _ in range(3):
        instance = random_tiny_instance(rng, 3, 2)
        optimum = exact_mdp_value(instance)
        rollout = exact_rule_value(instance, rollout_rule(instance, K=50, include_pending=True))
        greedy = exact_rule_value(instance, greedy_rule(instance))
        assert optimum <= rollout + 1e-9
        assert rollout <= greedy + 1e-9


def lookahead_instance():
    """Myopic scores favour the likelier A, yet trying the nearer B first is cheaper"""
    travel = [
        [0.0, 1.0, 1.5],
        [1.0, 0.0, 1.0],
        [1.5, 1.0, 0.0],
    ]
    graph = StationGraph.from_travel_matrix([0.6, 0.3], travel)
    agent = AgentSpec(id=0, t0=0.0, start=2, budget=5.0, penalty=10.0)
    return Instance(graph=graph, agents=(agent,), beta_global=700.0)


def test_rollout_lookahead_overrules_myopic_choice():
    instance = lookahead_instance()
    state = departed(instance)
    assert rollout_decide(state, instance, 0) == A
    assert rollout_decide(state, instance, 2) == B
    # B first: 1 + 0.7 * (1 + 0.4 * 710); A first: 1.5 + 0.4 * (1 + 0.7 * 710)
    assert exact_mdp_value(instance) == pytest.approx(200.5)
    assert exact_rule_value(instance, rollout_rule(instance, K=2)) == pytest.approx(200.5)
    assert exact_rule_value(instance, greedy_rule(instance)) == pytest.approx(200.7)


def test_lhro_with_every_candidate_is_joint_argmin(conflict):
    config = PlannerConfig(n_best=10**6, dominance=False)
    state = departed(conflict, 0)
    first_station, policies = lhro_decide(state, conflict, {}, config=config)
    state, _ = decide(state, 0, first_station, conflict)
    state, _ = observe(state, 1, None, conflict)
    station, policies = lhro_decide(state, conflict, policies, config=config)

    second = conflict.agents[1]
    ctx = AvailabilityContext.independent(conflict.graph.base_probabilities())
    joint = {
        seq: evaluate_policy_set([policies[0], build_policy(seq, second, ctx, conflict)], conflict)[1]
        for seq in feasible_sequences(second, conflict)
    }
    best = min(joint, key=joint.get)
    assert len(joint) == 4
    assert station == best[0] == A
    assert evaluate_policy_set([policies[0], policies[1]], conflict)[1] == pytest.approx(joint[best])


def test_lhro_single_agent_matches_dec_o_d():
    instance = worked_instance(beta_global=0.0)
    agent = instance.agents[0]
    station, policies = lhro_decide(departed(instance), instance, {})
    assert station == dec_o_d_decide(agent, agent.start, 0.0, {}, instance) == A
    assert policies[0].stations == (A, B)


def test_lhro_replaces_stale_policy():
    instance = worked_instance(beta_global=0.0)
    _, policies = lhro_decide(departed(instance), instance, {})
    state = occupied_at(instance, A)
    station, updated = lhro_decide(state, instance, policies)
    assert station == B
    assert updated[0].stations == (B,)


def test_lhro_exhausted_budget():
    instance = worked_instance(budget=1.0)
    state = occupied_at(instance, A)
    station, policies = lhro_decide(state, instance, {0: None})
    assert station is None
    assert 0 not in policies


def test_lhro_never_returns_observed_station():
    instance = conflict_instance()
    state = departed(instance, 0)
    state, _ = decide(state, 0, A, instance)
    state, _ = observe(state, 0, False, instance)
    state, _ = decide(state, 0, None, instance)
    state, _ = observe(state, 1, None, instance)
    station, _ = lhro_decide(state, instance, {})
    assert station == B
    assert station not in state.observed


def test_lhro_without_deciding_agent(worked):
    state, _ = decide(departed(worked), 0, A, worked)
    station, policies = lhro_decide(state, worked, {})
    assert station is None
    assert policies == {}


def test_dec_o_d_matches_static_plan_without_news(conflict):
    agent = conflict.agents[1]
    static = plan_request(agent, SharedBoard(), conflict, Setting.DEC_O)
    assert dec_o_d_decide(agent, agent.start, 0.0, {}, conflict) == static.first_station


def test_dec_o_d_reacts_to_new_observation(worked):
    agent = worked.agents[0]
    assert dec_o_d_decide(agent, agent.start, 0.0, [A], worked) == B
    assert dec_o_d_decide(agent, agent.start, 0.0, [A, B], worked) is None


def test_dec_o_d_replans_mid_search(worked):
    agent = worked.agents[0]
    board = SharedBoard()
    board.observe(A, 1.0)
    assert dec_o_d_decide(agent, A, 1.0, board.observations, worked, visited=[A]) == B


def test_decisions_are_deterministic(generated):
    state = departed(generated, generated.agents[0].id)
    first = [rollout_decide(state, generated, 2) for _ in range(3)]
    assert len(set(first)) == 1
    assert first[0] in reachable_actions(state, generated.agents[0], generated)
