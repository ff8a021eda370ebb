import math

import numpy as np
import pytest

from conftest import A, B, conflict_instance, worked_instance
from polesearch.base import Setting
from polesearch.config import PlannerConfig
from polesearch.exceptions import ConfigurationError
from polesearch.model import CostTriple, SearchPolicy, Visit
from polesearch.oracle import feasible_sequences
from polesearch.probability import AvailabilityContext, build_policy, evaluate_policy_set, system_cost
from polesearch.static_planners import (
    SharedBoard,
    plan_all,
    plan_request,
    select_collaborative,
    truncate_intentions,
    visible_stations,
)
from polesearch.verification import random_tiny_instance


def plan(agent, stations, arrivals, origin=2, start_time=0.0):
    visits = tuple(Visit(v, t) for v, t in zip(stations, arrivals))
    return SearchPolicy(agent=agent, visits=visits, cost=CostTriple(1.0, 0.5, 6.0), origin=origin, start_time=start_time)


def test_dec_identical_agents_share_plan(conflict):
    first, second = plan_all(conflict, Setting.DEC)
    assert first.stations == second.stations == (A, B)


def test_dec_ignores_board(conflict):
    board = SharedBoard()
    board.observe(A, 0.0)
    board.publish(plan(0, [A, B], [1.0, 2.0]))
    policy = plan_request(conflict.agents[1], board, conflict, Setting.DEC)
    assert policy.stations == (A, B)


def test_dec_o_avoids_observed_station(conflict):
    board = SharedBoard()
    board.observe(A, 0.0)
    policy = plan_request(conflict.agents[1], board, conflict, Setting.DEC_O)
    assert A not in policy.stations
    assert policy.stations == (B,)


def test_dec_o_ignores_future_observations(conflict):
    board = SharedBoard()
    board.observe(A, 5.0)
    policy = plan_request(conflict.agents[1], board, conflict, Setting.DEC_O)
    assert policy.stations == (A, B)


def test_dec_i_plans_against_prior_intentions(conflict):
    board = SharedBoard()
    board.publish(plan_request(conflict.agents[0], board, conflict, Setting.DEC_I))
    policy = plan_request(conflict.agents[1], board, conflict, Setting.DEC_I)
    # A at 1.1 reads 0.25, B at 2.1 reads 0.375
    assert policy.stations == (A, B)
    assert policy.cost.rho == pytest.approx(0.53125)
    assert policy.cost.alpha == pytest.approx(1.75 + 0.46875 * 10.0)


def test_dec_i_collaborative_minimizes_joint_cost(conflict):
    board = SharedBoard()
    first = plan_request(conflict.agents[0], board, conflict, Setting.DEC_I_C)
    board.publish(first)
    selfish = plan_request(conflict.agents[1], board, conflict, Setting.DEC_I)
    collaborative = plan_request(conflict.agents[1], board, conflict, Setting.DEC_I_C)
    assert system_cost([first, collaborative], 700.0) <= system_cost([first, selfish], 700.0) + 1e-12


def test_dec_i_collaborative_with_every_candidate_is_joint_argmin():
    rng = np.random.default_rng(31)
    config = PlannerConfig(n_best=10**6, dominance=False)
    for _ in range(30):
        instance = random_tiny_instance(rng, int(rng.integers(2, 5)), 2)
        board = SharedBoard()
        board.publish(plan_request(instance.agents[0], board, instance, Setting.DEC_I_C, config=config))
        second = instance.agents[1]
        chosen = plan_request(second, board, instance, Setting.DEC_I_C, config=config)

        priors, _ = evaluate_policy_set(board.intentions, instance)
        ctx = AvailabilityContext.dependent(instance.graph.base_probabilities(), priors)
        joint = [
            system_cost(priors + [build_policy(seq, second, ctx, instance)], instance.beta_global)
            for seq in feasible_sequences(second, instance)
        ]
        assert system_cost(priors + [chosen], instance.beta_global) == pytest.approx(min(joint), abs=1e-9)


def test_dec_o_values_readmitted_station_at_visit_time():
    instance = worked_instance(recovery_enabled=True, obs_threshold=2.0, mu=[0.1, 0.1])
    board = SharedBoard()
    board.observe(A, -3.0)
    policy = plan_request(instance.agents[0], board, instance, Setting.DEC_O)
    # A is reached 4 minutes after it was seen occupied
    p_a = 0.5 * (1.0 - math.exp(-0.8))
    assert policy.stations == (A, B)
    assert policy.cost.alpha == pytest.approx(1.0 + (1.0 - p_a) + (1.0 - p_a) * 0.5 * 10.0)


def test_collaborative_flag_overrides_setting(conflict):
    board = SharedBoard()
    board.publish(plan_request(conflict.agents[0], board, conflict, Setting.DEC_I))
    forced = plan_request(conflict.agents[1], board, conflict, Setting.DEC_I, collaborative=True, n_best=5)
    default = plan_request(conflict.agents[1], board, conflict, Setting.DEC_I_C, n_best=5)
    assert forced.stations == default.stations


def test_dec_io_uses_observations_and_intentions(conflict):
    board = SharedBoard()
    board.publish(plan(0, [A, B], [1.0, 2.0]))
    board.observe(A, 0.05)
    policy = plan_request(conflict.agents[1], board, conflict, Setting.DEC_IO)
    assert A not in policy.stations


def test_plan_request_rejects_dynamic_setting(conflict):
    with pytest.raises(ConfigurationError):
        plan_request(conflict.agents[0], SharedBoard(), conflict, Setting.CEN_RO)


def test_select_collaborative_picks_lowest_joint():
    prior = plan(0, [A], [1.0])
    cheap = SearchPolicy(1, (Visit(B, 2.0),), CostTriple(2.0, 1.0, 2.0), 3, 0.0)
    risky = SearchPolicy(1, (Visit(A, 1.0),), CostTriple(1.0, 0.1, 1.5), 3, 0.0)
    assert select_collaborative([risky, cheap], [prior], 700.0) is cheap
    assert select_collaborative([risky, cheap], [prior], 0.0) is risky


def test_truncate_before_all_visits():
    policy = plan(0, [A, B], [1.0, 2.0])
    assert truncate_intentions([policy], 0.5) == [policy]


def test_truncate_after_all_visits():
    assert truncate_intentions([plan(0, [A, B], [1.0, 2.0])], 3.0) == []


def test_truncate_mid_sequence():
    (cut,) = truncate_intentions([plan(0, [A, B], [1.0, 2.0])], 1.5)
    assert cut.stations == (B,)
    assert cut.origin == A
    assert cut.start_time == 1.0
    assert cut.visits[0].planned_arrival == 2.0


def test_truncate_drops_terminated_agents():
    policies = [plan(0, [A, B], [1.0, 2.0]), plan(1, [B], [2.1], origin=3)]
    kept = truncate_intentions(policies, 0.5, terminated={0})
    assert [p.agent for p in kept] == [1]


def test_visible_stations_without_recovery(worked):
    excluded, recovering = visible_stations(worked, {A: 0.0}, 10.0)
    assert excluded == {A}
    assert recovering == {}


def test_visible_stations_readmits_with_recovery():
    instance = worked_instance(recovery_enabled=True, obs_threshold=2.0, mu=[0.1, 0.1])
    excluded, recovering = visible_stations(instance, {A: 0.0, B: 4.0}, 5.0)
    assert excluded == {B}
    assert recovering == {A: (0.1, 0.0)}


def test_plan_all_publishes_in_departure_order():
    instance = conflict_instance()
    board = SharedBoard()
    plans = plan_all(instance, Setting.DEC_I, board=board)
    assert [p.agent for p in board.intentions] == [0, 1]
    assert board.intentions == plans
