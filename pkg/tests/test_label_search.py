import random

import pytest

from conftest import A, B, single_station_instance, worked_instance
from polesearch.base import TerminalMode
from polesearch.label_search import (
    Label,
    LabelSetting,
    candidate_cost_ordering,
    dominates,
    lh_search,
    propagate,
    root_label,
    to_policy,
)
from polesearch.model import CostTriple, SearchPolicy, Visit
from polesearch.oracle import exact_single_optimum
from polesearch.probability import AvailabilityContext


def independent(instance):
    return AvailabilityContext.independent(instance.graph.base_probabilities())


def make_policy(stations, alpha):
    visits = tuple(Visit(v, float(k + 1)) for k, v in enumerate(stations))
    return SearchPolicy(agent=0, visits=visits, cost=CostTriple(0.0, 0.0, alpha), origin=9, start_time=0.0)


def test_propagate_two_steps(worked):
    agent = worked.agents[0]
    ctx = independent(worked)
    first = propagate(root_label(agent), A, agent, ctx, worked)
    assert (first.t, first.A, first.rho, first.alpha) == pytest.approx((1.0, 1.0, 0.5, 6.0))
    second = propagate(first, B, agent, ctx, worked)
    assert (second.t, second.A, second.rho, second.alpha) == pytest.approx((2.0, 1.5, 0.75, 4.0))
    assert second.stations() == [A, B]


def test_propagate_rejects_infeasible_extensions():
    instance = worked_instance(budget=1.5)
    agent = instance.agents[0]
    ctx = independent(instance)
    first = propagate(root_label(agent), A, agent, ctx, instance)
    assert propagate(first, B, agent, ctx, instance) is None
    assert propagate(first, A, agent, ctx, instance) is None
    assert propagate(root_label(agent), B, agent, ctx, instance, excluded=frozenset({B})) is None


def test_dominance_examples():
    better = Label(node=1, t=0.0, A=3.0, rho=0.8, alpha=0.0)
    worse = Label(node=1, t=0.0, A=3.5, rho=0.7, alpha=0.0)
    costly = Label(node=1, t=0.0, A=4.0, rho=0.8, alpha=0.0)
    assert dominates(better, worse)
    assert not dominates(costly, worse)
    assert not dominates(worse, costly)
    twin = Label(node=1, t=0.0, A=3.0, rho=0.8, alpha=0.0)
    assert dominates(better, twin) and dominates(twin, better)


def test_dominance_requires_same_node():
    with pytest.raises(ValueError):
        dominates(Label(node=0, t=0, A=0, rho=0, alpha=0), Label(node=1, t=0, A=0, rho=0, alpha=0))


def test_lh_search_certain_station():
    instance = single_station_instance(p=1.0, travel=1.0)
    best = lh_search(instance.agents[0], instance, independent(instance))[0]
    assert best.stations == (0,)
    assert best.cost.alpha == pytest.approx(1.0)


def test_lh_search_worked_instance(worked):
    best = lh_search(worked.agents[0], worked, independent(worked))[0]
    assert best.stations == (A, B)
    assert best.cost.alpha == pytest.approx(4.0)
    assert best.visits[1].planned_arrival == pytest.approx(2.0)


def test_lh_search_matches_exhaustive_optimum_when_hopeless():
    instance = worked_instance(probabilities=(0.0, 0.0))
    agent = instance.agents[0]
    best = lh_search(agent, instance, independent(instance))[0]
    assert best.cost.alpha == pytest.approx(exact_single_optimum(agent, instance).cost.alpha)
    assert best.cost.alpha == pytest.approx(1.0 + 10.0)


def test_lh_search_degenerate_policy():
    instance = worked_instance(budget=0.5)
    policy = lh_search(instance.agents[0], instance, independent(instance))[0]
    assert len(policy) == 0
    assert policy.cost.rho == 0.0
    assert policy.cost.alpha == 10.0


def test_lh_search_n_best_ordered(worked):
    candidates = lh_search(worked.agents[0], worked, independent(worked), n_best=5)
    alphas = [c.cost.alpha for c in candidates]
    assert alphas == sorted(alphas)
    assert candidates[0].stations == (A, B)
    assert len({c.stations for c in candidates}) == len(candidates)


def test_lh_search_rejects_zero_n_best(worked):
    with pytest.raises(ValueError):
        lh_search(worked.agents[0], worked, independent(worked), n_best=0)


def test_lh_search_from_intermediate_node(worked):
    agent = worked.agents[0]
    best = lh_search(agent, worked, independent(worked), origin=A, elapsed=1.0, excluded=[A])[0]
    assert best.stations == (B,)
    assert best.origin == A
    assert best.start_time == pytest.approx(1.0)
    assert best.visits[0].planned_arrival == pytest.approx(2.0)


def test_dead_end_mode_returns_maximal_policies(worked):
    search = LabelSetting(worked.agents[0], worked, independent(worked), terminal_mode=TerminalMode.DEAD_END)
    policies = search.run()
    assert policies[0].stations == (A, B)
    assert all(len(p) == 2 for p in policies)


def test_pop_keys_are_monotone(generated):
    agent = generated.agents[0]
    search = LabelSetting(agent, generated, independent(generated))
    search.run()
    keys = search.stats.popped_keys
    assert keys == sorted(keys)
    assert search.stats.popped >= 1


def test_dominance_never_improves_on_full_enumeration(generated):
    agent = generated.agents[0]
    pruned = lh_search(agent, generated, independent(generated))[0]
    full = lh_search(agent, generated, independent(generated), use_dominance=False)[0]
    assert full.cost.alpha <= pruned.cost.alpha + 1e-12


def test_to_policy_reconstructs_visits(worked):
    agent = worked.agents[0]
    ctx = independent(worked)
    label = propagate(propagate(root_label(agent), A, agent, ctx, worked), B, agent, ctx, worked)
    policy = to_policy(label, agent)
    assert policy.stations == (A, B)
    assert policy.origin == agent.start
    assert policy.cost.alpha == pytest.approx(4.0)


def test_candidate_ordering_ties_by_length():
    short = make_policy([1], 5.0)
    long = make_policy([0, 1], 5.0)
    assert candidate_cost_ordering([long, short]) == [short, long]


def test_candidate_ordering_empty():
    assert candidate_cost_ordering([]) == []


def test_candidate_ordering_is_deterministic():
    policies = [make_policy([v], alpha) for v, alpha in [(3, 2.0), (1, 2.0), (2, 1.0), (0, 7.0)]]
    expected = candidate_cost_ordering(policies)
    shuffled = list(policies)
    random.Random(4).shuffle(shuffled)
    assert candidate_cost_ordering(shuffled) == expected
    assert [p.stations for p in expected] == [(2,), (1,), (3,), (0,)]
