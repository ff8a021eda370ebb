"""
Shared fixtures: the worked two-station instance, the two-agent conflict pair
and a small generated instance.

Node layout of the hand-made instances: stations A = 0 and B = 1 first, then
the start locations. Travel start->A = 1, A->B = 1, start->B = 2 minutes.
"""

from pathlib import Path

import pytest

from polesearch.instance_gen import GenerationParams, generate
from polesearch.model import AgentSpec, Instance, StationGraph

FIXTURES = Path(__file__).parent / "fixtures"

A, B = 0, 1


def worked_instance(
    probabilities=(0.5, 0.5),
    budget=5.0,
    penalty=10.0,
    beta_global=700.0,
    usage_cost=None,
    recovery_enabled=False,
    obs_threshold=0.0,
    mu=None,
) -> Instance:
    travel = [
        [0.0, 1.0, 1.0],
        [1.0, 0.0, 2.0],
        [1.0, 2.0, 0.0],
    ]
    graph = StationGraph.from_travel_matrix(list(probabilities), travel, mu=mu)
    agent = AgentSpec(
        id=0, t0=0.0, start=2, budget=budget, penalty=penalty, usage_cost=usage_cost or {}
    )
    return Instance(
        graph=graph,
        agents=(agent,),
        beta_global=beta_global,
        recovery_enabled=recovery_enabled,
        obs_threshold=obs_threshold,
    )


def conflict_instance(probabilities=(0.5, 0.5), beta_global=700.0, budget=5.0) -> Instance:
    """Two agents leaving the same spot 0.1 min apart, both preferring A then B"""
    travel = [
        [0.0, 1.0, 1.0, 1.0],
        [1.0, 0.0, 2.0, 2.0],
        [1.0, 2.0, 0.0, 0.0],
        [1.0, 2.0, 0.0, 0.0],
    ]
    graph = StationGraph.from_travel_matrix(list(probabilities), travel)
    agents = (
        AgentSpec(id=0, t0=0.0, start=2, budget=budget, penalty=10.0),
        AgentSpec(id=1, t0=0.1, start=3, budget=budget, penalty=10.0),
    )
    return Instance(graph=graph, agents=agents, beta_global=beta_global)


def single_station_instance(p=0.5, travel=1.0, penalty=10.0, beta_global=700.0) -> Instance:
    graph = StationGraph.from_travel_matrix([p], [[0.0, travel], [travel, 0.0]])
    agent = AgentSpec(id=0, t0=0.0, start=1, penalty=penalty)
    return Instance(graph=graph, agents=(agent,), beta_global=beta_global)


@pytest.fixture
def worked():
    return worked_instance()


@pytest.fixture
def conflict():
    return conflict_instance()


@pytest.fixture
def generated():
    params = GenerationParams(
        n_agents=3,
        start_radius=100.0,
        search_radius=1000.0,
        start_spread=1.0,
        mean_availability=0.25,
    )
    return generate(params, seed=11)


@pytest.fixture
def golden_path():
    return FIXTURES / "golden_instance.json"
