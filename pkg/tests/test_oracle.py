import numpy as np
import pytest

from uavshare import engine, oracle
from uavshare.channel import primary_rate
from uavshare.errors import OracleGuardError
from uavshare.learner import LearningParams
from uavshare.presets import PRESETS, load_preset
from uavshare.scenario import (GridSpec, NodeSet, PhysicalParams, Position3D, PriorityMap, ScenarioTemplate,
                               build_scenario, random_scenario)


def _scen(grid, pt, pr, ec, weights=None):
    n = 2
    nodes = NodeSet(Position3D(*pt), Position3D(*pr), Position3D(*ec), tuple(range(n)), (4500.0,) * n)
    return build_scenario(grid, nodes, PhysicalParams(), PriorityMap(weights or {1: 1.0}))


def test_best_cell_corner_next_to_ec():
    g = GridSpec(9, 9, 3, 3)
    # region 4 spans rows/cols 3..5; EC hovers just outside its top-left corner
    s = _scen(g, (0, 0, 0), (8, 8, 0), (2.5, 2.5, 1.0))
    cell, rate = oracle.best_cell(4, "sensing", s)
    assert cell == g.cell_at(3, 3)
    assert rate > 0


def test_best_cell_single_cell_region():
    g = GridSpec(3, 3, 1, 1)
    s = _scen(g, (0, 0, 0), (2, 2, 0), (1, 1, 2))
    for r in range(9):
        assert oracle.best_cell(r, "relay", s)[0] == r


def test_best_cell_relay_sweep():
    g = GridSpec(9, 9, 3, 3)
    s = _scen(g, (0, 4, 0), (8, 4, 0), (4, 4, 5))
    cell, rate = oracle.best_cell(4, "relay", s)
    rates = {c: primary_rate(g.cell_to_position(c), s) for c in g.cells_of(4)}
    assert cell == max(sorted(rates), key=rates.get)
    assert rate == pytest.approx(rates[cell], rel=1e-14)


def test_value_iteration_myopic_limit():
    s = random_scenario(1, ScenarioTemplate(GridSpec(9, 9, 3, 3)))
    nxt, rates = oracle.region_mdp(s, 2, "sensing")
    q = oracle.value_iteration(nxt, rates, 0.0)
    for st in range(9):
        for a in range(5):
            t = nxt[st, a]
            if t < 0:
                assert q[st, a] == -np.inf
            elif a == 4:
                assert q[st, a] == 0.5
            else:
                assert q[st, a] == (1.0 if rates[t] > rates[st] else -1.0)


@pytest.mark.parametrize("name", [n for n, row in PRESETS.items() if row[2] <= 9])
def test_best_cell_and_value_iteration_agree(name):
    exp = load_preset(name)
    s = exp.scenario_for(0)
    g = s.grid
    start = g.local_state(g.region_center(0))[1]
    for region in range(g.n_regions):
        for role in ("relay", "sensing"):
            cell, _ = oracle.best_cell(region, role, s)
            nxt, rates = oracle.region_mdp(s, region, role)
            q = oracle.value_iteration(nxt, rates, exp.learning.gamma)
            end = oracle.greedy_absorbing_state(q, nxt, start)
            assert g.global_cell(region, end) == cell


def test_learned_q_approaches_optimum():
    # every state-action pair has to keep being tried, so explore on every step
    exp = load_preset("table1-9x9")
    params = LearningParams(epsilon=1.0)
    s = exp.scenario_for(0)
    alloc = engine.allocate_for_mode(s, engine.apply_mode(0), 0)
    for agent in engine.make_agents(s, alloc, 0, 0, 0):
        nxt, rates = oracle.region_mdp(s, agent.region, agent.role, alloc.time_share.get(agent.uav, 1.0))
        qstar = oracle.value_iteration(nxt, rates, params.gamma)
        legal = nxt >= 0
        dist = []
        for _ in range(4):
            engine.simulate_agent(agent, np.full(10, 75), exp.run, params, s.phys)
            dist.append(np.abs(agent.q.values[legal] - qstar[legal]).max())
        assert all(b < a for a, b in zip(dist, dist[1:])), dist
        assert dist[-1] < 0.05


def test_guards():
    s = random_scenario(0, ScenarioTemplate(GridSpec(20, 20, 10, 10), n_uavs=3))
    nxt, rates = oracle.region_mdp(s, 0, "relay")
    with pytest.raises(OracleGuardError):
        oracle.value_iteration(nxt, rates, 0.3)
    big = random_scenario(0, ScenarioTemplate(GridSpec(12, 12, 3, 3), n_uavs=10))
    with pytest.raises(OracleGuardError):
        oracle.exhaustive_matching(range(9), range(9), big)


def test_oracles_pure():
    s = random_scenario(3, ScenarioTemplate(GridSpec(9, 9, 3, 3)))
    assert oracle.best_cell(5, "sensing", s, 0.3) == oracle.best_cell(5, "sensing", s, 0.3)
    uavs, regions = [0, 1, 2], [1, 3, 5]
    assert oracle.exhaustive_matching(uavs, regions, s) == oracle.exhaustive_matching(uavs, regions, s)
    assert len(oracle.all_order_replays(s, uavs, regions)) == 1
