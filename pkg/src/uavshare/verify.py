"""Invariant suite behind ``uavshare verify`` and ``run --verify``."""
from __future__ import annotations

from dataclasses import replace
from typing import NamedTuple

import numpy as np

from . import allocator, engine, oracle
from .errors import InfeasibleAllocation, OracleGuardError
from .learner import QTable, q_update


class Check(NamedTuple):
    name: str
    status: str  # PASS | FAIL | SKIP
    detail: str = ""


def _check(name, ok, detail=""):
    return Check(name, "PASS" if ok else "FAIL", detail)


def boundedness(params, calls: int = 100_000, seed: int = 0, side: int = 3) -> Check:
    rng = np.random.default_rng(seed)
    q = QTable(side, side)
    legal = q.legal
    betas = np.array([params.beta1, params.beta2, params.beta3])
    bound = params.q_bound
    worst = 0.0
    for _ in range(calls):
        s = int(rng.integers(q.n_states))
        a = int(rng.choice(np.flatnonzero(legal[s])))
        s2 = int(q.trans[s, a])
        q_update(q, s, a, float(rng.choice(betas)), s2, params)
        worst = max(worst, abs(q.values[s, a]))
    return _check("boundedness", worst <= bound, f"max |Q| = {worst:.6f}, bound = {bound:.6f}")


def suite(exp, seed: int, result=None, boundedness_calls: int = 100_000) -> list[Check]:
    """Run every check; an infeasible allocation aborts the rest cleanly."""
    checks = []
    problems = exp.learning.problems()
    checks.append(_check("learning-parameters", not problems, "; ".join(problems)))
    checks.append(boundedness(exp.learning, boundedness_calls, seed))

    scenario = exp.scenario_for(seed)
    try:
        primary = allocator.select_primary_region(scenario)
        relay, _ = allocator.select_relay_uav(scenario, primary)
        alloc = allocator.assign_sensing(scenario, relay, primary)
    except InfeasibleAllocation as exc:
        checks.append(Check("allocation", "FAIL", f"infeasible: {exc}; suite aborted"))
        return checks
    checks.append(Check("allocation", "PASS", f"relay {relay} -> region {primary}"))

    want, _ = oracle.relay_argmax(scenario, primary)
    checks.append(_check("relay-argmax", relay == want, f"allocator {relay}, oracle {want}"))

    uavs = sorted(alloc.sensing_assignment)
    regions = sorted(alloc.sensing_assignment.values())
    try:
        best = oracle.exhaustive_matching(uavs, regions, scenario)
        replays = oracle.all_order_replays(scenario, uavs, regions)
        ok = replays == [best] and best == dict(alloc.sensing_assignment)
        checks.append(_check("matching", ok, f"{len(replays)} distinct outcome(s) over all orders"))
    except OracleGuardError as exc:
        checks.append(Check("matching", "SKIP", str(exc)))

    rate_err = 0.0
    for u in range(scenario.n_uavs):
        ours = engine.rate_table(scenario, alloc, u)
        ref = [oracle.cell_rate(scenario, c, alloc.role(u), alloc.time_share.get(u, 1.0))
               for c in scenario.grid.cells_of(alloc.region_of(u))]
        rate_err = max(rate_err, float(np.max(np.abs(ours - ref) / np.abs(ref))))
    checks.append(_check("channel-rates", rate_err < 1e-12, f"max relative error {rate_err:.2e}"))

    grid = scenario.grid
    if grid.states_per_region <= oracle.MAX_VI_SIDE ** 2:
        agree = True
        for u in range(scenario.n_uavs):
            region, role, lam = alloc.region_of(u), alloc.role(u), alloc.time_share.get(u, 1.0)
            cell, _ = oracle.best_cell(region, role, scenario, lam)
            nxt, rates = oracle.region_mdp(scenario, region, role, lam)
            qstar = oracle.value_iteration(nxt, rates, exp.learning.gamma,
                                           (exp.learning.beta1, exp.learning.beta2, exp.learning.beta3))
            end = oracle.greedy_absorbing_state(qstar, nxt, engine.start_state(scenario, alloc, u))
            agree &= end is not None and grid.global_cell(region, end) == cell
        checks.append(_check("oracle-consistency", agree, "value iteration absorbs at best cell"))
    else:
        checks.append(Check("oracle-consistency", "SKIP", "region larger than the 9x9 guard"))

    if problems:
        for name in ("energy-ledger", "learned-policy", "determinism"):
            checks.append(Check(name, "SKIP", "learning parameters invalid"))
        return checks

    cfg = replace(exp.run, master_seed=seed)
    if result is None:
        result = engine.run(scenario, cfg, exp.learning)
    err = float(np.abs(result.energy_ledger_errors()).max(initial=0.0))
    checks.append(_check("energy-ledger", err == 0.0, f"max |error| = {err!r} J"))

    if grid.states_per_region <= oracle.MAX_VI_SIDE ** 2 and not cfg.lifetime_mode and cfg.mode == 0:
        final = result.allocations[-1][1]
        misses = []
        for u, q in enumerate(result.final_qtables):
            region = final.region_of(u)
            cell, _ = oracle.best_cell(region, final.role(u), result.final_scenario, final.time_share.get(u, 1.0))
            end = q.absorbing_state(engine.start_state(result.final_scenario, final, u))
            if end is None or grid.global_cell(region, end) != cell:
                misses.append(u)
        checks.append(_check("learned-policy", not misses,
                             "all UAVs absorb at the best cell" if not misses else f"UAVs {misses} miss"))
    else:
        checks.append(Check("learned-policy", "SKIP", "needs mode 0, fixed-length episodes and a guarded region"))

    again = engine.run(scenario, cfg, exp.learning)
    same = all(np.array_equal(result.metrics[k], again.metrics[k], equal_nan=True) for k in result.metrics)
    checks.append(_check("determinism", same, "repeat run bit-identical" if same else "repeat run differs"))
    return checks
