"""Acceptance criteria C1-C11, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v`` (lines also appear in the
terminal summary) or ``python tests/test_acceptance.py``.  Heavy simulations
are cached per session so the ledger check (C9) reuses every run made here.
"""
import subprocess
import sys
from dataclasses import replace
from functools import lru_cache

import numpy as np

from uavshare import allocator, engine, oracle
from uavshare.learner import LearningParams, QTable, q_update
from uavshare.presets import PRESETS, load_preset
from uavshare.scenario import GridSpec, ScenarioTemplate, random_scenario

MODES = (0, 1, 2, 3, 4)
LEDGER = {}  # run label -> max |energy ledger error|


def _run(exp, seed, **changes):
    scen = exp.scenario_for(seed)
    res = engine.run(scen, replace(exp.run, master_seed=seed, **changes), exp.learning)
    label = f"{exp.name}/seed{seed}/" + ",".join(f"{k}={v}" for k, v in sorted(changes.items()))
    LEDGER[label] = float(np.abs(res.energy_ledger_errors()).max(initial=0.0))
    return scen, res


@lru_cache(maxsize=None)
def convergence_runs():
    """C1: per seed, does every UAV's final greedy policy settle on the oracle cell."""
    exp = load_preset("table1-9x9")
    hits = []
    for seed in range(100):
        scen, res = _run(exp, seed)
        alloc = res.allocation
        ok = True
        for u, q in enumerate(res.final_qtables):
            region = alloc.region_of(u)
            cell, _ = oracle.best_cell(region, alloc.role(u), scen, alloc.time_share.get(u, 1.0))
            end = q.absorbing_state(engine.start_state(scen, alloc, u))
            ok &= end is not None and scen.grid.global_cell(region, end) == cell
        hits.append(ok)
    return np.array(hits)


@lru_cache(maxsize=None)
def movement_runs():
    """C2: moves[seed, run, episode, uav] on the largest region layout."""
    exp = load_preset("table1-81x81-9regions")
    return np.stack([_run(exp, seed)[1].metrics["moves"] for seed in range(5)])


@lru_cache(maxsize=None)
def mode_runs():
    """C3 and C5: per mode, per seed final-5 sum throughput and mean energy rate."""
    exp = load_preset("table1-32x32-16regions")
    thr = {m: [] for m in MODES}
    rate = {m: [] for m in MODES}
    for seed in range(20):
        for m in MODES:
            _, res = _run(exp, seed, mode=m)
            thr[m].append(res.sum_throughput()[:, -5:].mean())
            rate[m].append(np.nanmean(res.metrics["energy_rate"]))
    return {m: np.mean(thr[m]) for m in MODES}, {m: np.mean(rate[m]) for m in MODES}


@lru_cache(maxsize=None)
def lifetime_runs():
    """C4: mean relay transmissions in lifetime mode, per mode."""
    exp = load_preset("table1-32x32-16regions")
    life = {m: [] for m in MODES}
    for seed in range(20):
        for m in MODES:
            _, res = _run(exp, seed, mode=m, lifetime_mode=True)
            life[m].append(res.relay_lifetime().mean())
    return {m: np.mean(life[m]) for m in MODES}


def _templates():
    # a spread of grids, fleet sizes and (narrow) energy ranges to provoke ties
    grids = [GridSpec(9, 9, 3, 3), GridSpec(16, 16, 4, 4), GridSpec(12, 8, 4, 2), GridSpec(32, 32, 8, 8)]
    out = []
    for g in grids:
        for n in (2, 3, 4, 5, 6):
            if n <= g.n_regions:
                out.append(ScenarioTemplate(g, n_uavs=n))
                out.append(ScenarioTemplate(g, n_uavs=n, energy_range=(4000, 4010)))
    return out


def check_c1():
    hits = convergence_runs()
    frac = hits.mean()
    return frac >= 0.95, f"oracle convergence: {frac:.0%} of 100 seeds have every UAV at its best cell (need >= 95%)"


def check_c2():
    moves = movement_runs()  # seed, run, episode, uav
    early = moves[:, :, :5].mean(axis=(1, 2))   # seed x uav
    late = moves[:, :, -5:].mean(axis=(1, 2))
    ratio = early / late
    ok = bool((ratio >= 2).all() and ((early >= 1000) & (early <= 3000)).all() and (late < 1000).all())
    return ok, (f"movement decay: early mean {early.mean():.0f} (range {early.min():.0f}-{early.max():.0f}), "
                f"late mean {late.mean():.0f} (range {late.min():.0f}-{late.max():.0f}), "
                f"early/late {ratio.min():.2f}-{ratio.max():.2f} (need >= 2, early in [1000, 3000], late < 1000)")


def check_c3():
    thr, _ = mode_runs()
    ok = thr[0] >= thr[1] >= thr[2] and thr[0] > thr[4]
    vals = ", ".join(f"m{m}={thr[m]:.1f}" for m in MODES)
    return ok, f"throughput order m0>=m1>=m2, m0>m4: {vals}"


def check_c4():
    life = lifetime_runs()
    ok = life[0] >= life[3] > life[1] >= life[2] and life[0] > life[4]
    vals = ", ".join(f"m{m}={life[m]:.1f}" for m in MODES)
    return ok, f"relay lifetime order m0>=m3>m1>=m2, m0>m4: {vals}"


def check_c5():
    _, rate = mode_runs()
    order = (0, 3, 1, 2, 4)
    ok = all(rate[a] <= rate[b] * 1.01 for a, b in zip(order, order[1:]))
    vals = ", ".join(f"m{m}={rate[m]:.4f}" for m in order)
    return ok, f"energy rate order m0<=m3<=m1<=m2<=m4 (1% ties): {vals}"


def check_c6():
    templates = _templates()
    wrong = 0
    for i in range(1000):
        scen = random_scenario(i, templates[i % len(templates)])
        primary = allocator.select_primary_region(scen)
        got = allocator.select_relay_uav(scen, primary)
        want = oracle.relay_argmax(scen, primary)
        wrong += got != want
    return wrong == 0, f"relay selection: {1000 - wrong}/1000 scenarios match the exhaustive argmax"


def check_c7():
    templates = [t for t in _templates() if t.n_uavs - 1 <= 5]
    wrong = 0
    for i in range(500):
        scen = random_scenario(10_000 + i, templates[i % len(templates)])
        primary = allocator.select_primary_region(scen)
        relay, _ = allocator.select_relay_uav(scen, primary)
        regions = allocator.sensing_regions(scen, primary)
        uavs = [u for u in range(scen.n_uavs) if u != relay]
        got, _ = allocator.match_regions(scen, uavs, regions)
        replays = oracle.all_order_replays(scen, uavs, regions)
        wrong += replays != [got] or oracle.exhaustive_matching(uavs, regions, scen) != got
    return wrong == 0, f"matching: {500 - wrong}/500 instances equal the contest replay over all orders"


def check_c8():
    params = LearningParams()
    bound = max(abs(params.beta1), abs(params.beta2), abs(params.beta3)) / (1 - params.gamma)
    rng = np.random.default_rng(8)
    q = QTable(3, 3)
    n = 1_000_000
    states = rng.integers(0, q.n_states, n)
    picks = rng.random(n)
    rewards = rng.choice([params.beta1, params.beta2, params.beta3], n)
    worst = 0.0
    legal_sets = [np.flatnonzero(q.legal[s]) for s in range(q.n_states)]
    for s, p, r in zip(states, picks, rewards):
        acts = legal_sets[s]
        a = int(acts[int(p * len(acts))])
        q_update(q, int(s), a, float(r), int(q.trans[s, a]), params)
        v = abs(q.values[s, a])
        if v > worst:
            worst = v
    ok = worst <= bound and np.abs(q.values).max() <= bound
    return ok, f"boundedness: max |Q| = {worst:.6f} after 1e6 updates, bound 1/0.7 = {bound:.6f}"


def check_c9():
    convergence_runs()
    movement_runs()
    mode_runs()
    lifetime_runs()
    worst = max(LEDGER.values())
    return worst == 0.0, f"energy ledger: max |error| = {worst!r} J over {len(LEDGER)} acceptance runs"


def check_c10(tmp):
    outs = []
    for k in range(2):
        cmd = [sys.executable, "-m", "uavshare", "run", "--preset", "table1-16x16", "--seed", "11",
               "--out", str(tmp / f"p{k}"), "--no-figures"]
        subprocess.run(cmd, check=True, capture_output=True)
        outs.append(next((tmp / f"p{k}").rglob("metrics.csv")).read_bytes())
    same = outs[0] == outs[1]
    return same, f"determinism: two processes wrote {len(outs[0])} byte CSVs, identical = {same}"


# independent transcription: columns of the reference simulation table
TABLE1 = [
    # grid, regions, region side, states, q size, iterations, episodes, steps
    (9, 9, 3, 9, 45, 20, 40, 75),
    (16, 16, 4, 16, 80, 20, 40, 125),
    (27, 9, 9, 81, 405, 20, 40, 600),
    (32, 64, 4, 16, 80, 20, 40, 125),
    (32, 16, 8, 64, 320, 20, 40, 500),
    (64, 256, 4, 16, 80, 20, 40, 125),
    (64, 64, 8, 64, 320, 20, 40, 500),
    (64, 16, 16, 256, 1280, 20, 40, 2000),
    (81, 81, 9, 81, 405, 20, 40, 600),
    (81, 9, 27, 729, 3645, 20, 40, 6000),
]


def check_c11():
    got = []
    for name in PRESETS:
        s = load_preset(name).structure()
        assert s["grid"][0] == s["grid"][1] and s["region_size"][0] == s["region_size"][1]
        got.append((s["grid"][0], s["regions"], s["region_size"][0], s["states"], s["qtable_size"],
                    s["runs"], s["episodes"], s["steps"]))
    ok = sorted(got) == sorted(TABLE1) and len(got) == 10
    return ok, f"table structure: {sum(g in TABLE1 for g in got)}/10 preset columns match exactly"


def test_c1_oracle_convergence(criterion):
    assert criterion("C1", *check_c1())


def test_c2_movement_decay(criterion):
    assert criterion("C2", *check_c2())


def test_c3_mode_order_throughput(criterion):
    assert criterion("C3", *check_c3())


def test_c4_mode_order_lifetime(criterion):
    assert criterion("C4", *check_c4())


def test_c5_mode_order_energy_rate(criterion):
    assert criterion("C5", *check_c5())


def test_c6_relay_selection_exact(criterion):
    assert criterion("C6", *check_c6())


def test_c7_matching_valid(criterion):
    assert criterion("C7", *check_c7())


def test_c8_q_bounded(criterion):
    assert criterion("C8", *check_c8())


def test_c9_energy_ledger(criterion):
    assert criterion("C9", *check_c9())


def test_c10_determinism_across_processes(criterion, tmp_path):
    assert criterion("C10", *check_c10(tmp_path))


def test_c11_table_structure(criterion):
    assert criterion("C11", *check_c11())


if __name__ == "__main__":
    import tempfile
    from pathlib import Path

    checks = [check_c1, check_c2, check_c3, check_c4, check_c5, check_c6, check_c7, check_c8, check_c9]
    for i, fn in enumerate(checks, 1):
        ok, detail = fn()
        print(f"[C{i}] {'PASS' if ok else 'FAIL'}  {detail}", flush=True)
    with tempfile.TemporaryDirectory() as d:
        ok, detail = check_c10(Path(d))
    print(f"[C10] {'PASS' if ok else 'FAIL'}  {detail}")
    ok, detail = check_c11()
    print(f"[C11] {'PASS' if ok else 'FAIL'}  {detail}")
