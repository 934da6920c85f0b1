"""Brute-force references for testing.

Nothing here imports the simulation path: geometry, rates, rewards and the
matching rule are re-derived from the scenario fields so that agreement with
the engine is evidence rather than tautology.
"""
from __future__ import annotations

import itertools
import math

import numpy as np

from .errors import OracleGuardError

MAX_VI_SIDE = 9
MAX_MATCHING = 8
_MOVES = ((-1, 0), (1, 0), (0, -1), (0, 1), (0, 0))


def _region_cells(scenario, region):
    g = scenario.grid
    per_row = g.length_l1 // g.region_r1
    top = (region // per_row) * g.region_r2
    left = (region % per_row) * g.region_r1
    return [(top + i) * g.length_l1 + left + j for i in range(g.region_r2) for j in range(g.region_r1)]


def _xyz(scenario, cell):
    g = scenario.grid
    return (cell % g.length_l1) * g.cell_pitch, (cell // g.length_l1) * g.cell_pitch, g.uav_altitude


def _d2(p, q):
    return sum((a - b) * (a - b) for a, b in zip(p, q))


def cell_rate(scenario, cell, role, lam=1.0):
    """Throughput at ``cell``; written out longhand from the link budget."""
    ph, nd = scenario.phys, scenario.nodes
    p = _xyz(scenario, cell)
    e = ph.path_loss_exponent / 2.0
    if role == "relay":
        a = ph.p_pt / _d2(nd.primary_tx, p) ** e
        b = ph.p_uav / _d2(p, nd.primary_rx) ** e
        return 0.5 * math.log2(1.0 + a * b / (ph.noise_power + a + b))
    snr = ph.p_uav / _d2(p, nd.emergency_center) ** e / ph.noise_power
    return lam / 2.0 * math.log2(1.0 + snr)


def best_cell(region, role, scenario, lam=1.0):
    """Exhaustive argmax of the throughput over the region; ties to the lowest cell."""
    best, best_rate = None, -math.inf
    for cell in sorted(_region_cells(scenario, region)):
        rate = cell_rate(scenario, cell, role, lam)
        if rate > best_rate:
            best, best_rate = cell, rate
    return best, best_rate


def region_mdp(scenario, region, role, lam=1.0):
    """Deterministic region MDP: (successor table with -1 for illegal moves, rates per state)."""
    g = scenario.grid
    w, h = g.region_r1, g.region_r2
    cells = _region_cells(scenario, region)
    nxt = np.full((w * h, 5), -1, dtype=int)
    for s in range(w * h):
        i, j = divmod(s, w)
        for a, (di, dj) in enumerate(_MOVES):
            if 0 <= i + di < h and 0 <= j + dj < w:
                nxt[s, a] = (i + di) * w + j + dj
    rates = np.array([cell_rate(scenario, c, role, lam) for c in cells])
    return nxt, rates


def _step_reward(moved, new, old, b1, b2, b3, rtol):
    if not moved:
        return b2
    if new > old and new - old > rtol * max(abs(new), abs(old)):
        return b1
    return b3


def value_iteration(nxt, rates, gamma, betas=(1.0, 0.5, -1.0), rtol=1e-9, tol=1e-10, max_sweeps=100_000):
    """Optimal action values of a region MDP; illegal actions hold -inf."""
    n = len(rates)
    if n > MAX_VI_SIDE * MAX_VI_SIDE:
        raise OracleGuardError(f"{n} states exceeds the {MAX_VI_SIDE}x{MAX_VI_SIDE} guard")
    b1, b2, b3 = betas
    reward = np.full(nxt.shape, -np.inf)
    for s in range(n):
        for a in range(5):
            t = nxt[s, a]
            if t >= 0:
                reward[s, a] = _step_reward(a != 4, rates[t], rates[s], b1, b2, b3, rtol)
    legal = nxt >= 0
    q = np.where(legal, 0.0, -np.inf)
    for _ in range(max_sweeps):
        v = q.max(axis=1)
        new = np.where(legal, reward + gamma * v[np.where(legal, nxt, 0)], -np.inf)
        delta = np.max(np.abs(new[legal] - q[legal]))
        q = new
        if delta < tol:
            return q
    raise RuntimeError("value iteration did not converge")


def greedy_absorbing_state(q, nxt, start):
    """Follow argmax (lowest action on ties) from ``start``; None if it never settles."""
    s, seen = start, set()
    while s not in seen:
        seen.add(s)
        a = int(np.argmax(q[s]))
        if a == 4:
            return s
        s = int(nxt[s, a])
    return None


# --- matching -------------------------------------------------------------

def _hops(scenario, cell, region):
    g = scenario.grid
    cells = _region_cells(scenario, region)
    top, left = divmod(cells[0], g.length_l1)
    centre = (top + g.region_r2 // 2, left + g.region_r1 // 2)
    r, c = divmod(cell, g.length_l1)
    return abs(r - centre[0]) + abs(c - centre[1])


def _left(scenario, uav, region):
    n = scenario.nodes
    return n.uav_initial_energy[uav] - _hops(scenario, n.uav_initial_cells[uav], region) * scenario.phys.psi_move


def relay_argmax(scenario, region):
    """Relay by exhaustive comparison of energy left after flying to ``region``."""
    energy = scenario.nodes.uav_initial_energy
    scores = [(_left(scenario, u, region), energy[u], -u) for u in range(len(energy))]
    best = max(scores)
    return -best[2], best[0]


def _uav_rank(scenario, uav, regions):
    return sorted(regions, key=lambda r: (-_left(scenario, uav, r), r))


def _region_prefers(scenario, region, u, v):
    e = scenario.nodes.uav_initial_energy
    return (_left(scenario, u, region), e[u], -u) > (_left(scenario, v, region), e[v], -v)


def contest_replay(scenario, uavs, regions, order):
    """Sequential claim/contest procedure processing free UAVs in ``order``."""
    ranks = {u: _uav_rank(scenario, u, regions) for u in uavs}
    pointer = dict.fromkeys(uavs, 0)
    held = {}
    queue = list(order)
    while queue:
        u = queue.pop(0)
        r = ranks[u][pointer[u]]
        pointer[u] += 1
        if r not in held:
            held[r] = u
        elif _region_prefers(scenario, r, u, held[r]):
            queue.append(held[r])
            held[r] = u
        else:
            queue.append(u)
    return {u: r for r, u in held.items()}


def exhaustive_matching(uavs, regions, scenario):
    """Claim-optimal stable assignment found by enumerating every injective map.

    A map is stable when no UAV would rather have a region whose holder loses
    the contest to it.  Among stable maps the one every UAV weakly prefers is
    the outcome of the claim/contest rule; it is checked to exist and be unique.
    """
    uavs, regions = list(uavs), list(regions)
    if len(uavs) > MAX_MATCHING:
        raise OracleGuardError(f"{len(uavs)} UAVs exceeds the matching guard of {MAX_MATCHING}")
    ranks = {u: _uav_rank(scenario, u, regions) for u in uavs}
    stable = []
    for perm in itertools.permutations(regions, len(uavs)):
        m = dict(zip(uavs, perm))
        holder = {r: u for u, r in m.items()}
        ok = True
        for u in uavs:
            for r in ranks[u][:ranks[u].index(m[u])]:
                h = holder.get(r)
                if h is None or _region_prefers(scenario, r, u, h):
                    ok = False
                    break
            if not ok:
                break
        if ok:
            stable.append(m)
    best = [m for m in stable
            if all(ranks[u].index(m[u]) <= ranks[u].index(o[u]) for o in stable for u in uavs)]
    if len(best) != 1:
        raise RuntimeError(f"expected a unique claim-optimal stable matching, found {len(best)}")
    return best[0]


def all_order_replays(scenario, uavs, regions):
    """Outcomes of the contest rule over every processing order (distinct results only)."""
    outcomes = []
    for order in itertools.permutations(uavs):
        m = contest_replay(scenario, uavs, regions, order)
        if m not in outcomes:
            outcomes.append(m)
    return outcomes
