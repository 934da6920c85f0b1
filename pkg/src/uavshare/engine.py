"""Runs x episodes x steps orchestration, energy accounting and metrics.

Agents never interact, so each agent's episodes are simulated back to back by
one compiled kernel call; stepping all agents in lockstep gives the same
numbers because every agent owns its random stream (keyed by run and region).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numba
import numpy as np

from . import allocator
from .allocator import Allocation
from .channel import primary_rate, sensing_rate
from .errors import ValidationError
from .learner import LearningParams, QTable, _q_update, _random_legal, _reward, _select_action, region_tables
from .scenario import Scenario, build_scenario, ground_position

METRIC_FIELDS = (
    "sum_rate", "cum_reward", "moves", "transmissions", "final_energy",
    "energy_rate", "gap_moves", "steps_run", "alive", "final_state",
)
_COL = {name: i for i, name in enumerate(METRIC_FIELDS)}


@dataclass(frozen=True)
class ScenarioChange:
    """Scripted environment change applied at the start of ``episode``.

    ``signal`` is the dynamicity level compared against the threshold; cells
    relocate ground nodes or the emergency center when given.
    """

    episode: int
    signal: float
    primary_rx_cell: int | None = None
    primary_tx_cell: int | None = None
    emergency_cell: int | None = None
    priorities: dict | None = None

    def apply(self, scenario: Scenario) -> Scenario:
        grid, nodes = scenario.grid, scenario.nodes
        if self.primary_rx_cell is not None:
            nodes = replace(nodes, primary_rx=ground_position(grid, self.primary_rx_cell))
        if self.primary_tx_cell is not None:
            nodes = replace(nodes, primary_tx=ground_position(grid, self.primary_tx_cell))
        if self.emergency_cell is not None:
            p = grid.cell_to_position(self.emergency_cell)
            nodes = replace(nodes, emergency_center=p._replace(z=nodes.emergency_center.z))
        prio = scenario.prio
        if self.priorities is not None:
            prio = type(prio)({int(k): float(v) for k, v in self.priorities.items()})
        return build_scenario(grid, nodes, scenario.phys, prio)


@dataclass(frozen=True)
class RunConfig:
    runs: int = 20
    episodes: int = 40
    steps: int = 75
    mode: int = 0
    dynamicity_threshold: float = math.inf
    lifetime_mode: bool = False
    master_seed: int = 0
    enforce_battery: bool = True
    schedule: tuple[ScenarioChange, ...] = ()

    def validate(self) -> None:
        for name in ("runs", "episodes"):
            if getattr(self, name) < 1:
                raise ValidationError(name, "must be >= 1")
        if self.steps < 0:
            raise ValidationError("steps", "must be >= 0")
        if self.mode not in range(5):
            raise ValidationError("mode", "must be one of 0..4")
        if not self.dynamicity_threshold >= 0:
            raise ValidationError("dynamicity_threshold", "must be >= 0 (use inf to disable)")
        if self.master_seed < 0:
            raise ValidationError("master_seed", "must be non-negative")
        for change in self.schedule:
            if not 0 <= change.episode < self.episodes:
                raise ValidationError("schedule", f"episode {change.episode} outside the run")


class ModePolicy(NamedTuple):
    regions: str     # "prioritized" | "random"
    allocation: str  # "matching" | "random"
    mobility: str    # "learning" | "random_walk"


_MODES = {
    0: ModePolicy("prioritized", "matching", "learning"),
    1: ModePolicy("prioritized", "random", "learning"),
    2: ModePolicy("random", "random", "learning"),
    3: ModePolicy("random", "matching", "learning"),
    4: ModePolicy("prioritized", "matching", "random_walk"),
}


def apply_mode(mode: int, scenario: Scenario | None = None) -> ModePolicy:
    try:
        return _MODES[mode]
    except KeyError:
        raise ValidationError("mode", f"unknown mode {mode}") from None


def dynamicity_hook(signal: float, threshold: float) -> bool:
    return signal > threshold


def allocate_for_mode(scenario: Scenario, policy: ModePolicy, seed: int, epoch: int = 0) -> Allocation:
    """Emergency-center decision under one ablation policy.

    The primary region is always the one closest to the primary receiver.
    Random choices draw from streams keyed by ``(seed, epoch)`` only, so modes
    that share a random component make the same draw.
    """
    primary = allocator.select_primary_region(scenario)
    weighted = policy.regions == "prioritized"
    if weighted:
        regions = allocator.sensing_regions(scenario, primary)
    else:
        regions = allocator.random_regions(scenario, primary, np.random.default_rng([seed, 1, epoch]))
    if policy.allocation == "matching":
        relay, _ = allocator.select_relay_uav(scenario, primary)
        return allocator.assign_sensing(scenario, relay, primary, regions, weighted_shares=weighted)
    return allocator.random_assignment(
        scenario, primary, regions, np.random.default_rng([seed, 2, epoch]), weighted_shares=weighted)


def rate_table(scenario: Scenario, alloc: Allocation, uav: int) -> np.ndarray:
    """Per-step throughput of ``uav`` at every state of its region."""
    grid = scenario.grid
    region = alloc.region_of(uav)
    out = np.empty(grid.states_per_region)
    for s, cell in enumerate(grid.cells_of(region)):
        pos = grid.cell_to_position(cell)
        if uav == alloc.relay_uav:
            out[s] = primary_rate(pos, scenario)
        else:
            out[s] = sensing_rate(pos, alloc.time_share[uav], scenario)
    return out


def start_state(scenario: Scenario, alloc: Allocation, uav: int) -> int:
    grid = scenario.grid
    _, state = grid.local_state(grid.region_center(alloc.region_of(uav)))
    return state


def agent_stream(master_seed: int, run: int, region: int, epoch: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([master_seed, run, region, epoch]))


def energy_consumption_rate(trace: Sequence[float]) -> float:
    """Joules per step over the first 75% of an episode.

    ``trace`` holds the energy before the first step followed by the energy
    after each step, so an episode of T steps has T + 1 entries.
    """
    steps = len(trace) - 1
    if steps < 4:
        raise ValidationError("steps", "energy consumption rate needs an episode of at least 4 steps")
    k = (3 * steps) // 4
    return (trace[0] - trace[k]) / k


@numba.njit(cache=True)
def _agent_episodes(q, legal, trans, rates, start, energy0, step_limits, until_death, enforce,
                    random_walk, learn, epsilon, alpha, gamma, beta1, beta2, beta3, rtol,
                    psi_move, psi_tx, rng, out, trace):
    for ep in range(step_limits.shape[0]):
        limit = step_limits[ep]
        s = start
        energy = energy0
        prev = rates[s]
        sum_rate = 0.0
        cum_reward = 0.0
        moves = 0
        tx = 0
        gaps = 0
        alive = True
        t = 0
        trace[0] = energy
        while until_death or t < limit:
            if random_walk:
                a = _random_legal(legal[s], rng)
            else:
                a = _select_action(q[s], legal[s], epsilon, rng)
            moved = a != 4
            cost = psi_tx + psi_move if moved else psi_tx
            if enforce and energy < cost:
                alive = False
                break
            s2 = trans[s, a]
            if moved:
                energy -= psi_move
                moves += 1
            now = rates[s2]
            sum_rate += now
            energy -= psi_tx
            tx += 1
            r = _reward(moved, now, prev, beta1, beta2, beta3, rtol)
            if moved and abs(now - prev) <= rtol * max(abs(now), abs(prev)):
                gaps += 1
            cum_reward += r
            if learn:
                _q_update(q, s, a, r, s2, legal, alpha, gamma)
            s = s2
            prev = now
            t += 1
            trace[t] = energy
        horizon = t if until_death else limit
        for k in range(t + 1, horizon + 1):
            trace[k] = energy
        if horizon == 0:
            rate = 0.0
        elif horizon < 4:
            rate = np.nan
        else:
            k75 = (3 * horizon) // 4
            rate = (trace[0] - trace[k75]) / k75
        out[ep, 0] = sum_rate
        out[ep, 1] = cum_reward
        out[ep, 2] = moves
        out[ep, 3] = tx
        out[ep, 4] = energy
        out[ep, 5] = rate
        out[ep, 6] = gaps
        out[ep, 7] = t
        out[ep, 8] = 1.0 if alive else 0.0
        out[ep, 9] = s


@dataclass
class Agent:
    uav: int
    region: int
    role: str
    q: QTable
    rates: np.ndarray
    start: int
    energy0: float
    rng: np.random.Generator


def make_agents(scenario: Scenario, alloc: Allocation, master_seed: int, run: int, epoch: int) -> list[Agent]:
    grid = scenario.grid
    agents = []
    for u in range(scenario.n_uavs):
        region = alloc.region_of(u)
        agents.append(Agent(
            uav=u,
            region=region,
            role=alloc.role(u),
            q=QTable(grid.region_r1, grid.region_r2),
            rates=rate_table(scenario, alloc, u),
            start=start_state(scenario, alloc, u),
            energy0=alloc.post_flight_energy[u],
            rng=agent_stream(master_seed, run, region, epoch),
        ))
    return agents


def simulate_agent(agent: Agent, step_limits: np.ndarray, config: RunConfig, params: LearningParams,
                   phys, *, until_death: bool = False, random_walk: bool = False, learn: bool = True) -> np.ndarray:
    """Run consecutive episodes of one agent; returns an ``(episodes, len(METRIC_FIELDS))`` array."""
    legal, trans = region_tables(agent.q.width, agent.q.height)
    enforce = config.enforce_battery or config.lifetime_mode or until_death
    if until_death:
        span = int(agent.energy0 // phys.psi_tx) + 2
    else:
        span = int(step_limits.max(initial=0)) + 1
    out = np.zeros((len(step_limits), len(METRIC_FIELDS)))
    trace = np.empty(span)
    _agent_episodes(agent.q.values, legal, trans, agent.rates, agent.start, float(agent.energy0),
                    np.ascontiguousarray(step_limits, dtype=np.int64), until_death, enforce,
                    random_walk, learn and not random_walk,
                    params.epsilon, params.alpha, params.gamma, params.beta1, params.beta2, params.beta3,
                    params.rate_rtol, phys.psi_move, phys.psi_tx, agent.rng, out, trace)
    return out


@dataclass
class RunResult:
    scenario: Scenario
    config: RunConfig
    params: LearningParams
    metrics: dict[str, np.ndarray]
    region: np.ndarray
    is_relay: np.ndarray
    start_energy: np.ndarray
    allocations: list[tuple[int, Allocation]] = field(default_factory=list)
    reallocation_episodes: list[int] = field(default_factory=list)
    final_qtables: list[QTable] = field(default_factory=list)
    final_scenario: Scenario | None = None

    @property
    def allocation(self) -> Allocation:
        return self.allocations[0][1]

    def role(self, run: int, episode: int, uav: int) -> str:
        return "relay" if self.is_relay[run, episode, uav] else "sensing"

    def relay_lifetime(self) -> np.ndarray:
        """Transmissions of the relay UAV per (run, episode)."""
        tx = self.metrics["transmissions"]
        return np.where(self.is_relay, tx, 0).sum(axis=2)

    def sum_throughput(self) -> np.ndarray:
        """Accumulated rate summed over UAVs per (run, episode); exactly rounded."""
        rates = self.metrics["sum_rate"]
        out = np.empty(rates.shape[:2])
        for r in range(rates.shape[0]):
            for e in range(rates.shape[1]):
                out[r, e] = math.fsum(rates[r, e])
        return out

    def energy_ledger_errors(self) -> np.ndarray:
        """``E_start - E_end - (psi_move * moves + psi_tx * transmissions)`` per entry."""
        phys = self.scenario.phys
        m = self.metrics
        spent = phys.psi_move * m["moves"] + phys.psi_tx * m["transmissions"]
        return (self.start_energy - m["final_energy"]) - spent


def run(scenario: Scenario, config: RunConfig, params: LearningParams) -> RunResult:
    """Execute every run of ``config``; deterministic in (scenario, config, params)."""
    config.validate()
    params.validate()
    policy = apply_mode(config.mode, scenario)
    n, runs, episodes = scenario.n_uavs, config.runs, config.episodes

    metrics = {name: np.zeros((runs, episodes, n)) for name in METRIC_FIELDS}
    region = np.zeros((runs, episodes, n), dtype=np.int64)
    is_relay = np.zeros((runs, episodes, n), dtype=bool)
    start_energy = np.zeros((runs, episodes, n))
    events = {c.episode: c for c in config.schedule}

    base_alloc = allocate_for_mode(scenario, policy, config.master_seed, epoch=0)
    allocations: list[tuple[int, Allocation]] = []
    reallocations: list[int] = []
    agents: list[Agent] = []
    scen = scenario

    for r in range(runs):
        scen, alloc, epoch = scenario, base_alloc, 0
        if r == 0:
            allocations.append((0, alloc))
        agents = make_agents(scen, alloc, config.master_seed, r, epoch)
        bounds = sorted({0, episodes, *events})
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            change = events.get(lo)
            if change is not None:
                scen = change.apply(scen)
                if dynamicity_hook(change.signal, config.dynamicity_threshold):
                    scen = _reposition(scen, alloc)
                    alloc = allocate_for_mode(scen, policy, config.master_seed, epoch=lo)
                    epoch = lo
                    agents = make_agents(scen, alloc, config.master_seed, r, epoch)
                    if r == 0:
                        allocations.append((lo, alloc))
                        reallocations.append(lo)
                else:
                    for a in agents:
                        a.rates = rate_table(scen, alloc, a.uav)
            _run_segment(agents, alloc, lo, hi, r, config, params, scen, policy,
                         metrics, region, is_relay, start_energy)

    return RunResult(
        scenario=scenario, config=config, params=params, metrics=metrics, region=region,
        is_relay=is_relay, start_energy=start_energy, allocations=allocations,
        reallocation_episodes=reallocations, final_qtables=[a.q for a in agents], final_scenario=scen,
    )


def _reposition(scenario: Scenario, alloc: Allocation) -> Scenario:
    # UAVs are re-allocated from where they start each episode, with post-flight batteries
    grid = scenario.grid
    cells = tuple(grid.region_center(alloc.region_of(u)) for u in range(scenario.n_uavs))
    nodes = replace(scenario.nodes, uav_initial_cells=cells, uav_initial_energy=alloc.post_flight_energy)
    return build_scenario(grid, nodes, scenario.phys, scenario.prio)


def _run_segment(agents, alloc, lo, hi, r, config, params, scen, policy, metrics, region, is_relay, start_energy):
    count = hi - lo
    random_walk = policy.mobility == "random_walk"
    relay = next(a for a in agents if a.role == "relay")
    others = [a for a in agents if a.role != "relay"]
    if config.lifetime_mode:
        # the episode lasts as long as the relay: without it nobody has spectrum
        relay_out = simulate_agent(relay, np.zeros(count, dtype=np.int64), config, params, scen.phys,
                                   until_death=True, random_walk=random_walk)
        limits = relay_out[:, _COL["steps_run"]].astype(np.int64)
    else:
        limits = np.full(count, config.steps, dtype=np.int64)
        relay_out = simulate_agent(relay, limits, config, params, scen.phys, random_walk=random_walk)
    outs = {relay.uav: relay_out}
    for a in others:
        outs[a.uav] = simulate_agent(a, limits, config, params, scen.phys, random_walk=random_walk)
    for a in agents:
        block = outs[a.uav]
        for name, col in _COL.items():
            metrics[name][r, lo:hi, a.uav] = block[:, col]
        region[r, lo:hi, a.uav] = a.region
        is_relay[r, lo:hi, a.uav] = a.role == "relay"
        start_energy[r, lo:hi, a.uav] = a.energy0


def lifetime_run(scenario: Scenario, config: RunConfig, params: LearningParams) -> RunResult:
    """Run with unbounded episodes; ``result.metrics['transmissions']`` holds per-UAV lifetimes."""
    return run(scenario, replace(config, lifetime_mode=True), params)


def replay(scenario: Scenario, alloc: Allocation, qtables: Sequence[QTable], steps: int,
           rng: np.random.Generator) -> list[dict]:
    """Greedy execution of fixed Q-tables: no exploration, no updates.

    Only greedy ties draw from ``rng``.  Returns one record per (step, uav).
    """
    grid = scenario.grid
    if len(qtables) != scenario.n_uavs:
        raise ValidationError("qtables", f"expected {scenario.n_uavs} tables, got {len(qtables)}")
    for q in qtables:
        if (q.width, q.height) != (grid.region_r1, grid.region_r2):
            raise ValidationError("qtables", f"table for a {q.width}x{q.height} region, scenario uses "
                                             f"{grid.region_r1}x{grid.region_r2}")
    states = [start_state(scenario, alloc, u) for u in range(scenario.n_uavs)]
    rates = [rate_table(scenario, alloc, u) for u in range(scenario.n_uavs)]
    log = []
    for t in range(steps):
        for u, q in enumerate(qtables):
            s = states[u]
            a = int(_select_action(q.values[s], q.legal[s], 0.0, rng))
            s2 = int(q.trans[s, a])
            states[u] = s2
            log.append({
                "step": t, "uav": u, "role": alloc.role(u), "region": alloc.region_of(u),
                "action": a, "cell": grid.global_cell(alloc.region_of(u), s2), "rate": float(rates[u][s2]),
            })
    return log
