"""Emergency-center stage: primary region, relay choice, sensing-region matching.

Flight distances are Manhattan hop counts from a UAV's initial cell to a region's
center cell; a UAV's score for a destination is its energy left after that flight.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .channel import TimeAllocation
from .errors import InfeasibleAllocation, ValidationError
from .scenario import Scenario, nearest_region


@dataclass(frozen=True)
class Allocation:
    primary_region: int
    relay_uav: int
    sensing_assignment: Mapping[int, int]
    post_flight_energy: tuple[float, ...]
    flight_hops: tuple[int, ...]
    time_share: Mapping[int, float] = field(default_factory=dict)

    def region_of(self, uav: int) -> int:
        if uav == self.relay_uav:
            return self.primary_region
        return self.sensing_assignment[uav]

    def role(self, uav: int) -> str:
        return "relay" if uav == self.relay_uav else "sensing"

    @property
    def n_uavs(self) -> int:
        return len(self.post_flight_energy)

    def records(self, scenario: Scenario) -> list[dict]:
        """One structured record per UAV, for the run log."""
        out = []
        for u in range(self.n_uavs):
            region = self.region_of(u)
            out.append({
                "uav": u,
                "role": self.role(u),
                "region": region,
                "destination_cell": scenario.grid.region_center(region),
                "hops": self.flight_hops[u],
                "initial_energy": scenario.nodes.uav_initial_energy[u],
                "post_flight_energy": self.post_flight_energy[u],
                "time_share": self.time_share.get(u),
            })
        return out


def flight_hops(scenario: Scenario, uav: int, region: int) -> int:
    grid = scenario.grid
    return grid.hops(scenario.nodes.uav_initial_cells[uav], grid.region_center(region))


def residual_energy(scenario: Scenario, uav: int, region: int) -> float:
    return scenario.nodes.uav_initial_energy[uav] - flight_hops(scenario, uav, region) * scenario.phys.psi_move


def select_primary_region(scenario: Scenario) -> int:
    return nearest_region(scenario.grid, scenario.nodes.primary_rx)


def select_relay_uav(scenario: Scenario, primary_region: int) -> tuple[int, float]:
    """Return ``(uav, score)`` maximizing energy left after flying to the primary region.

    Ties go to the UAV with more initial energy, then to the lower index.
    """
    if scenario.n_uavs < 2:
        raise ValidationError("uav_initial_cells", "relay selection needs at least two UAVs")
    energy = scenario.nodes.uav_initial_energy
    best, best_key = -1, None
    for u in range(scenario.n_uavs):
        key = (residual_energy(scenario, u, primary_region), energy[u], -u)
        if best_key is None or key > best_key:
            best, best_key = u, key
    if best_key[0] < 0:
        raise InfeasibleAllocation(
            f"no UAV can reach primary region {primary_region} with its battery", uav=best)
    return best, best_key[0]


def preference_list(uav: int, scenario: Scenario, regions: Iterable[int]) -> list[int]:
    regions = list(regions)
    return sorted(regions, key=lambda r: (-residual_energy(scenario, uav, r), r))


def _contest_key(scenario: Scenario, uav: int, region: int):
    return (residual_energy(scenario, uav, region), scenario.nodes.uav_initial_energy[uav], -uav)


def sensing_regions(scenario: Scenario, primary_region: int) -> list[int]:
    """The N-1 highest-priority regions other than the primary one, sorted by id."""
    n_needed = scenario.n_uavs - 1
    candidates = [r for r in scenario.prio.positive_regions() if r != primary_region]
    if len(candidates) < n_needed:
        raise InfeasibleAllocation(
            f"only {len(candidates)} prioritized regions besides the primary region, need {n_needed}")
    return sorted(candidates[:n_needed])


def match_regions(scenario: Scenario, uavs: Sequence[int], regions: Sequence[int]) -> tuple[dict[int, int], int]:
    """Contest matching of ``uavs`` onto ``regions``.

    Each free UAV claims its best region not yet refused to it.  A contested
    region goes to the claimant left with more energy after the flight; the
    loser moves on to its next preference.  Returns the assignment and the
    number of claims made (at most ``len(uavs) * len(regions)``).
    """
    if len(regions) < len(uavs):
        raise InfeasibleAllocation(f"{len(uavs)} UAVs but only {len(regions)} regions")
    prefs = {u: preference_list(u, scenario, regions) for u in uavs}
    nxt = dict.fromkeys(uavs, 0)
    holder: dict[int, int] = {}
    free = deque(sorted(uavs))
    claims = 0
    while free:
        u = free.popleft()
        region = prefs[u][nxt[u]]
        nxt[u] += 1
        claims += 1
        current = holder.get(region)
        if current is None:
            holder[region] = u
        elif _contest_key(scenario, u, region) > _contest_key(scenario, current, region):
            holder[region] = u
            free.appendleft(current)
        else:
            free.appendleft(u)
    return {u: r for r, u in holder.items()}, claims


def build_allocation(scenario: Scenario, primary_region: int, relay: int, assignment: Mapping[int, int],
                     weighted_shares: bool = True) -> Allocation:
    """Charge flight energy for every UAV (relay included) and freeze the result."""
    hops, energy = [], []
    for u in range(scenario.n_uavs):
        region = primary_region if u == relay else assignment[u]
        h = flight_hops(scenario, u, region)
        e = scenario.nodes.uav_initial_energy[u] - h * scenario.phys.psi_move
        if e < 0:
            raise InfeasibleAllocation(
                f"UAV {u} would arrive at region {region} with {e:.1f} J", uav=u)
        hops.append(h)
        energy.append(e)
    if weighted_shares:
        shares = TimeAllocation.from_weights({u: scenario.prio.weight(r) for u, r in assignment.items()})
    else:
        shares = TimeAllocation.from_weights(dict.fromkeys(assignment, 1.0))
    return Allocation(
        primary_region=primary_region,
        relay_uav=relay,
        sensing_assignment=dict(sorted(assignment.items())),
        post_flight_energy=tuple(energy),
        flight_hops=tuple(hops),
        time_share=dict(sorted(shares.lam.items())),
    )


def assign_sensing(scenario: Scenario, relay: int, primary_region: int,
                   regions: Sequence[int] | None = None, weighted_shares: bool = True) -> Allocation:
    if regions is None:
        regions = sensing_regions(scenario, primary_region)
    if primary_region in regions:
        raise ValidationError("regions", "sensing regions must exclude the primary region")
    uavs = [u for u in range(scenario.n_uavs) if u != relay]
    assignment, _ = match_regions(scenario, uavs, list(regions))
    return build_allocation(scenario, primary_region, relay, assignment, weighted_shares)


def allocate(scenario: Scenario) -> Allocation:
    """Full emergency-center decision: primary region, relay, then sensing matching."""
    primary = select_primary_region(scenario)
    relay, _ = select_relay_uav(scenario, primary)
    return assign_sensing(scenario, relay, primary)


def random_regions(scenario: Scenario, primary_region: int, rng: np.random.Generator) -> list[int]:
    """N-1 distinct non-primary regions drawn uniformly, ignoring priorities."""
    others = [r for r in range(scenario.n_regions) if r != primary_region]
    picked = rng.choice(len(others), size=scenario.n_uavs - 1, replace=False)
    return sorted(int(others[i]) for i in picked)


def random_assignment(scenario: Scenario, primary_region: int, regions: Sequence[int],
                      rng: np.random.Generator, weighted_shares: bool = True) -> Allocation:
    """Uniformly random relay and injective UAV -> region map."""
    order = [int(u) for u in rng.permutation(scenario.n_uavs)]
    relay = order[0]
    assignment = dict(zip(order[1:], sorted(regions)))
    return build_allocation(scenario, primary_region, relay, assignment, weighted_shares)
