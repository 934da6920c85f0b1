"""Deterministic line-of-sight gains and the three throughput expressions.

All rates are spectral efficiencies in bits/s/Hz and keep the half-duplex 1/2
factor.  Gains have unit reference at 1 m, so ``gain = d ** -exponent``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

from .errors import SingularityError, ValidationError
from .scenario import Position3D, Scenario


def distance_sq(a: Position3D, b: Position3D) -> float:
    return (a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2 + (a[2] - b[2]) ** 2


def link_gain(a: Position3D, b: Position3D, exponent: float = 2.0) -> float:
    d2 = distance_sq(a, b)
    if d2 == 0:
        raise SingularityError(f"coincident endpoints at {tuple(a)}")
    return d2 ** (-0.5 * exponent)


def direct_primary_gain(scenario: Scenario) -> float:
    # PT and PR are assumed too far apart for a usable direct link
    return 0.0


def primary_rate(relay_pos: Position3D, scenario: Scenario) -> float:
    """Amplify-and-forward rate of the primary pair through a relay at ``relay_pos``."""
    phys, nodes = scenario.phys, scenario.nodes
    a = phys.p_pt * link_gain(nodes.primary_tx, relay_pos, phys.path_loss_exponent)
    b = phys.p_uav * link_gain(relay_pos, nodes.primary_rx, phys.path_loss_exponent)
    direct = phys.p_pt * direct_primary_gain(scenario)
    return 0.5 * math.log2(1.0 + direct + a * b / (phys.noise_power + a + b))


def sensing_rate(uav_pos: Position3D, lambda_i: float, scenario: Scenario) -> float:
    if not 0.0 < lambda_i <= 1.0:
        raise ValidationError("lambda", f"time share must lie in (0, 1], got {lambda_i}")
    phys = scenario.phys
    g = link_gain(uav_pos, scenario.nodes.emergency_center, phys.path_loss_exponent)
    return 0.5 * lambda_i * math.log2(1.0 + phys.p_uav * g / phys.noise_power)


@dataclass(frozen=True)
class TimeAllocation:
    """Share of the sensing half-slot granted to each sensing UAV."""

    lam: Mapping[int, float]

    def __post_init__(self):
        for uav, share in self.lam.items():
            if not 0.0 < share <= 1.0:
                raise ValidationError("lambda", f"UAV {uav} share {share} outside (0, 1]")
        if math.fsum(self.lam.values()) > 1.0 + 1e-12:
            raise ValidationError("lambda", "time shares sum to more than 1")

    @classmethod
    def from_weights(cls, weights: Mapping[int, float]) -> "TimeAllocation":
        """Shares proportional to the priority weight of each UAV's region.

        Equal weights (including all-zero) give an equal split.  A mix of zero
        and positive weights is rejected since a zero share is not allowed.
        """
        if not weights:
            return cls({})
        values = list(weights.values())
        if all(w == values[0] for w in values):
            return cls({u: 1.0 / len(values) for u in weights})
        if any(w <= 0 for w in values):
            raise ValidationError("weights", "cannot derive time shares from zero-priority regions")
        total = math.fsum(values)
        return cls({u: w / total for u, w in weights.items()})


def total_sensing_rate(positions: Mapping[int, Position3D], alloc: TimeAllocation, scenario: Scenario) -> float:
    if set(positions) != set(alloc.lam):
        raise ValidationError("positions", "positions and time allocation must cover the same sensing UAVs")
    return math.fsum(sensing_rate(positions[u], alloc.lam[u], scenario) for u in sorted(positions))
