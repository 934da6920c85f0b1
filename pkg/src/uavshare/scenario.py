"""World description: grid and region partition, node placement, constants.

Cells are indexed row-major over the whole grid (``cell = row * length_l1 + col``)
and regions are indexed row-major over the region tiling.  Inside a region the
learner uses its own row-major *state* index, see :meth:`GridSpec.local_state`.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import ValidationError


class Position3D(NamedTuple):
    x: float
    y: float
    z: float


@dataclass(frozen=True)
class GridSpec:
    length_l1: int
    length_l2: int
    region_r1: int
    region_r2: int
    uav_altitude: float = 1.0
    cell_pitch: float = 1.0

    def validate(self) -> None:
        for name in ("length_l1", "length_l2", "region_r1", "region_r2"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValidationError(name, f"must be a positive integer, got {value!r}")
        if self.length_l1 % self.region_r1:
            raise ValidationError("region_r1", "regions must tile length_l1 exactly")
        if self.length_l2 % self.region_r2:
            raise ValidationError("region_r2", "regions must tile length_l2 exactly")
        if not self.uav_altitude > 0:
            raise ValidationError("uav_altitude", "must be > 0")
        if not self.cell_pitch > 0:
            raise ValidationError("cell_pitch", "must be > 0")

    @property
    def n_cells(self) -> int:
        return self.length_l1 * self.length_l2

    @property
    def regions_x(self) -> int:
        return self.length_l1 // self.region_r1

    @property
    def regions_y(self) -> int:
        return self.length_l2 // self.region_r2

    @property
    def n_regions(self) -> int:
        return self.regions_x * self.regions_y

    @property
    def states_per_region(self) -> int:
        return self.region_r1 * self.region_r2

    def _check_cell(self, cell):
        if not 0 <= cell < self.n_cells:
            raise IndexError(f"cell {cell} out of range [0, {self.n_cells})")

    def _check_region(self, region):
        if not 0 <= region < self.n_regions:
            raise IndexError(f"region {region} out of range [0, {self.n_regions})")

    def rowcol(self, cell: int) -> tuple[int, int]:
        self._check_cell(cell)
        return divmod(int(cell), self.length_l1)

    def cell_at(self, row: int, col: int) -> int:
        if not (0 <= row < self.length_l2 and 0 <= col < self.length_l1):
            raise IndexError(f"(row={row}, col={col}) outside the grid")
        return row * self.length_l1 + col

    def cell_to_position(self, cell: int) -> Position3D:
        row, col = self.rowcol(cell)
        return Position3D(col * self.cell_pitch, row * self.cell_pitch, float(self.uav_altitude))

    def region_of(self, cell: int) -> int:
        row, col = self.rowcol(cell)
        return (row // self.region_r2) * self.regions_x + col // self.region_r1

    def region_origin(self, region: int) -> tuple[int, int]:
        """(row, col) of the top-left cell of ``region``."""
        self._check_region(region)
        ry, rx = divmod(int(region), self.regions_x)
        return ry * self.region_r2, rx * self.region_r1

    def cells_of(self, region: int) -> list[int]:
        row0, col0 = self.region_origin(region)
        return [
            self.cell_at(row0 + dr, col0 + dc)
            for dr in range(self.region_r2)
            for dc in range(self.region_r1)
        ]

    def region_center(self, region: int) -> int:
        # even sides round down, so the center always lies inside the region
        row0, col0 = self.region_origin(region)
        return self.cell_at(row0 + self.region_r2 // 2, col0 + self.region_r1 // 2)

    def local_state(self, cell: int) -> tuple[int, int]:
        """Map a grid cell to ``(region, state)``."""
        region = self.region_of(cell)
        row0, col0 = self.region_origin(region)
        row, col = self.rowcol(cell)
        return region, (row - row0) * self.region_r1 + (col - col0)

    def global_cell(self, region: int, state: int) -> int:
        if not 0 <= state < self.states_per_region:
            raise IndexError(f"state {state} out of range for a {self.region_r1}x{self.region_r2} region")
        row0, col0 = self.region_origin(region)
        dr, dc = divmod(int(state), self.region_r1)
        return self.cell_at(row0 + dr, col0 + dc)

    def hops(self, cell_a: int, cell_b: int) -> int:
        """Manhattan distance in cells (4-neighbour moves)."""
        ra, ca = self.rowcol(cell_a)
        rb, cb = self.rowcol(cell_b)
        return abs(ra - rb) + abs(ca - cb)


@dataclass(frozen=True)
class NodeSet:
    primary_tx: Position3D
    primary_rx: Position3D
    emergency_center: Position3D
    uav_initial_cells: tuple[int, ...]
    uav_initial_energy: tuple[float, ...]


@dataclass(frozen=True)
class PhysicalParams:
    p_pt: float = 10e-3
    p_uav: float = 20e-3
    noise_power: float = 1e-9
    path_loss_exponent: float = 2.0
    psi_move: float = 10.0
    psi_tx: float = 0.5

    def validate(self) -> None:
        for name in ("p_pt", "p_uav", "noise_power", "path_loss_exponent"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValidationError(name, "must be finite and > 0")
        if not self.psi_tx > 0:
            raise ValidationError("psi_tx", "must be > 0")
        if not self.psi_move > self.psi_tx:
            raise ValidationError("psi_move", "movement energy must exceed transmission energy")


@dataclass(frozen=True)
class PriorityMap:
    weights: dict[int, float] = field(default_factory=dict)

    def positive_regions(self) -> list[int]:
        """Regions with weight > 0, highest weight first (ties by region id)."""
        regions = [r for r, w in self.weights.items() if w > 0]
        return sorted(regions, key=lambda r: (-self.weights[r], r))

    def weight(self, region: int) -> float:
        return float(self.weights.get(region, 0.0))


@dataclass(frozen=True)
class Scenario:
    grid: GridSpec
    nodes: NodeSet
    phys: PhysicalParams
    prio: PriorityMap

    @property
    def n_uavs(self) -> int:
        return len(self.nodes.uav_initial_cells)

    @property
    def n_regions(self) -> int:
        return self.grid.n_regions

    def cell_to_position(self, cell: int) -> Position3D:
        return self.grid.cell_to_position(cell)

    def region_of(self, cell: int) -> int:
        return self.grid.region_of(cell)

    def cells_of(self, region: int) -> list[int]:
        return self.grid.cells_of(region)

    def to_dict(self) -> dict:
        nodes = self.nodes
        return {
            "grid": asdict(self.grid),
            "nodes": {
                "primary_tx": list(nodes.primary_tx),
                "primary_rx": list(nodes.primary_rx),
                "emergency_center": list(nodes.emergency_center),
                "uav_initial_cells": [int(c) for c in nodes.uav_initial_cells],
                "uav_initial_energy": [float(e) for e in nodes.uav_initial_energy],
            },
            "phys": asdict(self.phys),
            "prio": {"weights": {str(r): float(w) for r, w in sorted(self.prio.weights.items())}},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        try:
            n = data["nodes"]
            nodes = NodeSet(
                primary_tx=Position3D(*map(float, n["primary_tx"])),
                primary_rx=Position3D(*map(float, n["primary_rx"])),
                emergency_center=Position3D(*map(float, n["emergency_center"])),
                uav_initial_cells=tuple(int(c) for c in n["uav_initial_cells"]),
                uav_initial_energy=tuple(float(e) for e in n["uav_initial_energy"]),
            )
            grid = GridSpec(**data["grid"])
            phys = PhysicalParams(**data.get("phys", {}))
            weights = {int(r): float(w) for r, w in data["prio"]["weights"].items()}
        except KeyError as exc:
            raise ValidationError(str(exc.args[0]), "missing from scenario description") from None
        except TypeError as exc:
            raise ValidationError("scenario", str(exc)) from None
        return build_scenario(grid, nodes, phys, PriorityMap(weights))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "Scenario":
        return cls.from_dict(json.loads(Path(path).read_text()))


def build_scenario(grid: GridSpec, nodes: NodeSet, phys: PhysicalParams, prio: PriorityMap) -> Scenario:
    """Validate every component and freeze them into a :class:`Scenario`."""
    grid.validate()
    phys.validate()

    n_uavs = len(nodes.uav_initial_cells)
    if n_uavs < 1:
        raise ValidationError("uav_initial_cells", "at least one UAV is required")
    if len(nodes.uav_initial_energy) != n_uavs:
        raise ValidationError("uav_initial_energy", "needs one entry per UAV")
    if grid.n_regions < n_uavs:
        raise ValidationError("region_r1", f"{grid.n_regions} regions cannot host {n_uavs} UAVs")
    for cell in nodes.uav_initial_cells:
        if not 0 <= cell < grid.n_cells:
            raise ValidationError("uav_initial_cells", f"cell {cell} outside the grid")
    for energy in nodes.uav_initial_energy:
        if not (math.isfinite(energy) and energy > 0):
            raise ValidationError("uav_initial_energy", "energies must be finite and > 0")

    for name in ("primary_tx", "primary_rx"):
        pos = getattr(nodes, name)
        if pos.z != 0:
            raise ValidationError(name, "ground nodes must have z == 0")
    if nodes.primary_tx == nodes.primary_rx:
        raise ValidationError("primary_rx", "primary transmitter and receiver must differ")
    if nodes.emergency_center.z < 0:
        raise ValidationError("emergency_center", "z must be >= 0")

    weights = {int(r): float(w) for r, w in prio.weights.items()}
    for region, w in weights.items():
        if not 0 <= region < grid.n_regions:
            raise ValidationError("weights", f"region {region} does not exist")
        if not math.isfinite(w) or w < 0:
            raise ValidationError("weights", "priority weights must be finite and non-negative")
    if sum(1 for w in weights.values() if w > 0) < n_uavs - 1:
        raise ValidationError("weights", f"need at least {n_uavs - 1} prioritized regions")

    nodes = replace(
        nodes,
        uav_initial_cells=tuple(int(c) for c in nodes.uav_initial_cells),
        uav_initial_energy=tuple(float(e) for e in nodes.uav_initial_energy),
    )
    return Scenario(grid, nodes, phys, PriorityMap(weights))


def ground_position(grid: GridSpec, cell: int) -> Position3D:
    row, col = grid.rowcol(cell)
    return Position3D(col * grid.cell_pitch, row * grid.cell_pitch, 0.0)


def nearest_region(grid: GridSpec, point: Position3D) -> int:
    """Region whose center cell (at UAV altitude) is closest to ``point``; ties to the lowest id."""
    best, best_d2 = 0, math.inf
    for region in range(grid.n_regions):
        c = grid.cell_to_position(grid.region_center(region))
        d2 = (c.x - point.x) ** 2 + (c.y - point.y) ** 2 + (c.z - point.z) ** 2
        if d2 < best_d2:
            best, best_d2 = region, d2
    return best


@dataclass(frozen=True)
class ScenarioTemplate:
    grid: GridSpec
    phys: PhysicalParams = PhysicalParams()
    n_uavs: int = 5
    ec_altitude: float | None = None  # None: twice the UAV altitude
    energy_range: tuple[int, int] = (4000, 5000)


def random_scenario(seed: int, template: ScenarioTemplate) -> Scenario:
    """Draw a scenario; a pure function of ``(seed, template)``.

    Energies are whole joules so every later energy value stays an exact
    multiple of 0.5 J.  The prioritized regions never include the region
    closest to the primary receiver, which the allocator reserves for the relay.
    """
    grid = template.grid
    grid.validate()
    n = template.n_uavs
    if n > grid.n_cells:
        raise ValidationError("n_uavs", f"cannot place {n} UAVs on {grid.n_cells} cells")
    if n > grid.n_regions:
        raise ValidationError("n_uavs", f"{grid.n_regions} regions cannot host {n} UAVs")
    if grid.n_cells < 3:
        raise ValidationError("length_l1", "grid needs at least 3 cells for PT, PR and the emergency center")

    rng = np.random.default_rng(seed)
    uav_cells = rng.choice(grid.n_cells, size=n, replace=False)
    lo, hi = template.energy_range
    energies = rng.integers(lo, hi + 1, size=n)
    pt_cell, pr_cell, ec_cell = rng.choice(grid.n_cells, size=3, replace=False)

    ec_z = 2.0 * grid.uav_altitude if template.ec_altitude is None else template.ec_altitude
    ec_row, ec_col = grid.rowcol(int(ec_cell))
    nodes = NodeSet(
        primary_tx=ground_position(grid, int(pt_cell)),
        primary_rx=ground_position(grid, int(pr_cell)),
        emergency_center=Position3D(ec_col * grid.cell_pitch, ec_row * grid.cell_pitch, float(ec_z)),
        uav_initial_cells=tuple(int(c) for c in uav_cells),
        uav_initial_energy=tuple(float(e) for e in energies),
    )

    primary = nearest_region(grid, nodes.primary_rx)
    others = [r for r in range(grid.n_regions) if r != primary]
    chosen = rng.choice(len(others), size=n - 1, replace=False)
    ranks = rng.permutation(n - 1) + 1
    weights = {int(others[i]): float(w) for i, w in zip(chosen, ranks)}
    return build_scenario(grid, nodes, template.phys, PriorityMap(weights))
