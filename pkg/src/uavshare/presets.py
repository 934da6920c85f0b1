"""Experiment configuration: a JSON document with one section per building block.

Sections: ``grid``, ``phys``, ``fleet`` (how random scenarios are drawn),
``learning`` and ``run``.  An optional ``scenario`` section pins a fixed world
instead of drawing one per seed.  The bundled presets are the ten grid/region
layouts of the reference simulation table.
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .engine import RunConfig, ScenarioChange
from .errors import ValidationError
from .learner import N_ACTIONS, LearningParams
from .scenario import GridSpec, PhysicalParams, Scenario, ScenarioTemplate, random_scenario

# (name, grid side, region side, regions, states, q-table size, steps)
TABLE1 = (
    ("table1-9x9", 9, 3, 9, 9, 45, 75),
    ("table1-16x16", 16, 4, 16, 16, 80, 125),
    ("table1-27x27", 27, 9, 9, 81, 405, 600),
    ("table1-32x32-64regions", 32, 4, 64, 16, 80, 125),
    ("table1-32x32-16regions", 32, 8, 16, 64, 320, 500),
    ("table1-64x64-256regions", 64, 4, 256, 16, 80, 125),
    ("table1-64x64-64regions", 64, 8, 64, 64, 320, 500),
    ("table1-64x64-16regions", 64, 16, 16, 256, 1280, 2000),
    ("table1-81x81-81regions", 81, 9, 81, 81, 405, 600),
    ("table1-81x81-9regions", 81, 27, 9, 729, 3645, 6000),
)
TABLE1_RUNS = 20
TABLE1_EPISODES = 40


@dataclass(frozen=True)
class Experiment:
    name: str
    template: ScenarioTemplate
    learning: LearningParams
    run: RunConfig
    scenario: Scenario | None = None  # fixed world; None draws one per seed

    @property
    def grid(self) -> GridSpec:
        return self.template.grid

    def structure(self) -> dict:
        g = self.grid
        return {
            "grid": (g.length_l1, g.length_l2),
            "cells": g.n_cells,
            "regions": g.n_regions,
            "region_size": (g.region_r1, g.region_r2),
            "states": g.states_per_region,
            "qtable_size": g.states_per_region * N_ACTIONS,
            "runs": self.run.runs,
            "episodes": self.run.episodes,
            "steps": self.run.steps,
        }

    def scenario_for(self, seed: int) -> Scenario:
        return self.scenario if self.scenario is not None else random_scenario(seed, self.template)

    def with_run(self, **changes) -> "Experiment":
        return replace(self, run=replace(self.run, **changes))

    def to_dict(self) -> dict:
        t = self.template
        out = {
            "name": self.name,
            "grid": asdict(t.grid),
            "phys": asdict(t.phys),
            "fleet": {"n_uavs": t.n_uavs, "ec_altitude": t.ec_altitude, "energy_range": list(t.energy_range)},
            "learning": asdict(self.learning),
            "run": {f.name: getattr(self.run, f.name) for f in fields(RunConfig) if f.name != "schedule"},
        }
        out["run"]["schedule"] = [asdict(c) for c in self.run.schedule]
        if self.scenario is not None:
            out["scenario"] = self.scenario.to_dict()
        return out

    def digest(self) -> str:
        """Short stable hash of the configuration (seed excluded)."""
        body = self.to_dict()
        body["run"].pop("master_seed")
        text = json.dumps(body, sort_keys=True, default=repr)
        return hashlib.sha256(text.encode()).hexdigest()[:12]


def _section(data: dict, key: str, cls):
    section = data.get(key, {})
    if not isinstance(section, dict):
        raise ValidationError(key, "section must be a mapping")
    known = {f.name for f in fields(cls)}
    unknown = set(section) - known
    if unknown:
        raise ValidationError(key, f"unknown keys {sorted(unknown)}")
    return section


def experiment_from_dict(data: dict, check_learning: bool = True) -> Experiment:
    grid = GridSpec(**_section(data, "grid", GridSpec))
    phys = PhysicalParams(**_section(data, "phys", PhysicalParams))
    fleet = dict(data.get("fleet", {}))
    if "energy_range" in fleet:
        fleet["energy_range"] = tuple(int(e) for e in fleet["energy_range"])
    template = ScenarioTemplate(grid=grid, phys=phys, **fleet)
    learning = LearningParams(**_section(data, "learning", LearningParams))
    run_section = dict(_section(data, "run", RunConfig))
    schedule = tuple(ScenarioChange(**c) for c in run_section.pop("schedule", ()))
    if "dynamicity_threshold" in run_section:
        run_section["dynamicity_threshold"] = float(run_section["dynamicity_threshold"])
    run = RunConfig(schedule=schedule, **run_section)
    scenario = Scenario.from_dict(data["scenario"]) if "scenario" in data else None
    if scenario is not None and scenario.grid != grid:
        raise ValidationError("scenario", "fixed scenario grid differs from the grid section")
    exp = Experiment(name=str(data.get("name", "custom")), template=template, learning=learning,
                     run=run, scenario=scenario)
    grid.validate()
    phys.validate()
    if check_learning:
        learning.validate()
    run.validate()
    return exp


def load_config(path, check_learning: bool = True) -> Experiment:
    """Read a JSON experiment; ``check_learning=False`` lets the verifier report bad rewards itself."""
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError("config", f"{path}: {exc}") from None
    return experiment_from_dict(data, check_learning)


def _table1_dict(name, side, region, steps) -> dict:
    # every constant is spelled out so a dumped preset is self-describing
    return {
        "name": name,
        "grid": {"length_l1": side, "length_l2": side, "region_r1": region, "region_r2": region,
                 "uav_altitude": 1.0, "cell_pitch": 1.0},
        "phys": {"p_pt": 10e-3, "p_uav": 20e-3, "noise_power": 1e-9, "path_loss_exponent": 2.0,
                 "psi_move": 10.0, "psi_tx": 0.5},
        "fleet": {"n_uavs": 5, "ec_altitude": None, "energy_range": [4000, 5000]},
        "learning": {"alpha": 0.1, "gamma": 0.3, "epsilon": 0.1, "beta1": 1.0, "beta2": 0.5, "beta3": -1.0,
                     "rate_rtol": 1e-9},
        "run": {"runs": TABLE1_RUNS, "episodes": TABLE1_EPISODES, "steps": steps, "mode": 0,
                "dynamicity_threshold": float("inf"), "lifetime_mode": False, "master_seed": 0,
                "enforce_battery": False, "schedule": []},
    }


def check_table1(exp: Experiment, row) -> None:
    name, side, region, n_regions, states, qsize, steps = row
    s = exp.structure()
    expected = {
        "grid": (side, side), "cells": side * side, "regions": n_regions, "region_size": (region, region),
        "states": states, "qtable_size": qsize, "runs": TABLE1_RUNS, "episodes": TABLE1_EPISODES, "steps": steps,
    }
    bad = {k: (s[k], v) for k, v in expected.items() if s[k] != v}
    if bad:
        raise ValidationError("preset", f"{name} does not match its table column: {bad}")
    if qsize != states * N_ACTIONS:
        raise ValidationError("preset", f"{name}: q-table size {qsize} is not states x {N_ACTIONS}")


PRESETS = {row[0]: row for row in TABLE1}


def preset_dict(name: str) -> dict:
    if name not in PRESETS:
        raise ValidationError("preset", f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    _, side, region, _, _, _, steps = PRESETS[name]
    return copy.deepcopy(_table1_dict(name, side, region, steps))


def load_preset(name: str) -> Experiment:
    exp = experiment_from_dict(preset_dict(name))
    check_table1(exp, PRESETS[name])
    return exp
