"""Spectrum sharing between a UAV fleet and a terrestrial primary link.

One UAV relays primary traffic in exchange for spectrum that the others use to
stream sensing data; every UAV refines its position inside its region with
tabular Q-learning.
"""
from .allocator import Allocation, allocate
from .engine import RunConfig, RunResult, ScenarioChange, lifetime_run, run
from .errors import InfeasibleAllocation, SingularityError, ValidationError
from .learner import LearningParams, QTable
from .presets import Experiment, load_config, load_preset
from .scenario import GridSpec, PhysicalParams, Scenario, ScenarioTemplate, random_scenario

__version__ = "0.1.0"
