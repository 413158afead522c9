"""Blockage-robust joint-transmission beamforming with queue-aware control."""
from .config import ScenarioConfig, load_config
from .sim import run_simulation, sweep
from .solver import SolverOptions, solve_subproblem

__all__ = ["ScenarioConfig", "load_config", "run_simulation", "sweep", "SolverOptions",
           "solve_subproblem"]
__version__ = "0.1.0"
