"""Finite-volume simulation and Gibbs-measure diagnostics for path-dependent
interacting diffusions on Z^d."""

from .drift import DriftSpec, build as build_drift, builtins
from .lattice import Box, InteractionRange, enlarge, gamma, shift_config, weighted_sq_norm
from .paths import PathConfig, TimeGrid, concat, ito_sum, running_max
from .sim import Ensemble, SimConfig, sample_Pn, solve_finite_volume
from .stats import Estimate

__version__ = "0.1.0"

__all__ = [
    "DriftSpec", "build_drift", "builtins",
    "Box", "InteractionRange", "enlarge", "gamma", "shift_config", "weighted_sq_norm",
    "PathConfig", "TimeGrid", "concat", "ito_sum", "running_max",
    "Ensemble", "SimConfig", "sample_Pn", "solve_finite_volume",
    "Estimate",
]
