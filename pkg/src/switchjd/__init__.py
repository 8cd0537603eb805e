"""Monte Carlo tools for regime-switching jump diffusions."""

from .config import Config, load_config, parse_config
from .coupled_solver import fixed_point_solve, sample_frozen
from .errors import (ConfigError, DivergenceError, StructuralError, SwitchJDError, UsageError)
from .estimators import (EstimateResult, estimate_exit_time, estimate_green, estimate_harmonic,
                         estimate_hitting_prob, levy_system_residual)
from .lattice import Lattice, LatticeField, build_lattice
from .model import BoundaryData, ModelSpec, irreducibility_check, validate_model
from .regions import Ball, Box, interval
from .sampler import SamplerConfig, StopRule, sample_path, sample_paths, simulate
from .verify import TheoremReport

__version__ = "0.1.0"
