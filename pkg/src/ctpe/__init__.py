"""Single-trajectory LSTD policy evaluation for continuous-time diffusions."""

from .basis import FourierBasis, FunctionInSpan, build_basis, generator_action
from .diffusion import (
    DiffusionModel,
    RewardSpec,
    Trajectory,
    integrate_path_functional,
    ornstein_uhlenbeck,
    simulate_trajectory,
    torus_brownian,
    torus_langevin,
)
from .discretization import DiscretizationScheme, kappa_coefficients, lagrange_weights, make_scheme
from .lstd import LstdEstimate, assemble, estimate_value, fit, solve
from .metrics import fit_rate, sobolev_norm, trace_ratio
from .population import (
    ValueOracle,
    discretized_fixed_point_coeffs,
    population_theta_bar,
    true_value_coeffs,
)

__version__ = "0.1.0"
