"""Continuous-time consumption-savings solver: upwind HJB policy iteration, stationary FPK density and diagnostics."""

from .core_model import C_MIN, DomainError, Grid, ModelParams, crra_marginal, crra_utility, drift, inverse_marginal
from .diagnostics import (
    MertonReport,
    SimulationSettings,
    W2Report,
    merton_validation,
    monte_carlo_density_check,
    simulate_population,
    w2_contraction_check,
    wasserstein2_1d,
)
from .fpk_solver import StationaryDensity, UnsupportedConfiguration, compute_flux, solve_stationary
from .hjb_solver import (
    MMatrixError,
    PolicySolution,
    SolverError,
    SolverSettings,
    UpwindOperator,
    build_upwind_operator,
    check_m_matrix,
    policy_evaluation,
    policy_improvement,
    solve_hjb,
)
from .postprocess import PostprocessSettings, postprocess, project_slope_band, smooth

__version__ = "0.1.0"
