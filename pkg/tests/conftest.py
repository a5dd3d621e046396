import numpy as np
import pytest

from hjbfpk import Grid, ModelParams, PostprocessSettings, SolverSettings, solve_hjb, solve_stationary


@pytest.fixture(scope="session")
def baseline():
    grid, params = Grid(), ModelParams()
    settings, post = SolverSettings(), PostprocessSettings()
    sol = solve_hjb(grid, params, settings, post)
    return grid, params, settings, post, sol


@pytest.fixture(scope="session")
def baseline_density(baseline):
    grid, params, _, _, sol = baseline
    return solve_stationary(sol, grid, params)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
