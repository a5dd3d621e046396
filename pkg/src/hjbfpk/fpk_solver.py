"""Stationary wealth density from the adjoint of the HJB generator."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core_model import Grid, ModelParams
from .hjb_solver import PolicySolution, SolverError, build_upwind_operator

CLIP_TOL = 1e-12


class UnsupportedConfiguration(ValueError):
    """The requested computation is not defined for this parameter set."""


@dataclass
class StationaryDensity:
    p: np.ndarray
    mass: float
    flux_left: float
    flux_right: float
    # smallest entry of the raw linear-solve output, before clipping
    min_raw: float = 0.0


def _interface_flux(p, op, da):
    # net probability flow from node i to node i+1
    return (op.upper[:-1] * p[:-1] - op.lower[1:] * p[1:]) * da


def compute_flux(p, policy: PolicySolution, grid: Grid, params: ModelParams) -> np.ndarray:
    """Probability flux ``J = mu*p - sigma**2/2 * p'`` on the grid.

    The advective part is upwinded exactly as in the generator, so the flux is
    the discrete flow the chain actually carries: ``J`` evaluated at the end
    nodes is the flow through the first and last cell faces, and at interior
    nodes it is the mean of the two adjacent faces (a central difference of
    ``p`` in the diffusive part).
    """
    p = grid.check_function(p, "p")
    op = build_upwind_operator(policy.c, grid, params)
    faces = _interface_flux(p, op, grid.da)
    flux = np.empty(grid.n_a)
    flux[0] = faces[0]
    flux[-1] = faces[-1]
    flux[1:-1] = 0.5 * (faces[:-1] + faces[1:])
    return flux


def solve_stationary(policy: PolicySolution, grid: Grid, params: ModelParams) -> StationaryDensity:
    """Solve ``A^T p = 0`` with unit trapezoid mass for the converged policy.

    One equation (the node with the largest generator diagonal) is swapped for
    the normalization row. Tiny negative entries are clipped and the density
    renormalized.

    Raises:
        UnsupportedConfiguration: for ``sigma == 0`` or an unconverged policy.
        SolverError: when the system is singular or the density is clearly negative.
    """
    if params.sigma == 0:
        raise UnsupportedConfiguration(
            "stationary density degenerate for sigma = 0; use the Monte Carlo diagnostic instead"
        )
    if not policy.converged:
        raise UnsupportedConfiguration("stationary density needs a converged policy")

    op = build_upwind_operator(policy.c, grid, params)
    w = grid.trapezoid_weights()
    system = op.to_dense().T
    k = int(np.argmax(np.abs(op.diag)))
    system[k, :] = w
    rhs = np.zeros(grid.n_a)
    rhs[k] = 1.0
    try:
        p = np.linalg.solve(system, rhs)
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"stationary system is singular: {exc}") from exc

    min_raw = float(np.min(p))
    if min_raw < -CLIP_TOL:
        raise SolverError(f"stationary density has negative entries (min {min_raw:.3e})")
    p = np.where(p < 0, 0.0, p)
    p = p / (p @ w)

    flux = compute_flux(p, policy, grid, params)
    return StationaryDensity(
        p=p,
        mass=float(p @ w),
        flux_left=float(flux[0]),
        flux_right=float(flux[-1]),
        min_raw=min_raw,
    )
