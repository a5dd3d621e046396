"""Howard policy iteration for the HJB equation on an upwind finite-difference grid.

The generator ``A`` of the controlled wealth process is tridiagonal. Row ``i``
holds the jump rates of the approximating Markov chain: ``lower[i]`` towards
node ``i-1``, ``upper[i]`` towards node ``i+1``, and ``diag[i]`` equal to minus
their sum. The drift is upwinded by its own sign (forward difference when the
agent saves, backward when it dissaves), which keeps every rate nonnegative.
Diffusion at the two end nodes uses a mirrored ghost node, so no probability
leaves ``[0, a_max]``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .core_model import (
    C_MIN,
    Grid,
    ModelParams,
    crra_marginal,
    crra_utility,
    drift,
    income,
    inverse_marginal,
)
from .postprocess import PostprocessSettings, postprocess
from .tridiag import solve_tridiagonal

logger = logging.getLogger(__name__)

ROW_SUM_TOL = 1e-12


class SolverError(RuntimeError):
    """Hard failure of a linear solve inside the solver."""


class MMatrixError(SolverError):
    """``rho*I - A`` lost the M-matrix property."""

    def __init__(self, check: "MMatrixCheck", iteration=None):
        self.check = check
        self.iteration = iteration
        where = f" at iteration {iteration}" if iteration is not None else ""
        super().__init__(f"M-matrix check failed{where}; offending rows {list(check.rows)}")


@dataclass(frozen=True)
class UpwindOperator:
    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray
    # +1 forward difference, -1 backward difference, 0 no drift term
    drift_sign: np.ndarray

    def apply(self, v):
        v = np.asarray(v, dtype=float)
        out = self.diag * v
        out[1:] += self.lower[1:] * v[:-1]
        out[:-1] += self.upper[:-1] * v[1:]
        return out

    def to_dense(self):
        n = self.diag.size
        mat = np.diag(self.diag)
        mat[np.arange(1, n), np.arange(n - 1)] = self.lower[1:]
        mat[np.arange(n - 1), np.arange(1, n)] = self.upper[:-1]
        return mat


@dataclass(frozen=True)
class MMatrixCheck:
    ok: bool
    rows: tuple = ()

    def __bool__(self):
        return self.ok


@dataclass(frozen=True)
class SolverSettings:
    """Controls of the Howard iteration.

    ``enforce_mu_nonneg_sigma0`` caps consumption at income (no dissaving)
    when the model has no volatility; it has no effect for ``sigma > 0``.
    """

    tol_foc: float = 5e-6
    tol_hjb: float = 5e-5
    max_iter: int = 2000
    relaxation: float = 1.0
    init_fraction: float = 0.9
    enforce_mu_nonneg_sigma0: bool = True

    def __post_init__(self):
        if not self.tol_foc > 0:
            raise ValueError(f"tol_foc: must be > 0, got {self.tol_foc}")
        if not self.tol_hjb > 0:
            raise ValueError(f"tol_hjb: must be > 0, got {self.tol_hjb}")
        if isinstance(self.max_iter, bool) or not isinstance(self.max_iter, int):
            raise ValueError(f"max_iter: must be an integer, got {self.max_iter!r}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter: must be >= 1, got {self.max_iter}")
        if not 0 < self.relaxation <= 1:
            raise ValueError(f"relaxation: must lie in (0, 1], got {self.relaxation}")
        if not 0 < self.init_fraction <= 1:
            raise ValueError(f"init_fraction: must lie in (0, 1], got {self.init_fraction}")
        if not isinstance(self.enforce_mu_nonneg_sigma0, bool):
            raise ValueError("enforce_mu_nonneg_sigma0: must be a boolean")


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    hjb_residual: float
    foc_error: float
    m_matrix_ok: bool
    # sup |u'(c_n) - V'_n| before the update, an alternative error measure
    foc_gap: float


@dataclass
class PolicySolution:
    v: np.ndarray
    c: np.ndarray
    mu: np.ndarray
    trace: list = field(default_factory=list)
    converged: bool = False
    iterations: int = 0


def build_upwind_operator(c, grid: Grid, params: ModelParams) -> UpwindOperator:
    """Assemble the upwind generator for consumption policy ``c``.

    Args:
        c: consumption on the grid, strictly positive.
        grid: wealth grid.
        params: model parameters.

    Returns:
        The three diagonals of ``A`` plus the chosen difference direction per node.
    """
    c = grid.check_function(c, "c")
    mu = drift(grid.nodes, c, params)
    n, da = grid.n_a, grid.da

    sign = np.sign(mu).astype(np.int8)
    # one-sided stencils only: no forward difference at a_max, no backward at 0
    sign[-1] = min(sign[-1], 0)
    sign[0] = max(sign[0], 0)

    fwd = np.where(sign > 0, mu, 0.0) / da
    bwd = np.where(sign < 0, -mu, 0.0) / da
    diff = 0.5 * params.sigma**2 / da**2

    lower = bwd + diff
    upper = fwd + diff
    lower[0] = 0.0
    upper[-1] = 0.0
    diag = -(lower + upper)
    return UpwindOperator(lower=lower, diag=diag, upper=upper, drift_sign=sign)


def check_m_matrix(op: UpwindOperator, rho) -> MMatrixCheck:
    """Check that ``rho*I - A`` is an M-matrix with at least ``rho`` row slack."""
    b_diag = rho - op.diag
    bad = (b_diag <= 0) | (op.lower < 0) | (op.upper < 0)
    row_sum = rho - (op.diag + op.lower + op.upper)
    bad |= row_sum < rho - ROW_SUM_TOL
    rows = tuple(int(i) for i in np.flatnonzero(bad))
    return MMatrixCheck(ok=not rows, rows=rows)


def _solve_value(op: UpwindOperator, util, rho):
    v = solve_tridiagonal(-op.lower[1:], rho - op.diag, -op.upper[:-1], util)
    if not np.all(np.isfinite(v)):
        raise SolverError("policy evaluation produced non-finite values")
    return v


def policy_evaluation(c, grid: Grid, params: ModelParams) -> np.ndarray:
    """Value of following ``c`` forever: solves ``(rho*I - A(c)) V = u(c)``."""
    c = grid.check_function(c, "c")
    op = build_upwind_operator(c, grid, params)
    check = check_m_matrix(op, params.rho)
    if not check:
        raise MMatrixError(check)
    return _solve_value(op, crra_utility(c, params.gamma), params.rho)


def _improve(v, grid: Grid, params: ModelParams, allow_dissaving=True):
    """Upwind FOC update; returns the new policy and the derivative used at each node."""
    v = grid.check_function(v, "v")
    a, da, n = grid.nodes, grid.da, grid.n_a
    gamma = params.gamma
    c_cap = 100.0 * max(params.r * grid.a_max + params.y, params.y)
    vp_floor = crra_marginal(c_cap, gamma)

    dv = np.diff(v) / da
    vp_fwd = np.full(n, np.nan)
    vp_bwd = np.full(n, np.nan)
    vp_fwd[:-1] = np.maximum(dv, vp_floor)
    vp_bwd[1:] = np.maximum(dv, vp_floor)

    inc = income(a, params)
    c_fwd = np.full(n, np.inf)
    c_bwd = np.full(n, -np.inf)
    c_fwd[:-1] = inverse_marginal(vp_fwd[:-1], gamma)
    c_bwd[1:] = inverse_marginal(vp_bwd[1:], gamma)

    use_fwd = inc - c_fwd > 0
    use_bwd = (inc - c_bwd < 0) & ~use_fwd
    if not allow_dissaving:
        use_bwd[:] = False

    c_ss = np.maximum(inc, C_MIN)
    c = np.where(use_fwd, c_fwd, np.where(use_bwd, c_bwd, c_ss))
    vp = np.where(use_fwd, vp_fwd, np.where(use_bwd, vp_bwd, crra_marginal(c_ss, gamma)))
    return c, vp


def policy_improvement(v, grid: Grid, params: ModelParams, allow_dissaving=True) -> np.ndarray:
    """New consumption policy from the first-order condition ``u'(c) = V'``.

    ``V'`` is the forward difference where the implied drift is positive and the
    backward difference where the implied drift is negative; otherwise the node
    is set to zero drift (``c = r*a + y``). Derivatives are floored so that
    consumption never exceeds 100 times the top-of-grid income.
    """
    return _improve(v, grid, params, allow_dissaving)[0]


def consumption_ceiling(grid: Grid, params: ModelParams, settings: SolverSettings):
    ceiling = np.full(grid.n_a, np.inf)
    # borrowing limit: no dissaving at a = 0
    ceiling[0] = params.y
    if params.sigma == 0 and settings.enforce_mu_nonneg_sigma0:
        ceiling = np.maximum(income(grid.nodes, params), C_MIN)
    return ceiling


def _regularize(c_raw, grid, ceiling, post):
    if post is not None and post.enabled:
        c_raw = postprocess(c_raw, grid, post, ceiling=ceiling)
    return np.maximum(np.minimum(c_raw, ceiling), C_MIN)


def solve_hjb(
    grid: Grid,
    params: ModelParams,
    settings: SolverSettings | None = None,
    postprocess_settings: PostprocessSettings | None = None,
) -> PolicySolution:
    """Howard policy iteration.

    Each iteration evaluates the current policy with a tridiagonal solve,
    improves it through the upwind first-order condition, regularizes it
    (when ``postprocess_settings`` is given and enabled) and relaxes towards it.
    Iteration stops once both the policy change and the HJB residual are below
    their tolerances.

    Args:
        grid: wealth grid.
        params: model parameters.
        settings: iteration controls; defaults to ``SolverSettings()``.
        postprocess_settings: policy regularizer, or None to skip it.

    Returns:
        The final iterate. ``converged`` is false when ``max_iter`` ran out.

    Raises:
        MMatrixError: if any iteration's operator fails the M-matrix check.
    """
    settings = settings or SolverSettings()
    a = grid.nodes
    gamma, rho = params.gamma, params.rho
    ceiling = consumption_ceiling(grid, params, settings)
    allow_dissaving = not (params.sigma == 0 and settings.enforce_mu_nonneg_sigma0)
    omega = settings.relaxation

    c = np.maximum(settings.init_fraction * income(a, params), C_MIN)
    c = np.minimum(c, ceiling)
    trace = []
    converged = False
    it = 0
    for it in range(1, settings.max_iter + 1):
        op = build_upwind_operator(c, grid, params)
        check = check_m_matrix(op, rho)
        if not check:
            raise MMatrixError(check, iteration=it)
        v = _solve_value(op, crra_utility(c, gamma), rho)

        c_raw, vp = _improve(v, grid, params, allow_dissaving)
        c_post = _regularize(c_raw, grid, ceiling, postprocess_settings)
        c_new = omega * c_post + (1.0 - omega) * c

        op_new = build_upwind_operator(c_new, grid, params)
        residual = rho * v - crra_utility(c_new, gamma) - op_new.apply(v)
        hjb_residual = float(np.max(np.abs(residual)))
        foc_error = float(np.max(np.abs(c_new - c)))
        foc_gap = float(np.max(np.abs(crra_marginal(c, gamma) - vp)))
        trace.append(TraceRecord(it, hjb_residual, foc_error, True, foc_gap))
        logger.debug("iter %d residual %.3e foc %.3e", it, hjb_residual, foc_error)

        c = c_new
        if foc_error <= settings.tol_foc and hjb_residual <= settings.tol_hjb:
            converged = True
            break

    if not converged:
        logger.warning("Howard iteration stopped after %d iterations without converging", it)
    v = policy_evaluation(c, grid, params)
    return PolicySolution(
        v=v,
        c=c,
        mu=drift(a, c, params),
        trace=trace,
        converged=converged,
        iterations=it,
    )
