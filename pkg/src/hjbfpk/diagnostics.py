"""Validation checks: Euler-Maruyama simulation, W2 contraction, Merton limit, Monte Carlo density.

Gaussian increments come from ``numpy.random.Generator(PCG64(seed))`` via
``standard_normal`` (ziggurat), drawn as one vector of ``n_agents`` values
per step, so a seed fixes every trajectory within one numpy version.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field

import numpy as np

from .core_model import Grid, ModelParams, income
from .fpk_solver import StationaryDensity
from .hjb_solver import PolicySolution, SolverSettings, solve_hjb

logger = logging.getLogger(__name__)

REFLECTIONS = ("clamp", "fold")


@dataclass(frozen=True)
class SimulationSettings:
    """Euler-Maruyama settings.

    ``record_interval`` (time units) is the snapshot spacing used when
    pooling draws for the density check.
    """

    n_agents: int = 4000
    dt: float = 0.0025
    n_steps: int = 32
    seed: int = 12345
    burn_in: int = 0
    record_interval: float = 1.0
    reflection: str = "clamp"

    def __post_init__(self):
        for name in ("n_agents", "n_steps", "seed", "burn_in"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int):
                raise ValueError(f"{name}: must be an integer, got {value!r}")
        if self.n_agents < 2:
            raise ValueError(f"n_agents: must be >= 2, got {self.n_agents}")
        if not self.dt > 0:
            raise ValueError(f"dt: must be > 0, got {self.dt}")
        if self.n_steps < 1:
            raise ValueError(f"n_steps: must be >= 1, got {self.n_steps}")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed: must be a 64-bit unsigned integer, got {self.seed}")
        if not 0 <= self.burn_in < self.n_steps:
            raise ValueError(f"burn_in: must lie in [0, n_steps), got {self.burn_in}")
        if not self.record_interval > 0:
            raise ValueError(f"record_interval: must be > 0, got {self.record_interval}")
        if self.reflection not in REFLECTIONS:
            raise ValueError(f"reflection: must be one of {REFLECTIONS}, got {self.reflection!r}")


# Long-run cross-check defaults: 10000 agents, dt = 0.01, total time 200, half burned.
MC_DEFAULTS = SimulationSettings(
    n_agents=10000, dt=0.01, n_steps=20000, seed=2024, burn_in=10000, record_interval=1.0
)


@dataclass
class W2Report:
    per_step_ratios: np.ndarray
    median_ratio: float
    iqr_lo: float
    iqr_hi: float
    contracting: bool
    distances: np.ndarray = field(default_factory=lambda: np.empty(0))
    excluded_steps: int = 0
    # W2 after the last step over W2 before the first
    overall_ratio: float = float("nan")


@dataclass
class MertonReport:
    kappa: float
    regime: str
    analytic_c: np.ndarray
    numeric_c: np.ndarray
    rel_sup_error: float
    converged: bool = True


def _reflect(x, a_max, how):
    if how == "fold":
        x = np.where(x < 0, -x, x)
        x = np.where(x > a_max, 2 * a_max - x, x)
    return np.clip(x, 0.0, a_max)


def _drift_at(x, policy: PolicySolution, grid: Grid):
    # mu is affine in c, so interpolating mu equals interpolating c
    return np.interp(x, grid.nodes, policy.mu)


def _rng(sim: SimulationSettings, noise):
    if noise is None:
        return np.random.default_rng(sim.seed)
    return noise


def simulate_population(initial, policy, grid, params, sim, noise=None, record_every=1):
    """Euler-Maruyama paths ``a += mu(a)*dt + sigma*sqrt(dt)*xi``, reflected into ``[0, a_max]``.

    Args:
        initial: starting wealth of each agent, inside ``[0, a_max]``.
        policy: solver output; its drift is linearly interpolated between nodes.
        grid: wealth grid.
        params: model parameters (``sigma`` is read here).
        sim: step size, step count and seed.
        noise: ``numpy.random.Generator`` supplying the increments; seeded from
            ``sim.seed`` when omitted.
        record_every: keep every ``record_every``-th state.

    Returns:
        Array of shape ``(n_records, n_agents)``; row 0 is ``initial``.
    """
    x = np.array(initial, dtype=float)
    if np.any(x < 0) or np.any(x > grid.a_max):
        raise ValueError("initial wealth must lie in [0, a_max]")
    rng = _rng(sim, noise)
    scale = params.sigma * np.sqrt(sim.dt)
    records = [x.copy()]
    for step in range(1, sim.n_steps + 1):
        xi = rng.standard_normal(x.size)
        x = _reflect(x + _drift_at(x, policy, grid) * sim.dt + scale * xi, grid.a_max, sim.reflection)
        if step % record_every == 0:
            records.append(x.copy())
    return np.array(records)


def wasserstein2_1d(x, y) -> float:
    """Exact W2 between two equal-size empirical measures on the line."""
    x = np.sort(np.asarray(x, dtype=float).ravel())
    y = np.sort(np.asarray(y, dtype=float).ravel())
    if x.size != y.size:
        raise ValueError(f"sample sizes differ: {x.size} vs {y.size}")
    if x.size == 0:
        raise ValueError("samples must be non-empty")
    return float(np.sqrt(np.mean((x - y) ** 2)))


def w2_contraction(pop_a, pop_b, policy, grid, params, sim, noise=None) -> W2Report:
    """Evolve two populations under synchronous coupling and record W2 ratios.

    Both populations are kept sorted and the k-th smallest agent of each
    receives the same Gaussian increment. Steps where either distance is zero
    are left out of the ratios and counted in ``excluded_steps``.
    """
    xa = np.sort(np.asarray(pop_a, dtype=float))
    xb = np.sort(np.asarray(pop_b, dtype=float))
    if xa.size != xb.size:
        raise ValueError("populations must have the same size")
    rng = _rng(sim, noise)
    scale = params.sigma * np.sqrt(sim.dt)

    dists = [wasserstein2_1d(xa, xb)]
    for _ in range(sim.n_steps):
        xi = rng.standard_normal(xa.size)
        xa = np.sort(_reflect(xa + _drift_at(xa, policy, grid) * sim.dt + scale * xi, grid.a_max, sim.reflection))
        xb = np.sort(_reflect(xb + _drift_at(xb, policy, grid) * sim.dt + scale * xi, grid.a_max, sim.reflection))
        dists.append(wasserstein2_1d(xa, xb))
    dists = np.array(dists)

    prev, nxt = dists[:-1], dists[1:]
    keep = (prev > 0) & (nxt > 0)
    ratios = nxt[keep] / prev[keep]
    excluded = int(np.count_nonzero(~keep))
    if excluded:
        logger.warning("W2 check: %d step(s) excluded, distance underflowed to 0", excluded)
    if ratios.size:
        median = float(np.median(ratios))
        lo, hi = (float(q) for q in np.percentile(ratios, [25, 75]))
        contracting = median < 1
    else:
        # nothing to contract: vacuously true
        median = lo = hi = float("nan")
        contracting = True
    overall = float(dists[-1] / dists[0]) if dists[0] > 0 else float("nan")
    return W2Report(
        per_step_ratios=ratios,
        median_ratio=median,
        iqr_lo=lo,
        iqr_hi=hi,
        contracting=contracting,
        distances=dists,
        excluded_steps=excluded,
        overall_ratio=overall,
    )


def w2_contraction_check(policy, grid, params, sim: SimulationSettings | None = None) -> W2Report:
    """W2 contraction between a low-wealth and a high-wealth population.

    Population A is uniform on ``[0, a_max/2]`` and population B uniform on
    ``[a_max/2, a_max]``; both are drawn from the seeded stream before the
    increments.
    """
    sim = sim or SimulationSettings()
    rng = np.random.default_rng(sim.seed)
    half = 0.5 * grid.a_max
    pop_a = rng.uniform(0.0, half, sim.n_agents)
    pop_b = rng.uniform(half, grid.a_max, sim.n_agents)
    return w2_contraction(pop_a, pop_b, policy, grid, params, sim, noise=rng)


def merton_kappa(params: ModelParams) -> float:
    return (params.rho - (1.0 - params.gamma) * params.r) / params.gamma


def merton_policy(grid: Grid, params: ModelParams):
    """Closed-form deterministic policy and its regime label."""
    kappa = merton_kappa(params)
    if kappa > params.r:
        return kappa, "constrained", income(grid.nodes, params)
    # kappa <= r is equivalent to rho <= r, so r > 0 and y / r is finite here
    return kappa, "interior", kappa * (grid.nodes + params.y / params.r)


def merton_validation(grid, params, settings: SolverSettings | None = None) -> MertonReport:
    """Compare the sigma = 0 solution with the closed-form Merton policy.

    The solver runs without policy regularization: the constrained rule has
    slope ``r``, which a slope band starting above ``r`` would exclude. The
    relative error skips the two nodes next to each boundary.
    """
    settings = settings or SolverSettings()
    det = dataclasses.replace(params, sigma=0.0)
    kappa, regime, analytic = merton_policy(grid, det)
    sol = solve_hjb(grid, det, settings, None)
    rel = np.abs(sol.c - analytic) / analytic
    inner = rel[2:-2] if grid.n_a > 4 else rel
    return MertonReport(
        kappa=kappa,
        regime=regime,
        analytic_c=analytic,
        numeric_c=sol.c,
        rel_sup_error=float(np.max(inner)),
        converged=sol.converged,
    )


def merton_refinement(params, a_max=20.0, sizes=(60, 120, 240, 480), settings=None):
    """Relative sup error of the sigma = 0 check for each grid size."""
    return [(n, merton_validation(Grid(a_max, n), params, settings).rel_sup_error) for n in sizes]


def empirical_density(samples, grid: Grid) -> np.ndarray:
    """Histogram density on cells centred at the nodes (half cells at the ends)."""
    edges = np.concatenate(([0.0], 0.5 * (grid.nodes[:-1] + grid.nodes[1:]), [grid.a_max]))
    counts, _ = np.histogram(np.asarray(samples, dtype=float), bins=edges)
    return counts / (counts.sum() * np.diff(edges))


def density_l1(p, q, grid: Grid) -> float:
    return float(np.sum(np.abs(np.asarray(p) - np.asarray(q))) * grid.da)


def monte_carlo_density_check(policy, density: StationaryDensity, grid, params, sim=None) -> float:
    """L1 distance between the FPK density and a long-run simulated population.

    Agents start uniform on ``[0, a_max]``. After ``burn_in`` steps a snapshot
    is kept every ``record_interval`` time units and all snapshots are pooled.
    """
    sim = sim or MC_DEFAULTS
    rng = np.random.default_rng(sim.seed)
    initial = rng.uniform(0.0, grid.a_max, sim.n_agents)
    every = max(1, int(round(sim.record_interval / sim.dt)))
    paths = _pooled_snapshots(initial, policy, grid, params, sim, rng, every)
    return density_l1(density.p, empirical_density(paths, grid), grid)


def _pooled_snapshots(initial, policy, grid, params, sim, rng, every):
    x = np.array(initial, dtype=float)
    scale = params.sigma * np.sqrt(sim.dt)
    pool = []
    for step in range(1, sim.n_steps + 1):
        x = _reflect(x + _drift_at(x, policy, grid) * sim.dt + scale * rng.standard_normal(x.size),
                     grid.a_max, sim.reflection)
        if step > sim.burn_in and step % every == 0:
            pool.append(x.copy())
    if not pool:
        pool.append(x)
    return np.concatenate(pool)
