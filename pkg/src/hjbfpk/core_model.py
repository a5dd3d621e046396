"""Economic primitives: parameters, wealth grid, CRRA utility and wealth drift."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Consumption floor applied before any utility evaluation.
C_MIN = 1e-10


class DomainError(ValueError):
    """Raised when a utility primitive is evaluated outside its domain."""


@dataclass(frozen=True)
class ModelParams:
    """Economic constants of the savings problem.

    Attributes:
        r: interest rate per unit time (any real).
        rho: subjective discount rate, > 0.
        gamma: relative risk aversion, > 0.
        y: labor income per unit time, > 0.
        sigma: wealth volatility, >= 0.
    """

    r: float = 0.03
    rho: float = 0.04
    gamma: float = 2.0
    y: float = 1.0
    sigma: float = 0.22

    def __post_init__(self):
        for name in ("r", "rho", "gamma", "y", "sigma"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ValueError(f"{name}: must be a real number, got {value!r}")
            if not np.isfinite(value):
                raise ValueError(f"{name}: must be finite, got {value!r}")
        if self.rho <= 0:
            raise ValueError(f"rho: must be > 0, got {self.rho}")
        if self.gamma <= 0:
            raise ValueError(f"gamma: must be > 0, got {self.gamma}")
        if self.y <= 0:
            raise ValueError(f"y: must be > 0, got {self.y}")
        if self.sigma < 0:
            raise ValueError(f"sigma: must be >= 0, got {self.sigma}")


@dataclass(frozen=True)
class Grid:
    """Uniform wealth grid on ``[0, a_max]`` with ``n_a`` nodes."""

    a_max: float = 20.0
    n_a: int = 240
    nodes: np.ndarray = field(init=False, repr=False, compare=False)
    da: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if isinstance(self.n_a, bool) or not isinstance(self.n_a, (int, np.integer)):
            raise ValueError(f"n_a: must be an integer, got {self.n_a!r}")
        if self.n_a < 3:
            raise ValueError(f"n_a: must be >= 3, got {self.n_a}")
        if not np.isfinite(self.a_max) or self.a_max <= 0:
            raise ValueError(f"a_max: must be finite and > 0, got {self.a_max!r}")
        nodes = np.linspace(0.0, float(self.a_max), int(self.n_a))
        nodes.setflags(write=False)
        object.__setattr__(self, "n_a", int(self.n_a))
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "da", float(self.a_max) / (self.n_a - 1))

    def trapezoid_weights(self) -> np.ndarray:
        w = np.full(self.n_a, self.da)
        w[0] = w[-1] = 0.5 * self.da
        return w

    def check_function(self, values, name="values") -> np.ndarray:
        """Return ``values`` as a float array after checking length and finiteness."""
        arr = np.asarray(values, dtype=float)
        if arr.shape != (self.n_a,):
            raise ValueError(f"{name}: expected shape ({self.n_a},), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"{name}: contains non-finite entries")
        return arr


def _positive(c, what):
    arr = np.asarray(c, dtype=float)
    if np.any(~(arr > 0)):
        raise DomainError(f"{what} must be > 0 (got min {np.min(arr)!r})")
    return arr


def crra_utility(c, gamma):
    """CRRA utility ``(c**(1-gamma) - 1)/(1-gamma)``, or ``log(c)`` when gamma == 1.

    The log branch is taken only on exact equality with 1.
    """
    c = _positive(c, "consumption")
    if gamma == 1:
        out = np.log(c)
    else:
        out = np.expm1((1.0 - gamma) * np.log(c)) / (1.0 - gamma)
    return out if out.ndim else float(out)


def crra_marginal(c, gamma):
    """Marginal utility ``c**-gamma``."""
    c = _positive(c, "consumption")
    out = c ** (-gamma)
    return out if out.ndim else float(out)


def inverse_marginal(vp, gamma):
    """Consumption solving ``crra_marginal(c) == vp``."""
    vp = _positive(vp, "marginal value")
    out = vp ** (-1.0 / gamma)
    return out if out.ndim else float(out)


def drift(a, c, params: ModelParams):
    """Wealth drift ``r*a + y - c``."""
    return params.r * np.asarray(a, dtype=float) + params.y - np.asarray(c, dtype=float)


def income(a, params: ModelParams):
    """Total income ``r*a + y``; the zero-drift consumption level."""
    return params.r * np.asarray(a, dtype=float) + params.y
