"""Consumption-policy regularization: moving-average smoothing and slope-band projection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core_model import C_MIN, Grid


@dataclass(frozen=True)
class PostprocessSettings:
    """Settings of the policy regularizer.

    ``slope_lo`` and ``slope_hi`` are absolute bounds on the discrete slope
    ``(c[i+1] - c[i]) / da``; no interest rate is added to them.
    """

    enabled: bool = True
    smoothing_passes: int = 2
    window: int = 3
    slope_lo: float = 0.0375
    slope_hi: float = 0.28

    def __post_init__(self):
        if isinstance(self.smoothing_passes, bool) or not isinstance(self.smoothing_passes, int):
            raise ValueError(f"smoothing_passes: must be an integer, got {self.smoothing_passes!r}")
        if self.smoothing_passes < 0:
            raise ValueError(f"smoothing_passes: must be >= 0, got {self.smoothing_passes}")
        if isinstance(self.window, bool) or not isinstance(self.window, int):
            raise ValueError(f"window: must be an integer, got {self.window!r}")
        if self.window < 3 or self.window % 2 == 0:
            raise ValueError(f"window: must be an odd integer >= 3, got {self.window}")
        if not self.slope_lo < self.slope_hi:
            raise ValueError(
                f"slope_lo: must be < slope_hi, got {self.slope_lo} >= {self.slope_hi}"
            )


def smooth(c, passes=2, window=3):
    """Centered moving average repeated ``passes`` times.

    Near the ends the window shrinks to the nodes that exist, so no values
    are padded or wrapped. Each mean is accumulated as the node value plus
    the mean deviation of its neighbours, then clipped to the window range,
    so constant stretches stay bit-identical and the sup norm never grows.
    """
    c = np.array(c, dtype=float)
    n = c.size
    half = window // 2
    for _ in range(passes):
        dev = np.zeros(n)
        count = np.ones(n)
        lo = c.copy()
        hi = c.copy()
        for k in range(1, half + 1):
            if k >= n:
                break
            # neighbour k to the right of node i, and k to the left
            dev[:-k] += c[k:] - c[:-k]
            dev[k:] += c[:-k] - c[k:]
            count[:-k] += 1
            count[k:] += 1
            lo[:-k] = np.minimum(lo[:-k], c[k:])
            lo[k:] = np.minimum(lo[k:], c[:-k])
            hi[:-k] = np.maximum(hi[:-k], c[k:])
            hi[k:] = np.maximum(hi[k:], c[:-k])
        c = np.clip(c + dev / count, lo, hi)
    return c


def project_slope_band(c, grid: Grid, slope_lo, slope_hi):
    """Clamp discrete slopes of ``c`` into ``[slope_lo, slope_hi]``.

    Runs one forward pass anchored at the first node that enforces both
    bounds, then one backward pass anchored at the last node that only
    lowers values to restore the lower bound. The first node is therefore
    never increased.
    """
    if not slope_lo < slope_hi:
        raise ValueError(f"slope_lo must be < slope_hi, got {slope_lo} >= {slope_hi}")
    out = np.array(c, dtype=float).tolist()
    n = len(out)
    step_lo = slope_lo * grid.da
    step_hi = slope_hi * grid.da
    for i in range(1, n):
        out[i] = min(max(out[i], out[i - 1] + step_lo), out[i - 1] + step_hi)
    for i in range(n - 2, -1, -1):
        out[i] = min(out[i], out[i + 1] - step_lo)
    return np.array(out)


def postprocess(c, grid: Grid, settings: PostprocessSettings, ceiling=None):
    """Smooth, then project onto the slope band, then re-apply the consumption floor.

    Args:
        c: raw consumption policy on ``grid``.
        grid: wealth grid.
        settings: regularizer settings; identity when ``settings.enabled`` is false.
        ceiling: optional per-node upper bound applied between smoothing and
            projection. The solver uses it to keep the borrowing constraint
            ``c[0] <= y`` that smoothing would otherwise break.

    Returns:
        The regularized policy (the input array itself when disabled).
    """
    if not settings.enabled:
        return c
    out = smooth(c, settings.smoothing_passes, settings.window)
    if ceiling is not None:
        out = np.minimum(out, ceiling)
    out = project_slope_band(out, grid, settings.slope_lo, settings.slope_hi)
    return np.maximum(out, C_MIN)
