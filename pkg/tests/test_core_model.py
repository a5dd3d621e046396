import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hjbfpk.core_model import (
    DomainError,
    Grid,
    ModelParams,
    crra_marginal,
    crra_utility,
    drift,
    inverse_marginal,
)

gammas = st.floats(0.1, 8.0)
consumption = st.floats(1e-3, 1e3)


@pytest.mark.parametrize(
    "c, gamma, expected",
    [(1.0, 2.0, 0.0), (1.0, 1.0, 0.0), (math.e, 1.0, 1.0), (2.0, 2.0, 0.5)],
)
def test_utility_values(c, gamma, expected):
    assert crra_utility(c, gamma) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("c, gamma, expected", [(1.0, 2.0, 1.0), (4.0, 0.5, 0.5), (2.0, 1.0, 0.5)])
def test_marginal_values(c, gamma, expected):
    assert crra_marginal(c, gamma) == pytest.approx(expected, rel=1e-15)


@pytest.mark.parametrize("vp, gamma, expected", [(1.0, 2.0, 1.0), (0.25, 2.0, 2.0)])
def test_inverse_marginal_values(vp, gamma, expected):
    assert inverse_marginal(vp, gamma) == pytest.approx(expected, rel=1e-15)


@pytest.mark.parametrize("c", [0.1, 1.0, 10.0])
@pytest.mark.parametrize("gamma", [0.5, 1.0, 2.0])
def test_inverse_round_trip_grid(c, gamma):
    assert inverse_marginal(crra_marginal(c, gamma), gamma) == pytest.approx(c, rel=1e-12)


@pytest.mark.parametrize("fn", [crra_utility, crra_marginal])
@pytest.mark.parametrize("bad", [0.0, -1.0])
def test_domain_errors(fn, bad):
    with pytest.raises(DomainError):
        fn(bad, 2.0)
    with pytest.raises(DomainError):
        fn(np.array([1.0, bad]), 2.0)


def test_inverse_marginal_rejects_nonpositive():
    with pytest.raises(DomainError):
        inverse_marginal(0.0, 2.0)


def test_array_inputs():
    c = np.array([0.5, 1.0, 2.0])
    np.testing.assert_allclose(crra_utility(c, 2.0), [-1.0, 0.0, 0.5])


@given(c1=consumption, c2=consumption, gamma=gammas)
def test_utility_strictly_increasing(c1, c2, gamma):
    lo, hi = sorted((c1, c2))
    u_lo, u_hi = crra_utility(lo, gamma), crra_utility(hi, gamma)
    assert u_lo <= u_hi
    # strictness is only observable when the gain exceeds double rounding
    gain_bound = crra_marginal(hi, gamma) * (hi - lo)
    if gain_bound > 4 * np.spacing(max(abs(u_lo), abs(u_hi))):
        assert u_lo < u_hi


@given(c=st.floats(0.1, 100.0), frac=st.floats(1e-4, 0.5), gamma=gammas)
def test_utility_concave(c, frac, gamma):
    h = frac * c
    u = lambda x: crra_utility(x, gamma)  # noqa: E731
    assert u(c + h) + u(c - h) <= 2 * u(c) + 1e-12 * (1 + abs(u(c)))


@given(c=st.floats(0.1, 10.0), sign=st.sampled_from([-1.0, 1.0]))
def test_log_continuity(c, sign):
    assert abs(crra_utility(c, 1.0 + sign * 1e-6) - math.log(c)) <= 1e-5


@given(c=consumption, gamma=gammas)
def test_inverse_is_identity(c, gamma):
    assert inverse_marginal(crra_marginal(c, gamma), gamma) == pytest.approx(c, rel=1e-12)


@given(c1=consumption, c2=consumption, gamma=gammas)
def test_marginal_decreasing(c1, c2, gamma):
    lo, hi = sorted((c1, c2))
    if hi > lo * (1 + 1e-9):
        assert crra_marginal(lo, gamma) > crra_marginal(hi, gamma)


@pytest.mark.parametrize("a, c, expected", [(0.0, 1.0, 0.0), (10.0, 1.0, 0.3), (0.0, 2.0, -1.0)])
def test_drift(a, c, expected):
    params = ModelParams(r=0.03, y=1.0)
    assert float(drift(a, c, params)) == pytest.approx(expected, abs=1e-15)


def test_grid_nodes():
    g = Grid(20.0, 240)
    assert g.nodes[0] == 0.0
    assert g.nodes[-1] == 20.0
    assert g.da == pytest.approx(20.0 / 239)
    spacing = np.diff(g.nodes)
    assert np.max(np.abs(spacing - g.da)) <= 4 * np.finfo(float).eps * g.a_max
    assert g.trapezoid_weights().sum() == pytest.approx(20.0, rel=1e-14)


@pytest.mark.parametrize("kwargs", [{"n_a": 2}, {"a_max": 0.0}, {"a_max": -1.0}, {"n_a": 3.5}])
def test_grid_rejects_bad(kwargs):
    with pytest.raises(ValueError):
        Grid(**kwargs)


@pytest.mark.parametrize(
    "field, value", [("rho", 0.0), ("gamma", -1.0), ("y", 0.0), ("sigma", -0.1), ("r", float("nan"))]
)
def test_params_rejects_bad(field, value):
    with pytest.raises(ValueError, match=field):
        ModelParams(**{field: value})


def test_params_allow_negative_rate():
    assert ModelParams(r=-0.01).r == -0.01
