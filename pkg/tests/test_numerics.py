import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from utilityforge.errors import InvalidParameter, NoBracket, NonFinite
from utilityforge.numerics import (
    Grid,
    Tolerance,
    bisect_first_true,
    find_root,
    integrate,
    second_difference_min,
)

SQRT2 = 1.4142135623730950488  # 40-digit mpmath
EXP_D2_MIN_H001 = 1.0100585841969507581  # (e^-h - 2 + e^h)/h^2 * e^h, h = 0.01


def test_integrate_constant():
    assert integrate(lambda x: np.ones_like(x), 0, 1) == pytest.approx(1.0, abs=1e-12)


def test_integrate_normal_density_whole_line():
    assert integrate(stats.norm.pdf, -math.inf, math.inf) == pytest.approx(1.0, abs=1e-10)


def test_integrate_endpoint_singularity():
    assert integrate(lambda x: x ** -0.5, 0, 1) == pytest.approx(2.0, abs=1e-9)


def test_integrate_reversed_limits_and_breakpoints():
    f = lambda x: np.where(x < 0.3, 1.0, 2.0)
    assert integrate(f, 0, 1, points=[0.3]) == pytest.approx(0.3 + 1.4, abs=1e-12)
    assert integrate(f, 1, 0, points=[0.3]) == pytest.approx(-1.7, abs=1e-12)


def test_integrate_half_line():
    assert integrate(lambda x: np.exp(-x), 0, math.inf) == pytest.approx(1.0, abs=1e-10)


def test_integrate_nonfinite():
    with pytest.raises(NonFinite):
        integrate(lambda x: np.where(x > 0.5, np.nan, 1.0), 0, 1)


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_integrate_is_linear(a, b):
    f = lambda x: np.sin(3 * x)
    g = lambda x: np.exp(-x * x)
    lhs = integrate(lambda x: a * f(x) + b * g(x), -1, 2)
    rhs = a * integrate(f, -1, 2) + b * integrate(g, -1, 2)
    assert abs(lhs - rhs) <= 1e-9 * (1 + abs(a) + abs(b))


def test_find_root_examples():
    assert find_root(lambda x: x - 2, 0, 5) == pytest.approx(2, abs=1e-10)
    assert find_root(lambda x: x * x - 2, 0, 2) == pytest.approx(SQRT2, abs=1e-10)
    assert find_root(lambda x: math.exp(x) - 1, -1, 1) == pytest.approx(0, abs=1e-10)


def test_find_root_no_bracket():
    with pytest.raises(NoBracket):
        find_root(lambda x: x * x + 1, -1, 1)


@given(st.floats(-50, 50), st.floats(0.01, 20))
def test_find_root_stays_in_bracket(c, w):
    lo, hi = c - w, c + w
    root = find_root(lambda x: math.tanh(x - c), lo, hi)
    assert lo <= root <= hi


def test_second_difference_examples():
    g = Grid.uniform(-1, 1, 201)
    assert second_difference_min(lambda x: x * x, g) == pytest.approx(2.0, abs=1e-8)
    assert second_difference_min(lambda x: x, g) == pytest.approx(0.0, abs=1e-10)
    assert second_difference_min(np.exp, Grid.uniform(0, 1, 101)) == pytest.approx(EXP_D2_MIN_H001, rel=1e-9)


@given(st.sampled_from(["quad", "exp", "softplus"]), st.floats(-2, 2), st.floats(0.1, 3))
def test_second_difference_convex_functions(kind, shift, scale):
    fs = {
        "quad": lambda x: scale * (x - shift) ** 2,
        "exp": lambda x: np.exp(scale * (x - shift)),
        "softplus": lambda x: np.logaddexp(0, scale * (x - shift)),
    }
    assert second_difference_min(fs[kind], Grid.uniform(-1, 1, 201)) >= -1e-6


def test_grid_validation():
    with pytest.raises(InvalidParameter):
        Grid((0.0,))
    with pytest.raises(InvalidParameter):
        Grid((0.0, 0.0, 1.0))


def test_tolerance_parsing():
    assert Tolerance.from_string("1e-9").abs_tol == 1e-9
    t = Tolerance.from_string("abs_tol=1e-12,rel_tol=1e-10,max_iter=80")
    assert (t.abs_tol, t.rel_tol, t.max_iter) == (1e-12, 1e-10, 80)
    with pytest.raises(InvalidParameter):
        Tolerance(abs_tol=0)


def test_bisect_first_true_vectorized():
    thresholds = np.array([0.1, 0.5, 0.9])
    out = bisect_first_true(lambda x, idx: x >= thresholds[idx], np.zeros(3), np.ones(3))
    np.testing.assert_allclose(out, thresholds, atol=1e-15)
