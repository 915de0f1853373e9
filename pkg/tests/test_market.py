import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from utilityforge import distributions as dist
from utilityforge.errors import DegenerateKernel, InvalidParameter
from utilityforge.market import BsParams, bs_kernel, custom_kernel, kernel_from_dict, kernel_quantile
from utilityforge.numerics import integrate


def test_theta_beta_alpha(params):
    assert params.theta == pytest.approx(0.25)
    assert params.beta == pytest.approx(1.25)


def test_from_stock_at_spot_is_alpha():
    p = BsParams(mu=0.03 + 0.04, sigma=0.2, r=0.03, T=2.0, S0=3.0)
    k = bs_kernel(p)
    assert k.from_stock(3.0) == pytest.approx(p.alpha, rel=1e-15)
    assert k.to_stock(k.from_stock(2.5)) == pytest.approx(2.5, rel=1e-13)


def test_kernel_mean_and_h_law(kernel):
    assert kernel.mean() == pytest.approx(math.exp(-0.03), abs=1e-15)
    assert kernel.h_law.M == pytest.approx(0.06125, abs=1e-15)
    assert kernel.h_law.Sigma == pytest.approx(0.25)


def test_degenerate_kernel():
    with pytest.raises(DegenerateKernel):
        bs_kernel(BsParams(0.03, 0.2, 0.03, 1))


def test_invalid_params():
    for bad in ({"sigma": 0}, {"T": -1}, {"S0": 0}):
        kw = dict(mu=0.08, sigma=0.2, r=0.03, T=1.0)
        kw.update(bad)
        with pytest.raises(InvalidParameter):
            BsParams(**kw)


def test_kernel_quantile_conventions(kernel):
    assert kernel_quantile(kernel, 0.0) == 0.0
    assert kernel_quantile(kernel, 1.0) == math.inf
    assert kernel_quantile(kernel, 0.5) == pytest.approx(math.exp(-0.03 - 0.25 ** 2 / 2), rel=1e-14)
    with pytest.raises(InvalidParameter):
        kernel_quantile(kernel, 1.5)


bs_params = st.builds(
    BsParams,
    mu=st.floats(-0.1, 0.2), sigma=st.floats(0.05, 0.6), r=st.floats(-0.01, 0.08),
    T=st.floats(0.1, 10.0), S0=st.floats(0.5, 200.0),
).filter(lambda p: abs(p.theta) > 1e-3)


def _normal_expectation(fn, shift):
    """E[fn(Z)] for standard normal Z; ``shift`` widens the window for tilted integrands."""
    w = 12.0 + abs(shift)
    return integrate(lambda z: fn(z) * np.exp(-z * z / 2) / math.sqrt(2 * math.pi), -w, w)


@settings(max_examples=30)
@given(bs_params)
def test_discount_consistency_by_quadrature(p):
    k = bs_kernel(p)
    m, s = k.law.M, k.law.Sigma
    mean = _normal_expectation(lambda z: np.exp(m + s * z), s)
    assert abs(mean - math.exp(-p.r * p.T)) <= 1e-8 * max(1.0, math.exp(-p.r * p.T))


@settings(max_examples=30)
@given(bs_params)
def test_stock_martingale(p):
    k = bs_kernel(p)

    def discounted_stock(z):
        S = p.S0 * np.exp((p.mu - p.sigma ** 2 / 2) * p.T + p.sigma * math.sqrt(p.T) * z)
        return k.from_stock(S) * S

    shift = (abs(p.theta) + p.sigma) * math.sqrt(p.T)
    assert abs(_normal_expectation(discounted_stock, shift) - p.S0) <= 1e-6 * p.S0


@given(bs_params)
def test_h_law_consistency(p):
    k = bs_kernel(p)
    y = np.linspace(k.h_law.M - 5 * k.h_law.Sigma, k.h_law.M + 5 * k.h_law.Sigma, 101)
    assert np.max(np.abs(k.h_law.cdf(y) - (1 - k.law.cdf(np.exp(-y))))) <= 1e-10


def test_custom_kernel_from_dict():
    k = kernel_from_dict({"model": "custom-kernel",
                          "law": {"family": "lognormal", "params": {"M": -0.05, "Sigma": 0.3}}})
    y = np.linspace(-1, 1, 11)
    np.testing.assert_allclose(k.h_law.cdf(y), 1 - k.law.cdf(np.exp(-y)), atol=1e-14)
    assert k.mean() == pytest.approx(math.exp(-0.05 + 0.09 / 2), rel=1e-9)
    with pytest.raises(InvalidParameter):
        custom_kernel(dist.Normal(0, 1))


def test_kernel_from_dict_errors():
    with pytest.raises(InvalidParameter, match="missing"):
        kernel_from_dict({"model": "black-scholes", "mu": 0.1})
    with pytest.raises(InvalidParameter, match="unknown market model"):
        kernel_from_dict({"model": "heston"})
