import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate as sci_integrate
from scipy import stats

from utilityforge import catalog
from utilityforge import distributions as dist
from utilityforge import efficiency as eff
from utilityforge import utility as ut
from utilityforge.errors import (BudgetOutOfRange, DomainMismatch, InvalidParameter,
                                 NonContinuousTarget)

from conftest import MU, R, SIGMA, T, THETA, catalog_laws

GUARANTEE_SCALE = 1.001250781575622584  # 40-digit mpmath


def central_grid(F, n=101):
    return F.quantile(np.linspace(0.05, 0.95, n))


def test_crra_recovery(kernel):
    F = dist.LogNormal(0.05, 0.2)
    u = ut.infer_utility(F, kernel)
    assert ut.affine_match(u, ut.crra(THETA * math.sqrt(T) / 0.2), central_grid(F)) <= 1e-6


def test_cara_recovery(kernel):
    F = dist.Normal(1.0, 0.3)
    u = ut.infer_utility(F, kernel)
    assert ut.affine_match(u, ut.cara(THETA * math.sqrt(T) / 0.3), central_grid(F)) <= 1e-6


def test_same_family_residual():
    u = ut.crra(2.5)
    assert ut.affine_match(u, ut.ParametricFamily("crra", {"gamma": 2.5}), np.linspace(0.5, 3, 50)) <= 1e-10


def test_exponential_against_quad_oracle(kernel):
    F = dist.Exponential(1.0)
    u = ut.infer_utility(F, kernel, c=1.0)
    m, s = kernel.law.M, kernel.law.Sigma

    def marginal(y):
        return math.exp(m + s * stats.norm.isf(-math.expm1(-y)))

    xs = np.linspace(0.05, 4.0, 101)
    oracle = np.array([sci_integrate.quad(marginal, 1.0, x, epsabs=1e-14, epsrel=1e-13, limit=500)[0]
                       for x in xs])
    np.testing.assert_allclose(u.value(xs), oracle, atol=1e-9)


def test_marginal_formula(kernel, catalog):
    for F in catalog.values():
        u = ut.infer_utility(F, kernel)
        x = central_grid(F)
        expected = kernel.law.quantile(1 - F.cdf(x))
        assert np.max(np.abs(u.marginal(x) - expected)) <= 1e-10


def test_curve_invariants(kernel, catalog):
    for F in catalog.values():
        u = ut.infer_utility(F, kernel)
        x = central_grid(F)
        assert u.value(u.anchor) == 0.0
        assert np.all(np.diff(u.value(x)) > 0)
        assert np.all(np.diff(u.marginal(x)) < 0)


def test_non_continuous_target_rejected(kernel):
    with pytest.raises(NonContinuousTarget):
        ut.infer_utility(dist.PointMass(1.0), kernel)
    with pytest.raises(NonContinuousTarget):
        ut.infer_utility(dist.capital_guarantee(0.9, 0.05, 0.2), kernel)


def test_anchor_needs_positive_cdf(kernel):
    with pytest.raises(InvalidParameter):
        ut.infer_utility(dist.Exponential(1.0), kernel, c=-1.0)


@settings(max_examples=20)
@given(c1=st.floats(0.05, 0.95), c2=st.floats(0.05, 0.95))
def test_anchor_invariance(kernel, c1, c2):
    F = dist.LogNormal(0.05, 0.2)
    u1 = ut.infer_utility(F, kernel, c=float(F.quantile(c1)))
    u2 = ut.infer_utility(F, kernel, c=float(F.quantile(c2)))
    x = central_grid(F, 21)
    d = u1.value(x) - u2.value(x)
    assert np.max(np.abs(d - d[0])) <= 1e-8


def test_pointmass_generalized(kernel):
    u = ut.infer_generalized_utility(dist.PointMass(2.0), kernel)
    assert u.core is None
    assert np.all(u.value(np.array([-5.0, 0.0, 1.999])) == -math.inf)
    assert np.all(u.value(np.array([2.0, 3.0, 100.0])) == 0.0)


def test_capital_guarantee_generalized(kernel, params):
    G = 0.9
    F = dist.capital_guarantee(G, 0.05, SIGMA)
    u = ut.infer_generalized_utility(F, kernel)
    below = np.array([0.0, 0.5, 0.899])
    assert np.all(u.value(below) == -math.inf)
    a = catalog.guarantee_scale(params, 0.05)
    assert a == pytest.approx(GUARANTEE_SCALE, rel=1e-14)
    x = np.linspace(0.91, 2.0, 60)
    np.testing.assert_allclose(u.marginal(x), a * x ** (-THETA / SIGMA), rtol=1e-6)
    ref = ut.guarantee_crra(G, THETA / SIGMA, a)
    assert ut.affine_match(u, ref, x) <= 1e-6


def test_yaari_generalized(kernel, params):
    c = 1.0
    fx = catalog.yaari_fixture(params, c, 1.0)
    u = ut.infer_generalized_utility(fx.law, kernel, c=c)
    x = np.linspace(1e-3, fx.B - 1e-3, 101)
    np.testing.assert_allclose(u.marginal(x), c, atol=1e-10)
    assert np.all(u.value(np.array([-1.0, -1e-9])) == -math.inf)
    top = u.value(np.array([fx.B, fx.B + 1, 1e6]))
    assert np.ptp(top) == 0.0
    ref = ut.yaari_piecewise(c, fx.B)
    assert ut.affine_match(u.core, ref.core, x) <= 1e-10


def test_yaari_b_from_budget(kernel, params):
    fx = catalog.yaari_fixture(params, 1.0, 1.0)
    assert eff.cost(eff.digital_payoff(1.0, fx.B), kernel) == pytest.approx(1.0, abs=1e-10)
    # the alternative closed form misses the budget
    assert abs(eff.cost(eff.digital_payoff(1.0, fx.B_printed), kernel) - 1.0) > 0.1


def test_yaari_optimal_payoff_is_digital(kernel, params):
    c = 1.0
    fx = catalog.yaari_fixture(params, c, 1.0)
    u = ut.yaari_piecewise(c, fx.B)
    x = ut.optimal_payoff(u, kernel, 1.0)
    xi = kernel.law.quantile(np.linspace(1e-3, 1 - 1e-3, 1001))
    np.testing.assert_array_equal(x(xi), np.where(xi <= c, fx.B, 0.0))


def test_extension_rules():
    u = ut.guarantee_crra(1.0, 2.0)
    assert u.marginal(0.5) == math.inf
    assert u.value(0.5) == -math.inf
    y = ut.yaari_piecewise(1.0, 2.0)
    assert y.marginal(3.0) == 0.0
    assert y.value(3.0) == y.value(2.0) == 1.0


def test_lambda_one_at_distributional_price(kernel, catalog):
    for F in catalog.values():
        u = ut.infer_utility(F, kernel)
        x = ut.optimal_payoff(u, kernel, u.info["price"])
        assert x.info["lambda"] == 1.0
        xi = kernel.law.quantile(np.linspace(0.01, 0.99, 51))
        np.testing.assert_allclose(x(xi), eff.efficient_payoff(F, kernel)(xi), rtol=1e-12)


@pytest.mark.parametrize("name", ["normal", "lognormal", "exponential", "pareto"])
def test_round_trip_distribution(kernel, name):
    F = catalog_laws()[name]
    u = ut.infer_utility(F, kernel)
    x = ut.optimal_payoff(u, kernel, eff.distributional_price(F, kernel))
    law = eff.PushforwardLaw(x, kernel, eff.DECREASING)
    assert dist.ks_distance(law, F, dist.quantile_grid(F)) <= 1e-6


def test_cara_optimal_payoff(kernel, params):
    gamma, X0 = 2.0, 1.0
    x = ut.optimal_payoff(ut.cara(gamma), kernel, X0)
    assert abs(eff.cost(x, kernel) - X0) <= 1e-8
    law = catalog.cara_optimal_law(params, gamma, X0)
    assert law.M == pytest.approx(math.exp(R * T) + THETA / (gamma * SIGMA) * (MU - R) * T)
    push = eff.PushforwardLaw(x, kernel, eff.DECREASING)
    assert dist.ks_distance(push, law, dist.quantile_grid(law)) <= 1e-6
    S = np.array([0.7, 1.0, 1.4])
    np.testing.assert_allclose(x(kernel.from_stock(S)), catalog.cara_optimal_payoff_of_stock(params, gamma, X0, S),
                               rtol=1e-9)


def test_hara_optimal_payoff(kernel, params):
    a, b, g, X0 = 1.0, 1.0, 0.5, 1.0
    x = ut.optimal_payoff(ut.hara(a, b, g), kernel, X0)
    sol = catalog.hara_solution(params, a, b, g, X0)
    S = np.array([0.6, 0.9, 1.0, 1.3, 2.0])
    np.testing.assert_allclose(x(kernel.from_stock(S)), sol.payoff_of_stock(params, S), rtol=1e-6)
    # the closed-form constant satisfies the budget
    direct = eff.stock_payoff(kernel, lambda s: sol.payoff_of_stock(params, s))
    assert eff.cost(direct, kernel) == pytest.approx(X0, rel=1e-6)
    push = eff.PushforwardLaw(x, kernel, eff.DECREASING)
    assert dist.ks_distance(push, sol.law, dist.quantile_grid(sol.law)) <= 1e-6


@pytest.mark.parametrize("family, budget", [
    (ut.ParametricFamily("crra", {"gamma": 1.25}), 1.0),
    (ut.ParametricFamily("cara", {"gamma": 2.0}), 1.0),
    (ut.ParametricFamily("hara", {"a": 1.0, "b": 1.0, "gamma": 0.5}), 1.0),
], ids=["crra", "cara", "hara"])
def test_round_trip_utility(kernel, family, budget):
    x = ut.optimal_payoff(family.curve(), kernel, budget)
    law = eff.PushforwardLaw(x, kernel, eff.DECREASING)
    u = ut.infer_utility(law, kernel)
    assert ut.affine_match(u, family, central_grid(law, 41)) <= 1e-6


def test_budget_out_of_range(kernel):
    with pytest.raises(BudgetOutOfRange):
        ut.optimal_payoff(ut.crra(2.0), kernel, -1.0)
    with pytest.raises(BudgetOutOfRange):
        ut.optimal_payoff(ut.yaari_piecewise(1.0, 2.0), kernel, 5.0)


def test_domain_mismatch():
    with pytest.raises(DomainMismatch):
        ut.crra(2.0).value(-1.0)
    with pytest.raises(DomainMismatch):
        ut.affine_match(ut.crra(2.0), ut.cara(1.0), [-1.0, 1.0])


def test_pseudo_inverse_conventions():
    u = ut.yaari_piecewise(1.0, 2.0)
    np.testing.assert_array_equal(u.marginal_inverse(np.array([0.5, 1.0, 1.5])), [2.0, 0.0, 0.0])


def test_csv_round_trip(kernel):
    u = ut.infer_utility(dist.LogNormal(0.05, 0.2), kernel)
    grid = np.linspace(0.8, 1.4, 31)
    buf = io.StringIO()
    ut.write_curve_csv(u, grid, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "x,value,marginal" and len(lines) == 32


def test_csv_reader(tmp_path, kernel):
    u = ut.infer_utility(dist.LogNormal(0.05, 0.2), kernel)
    path = tmp_path / "u.csv"
    grid = np.linspace(0.8, 1.4, 31)
    ut.write_curve_csv(u, grid, str(path))
    back = ut.curve_from_csv(str(path))
    np.testing.assert_array_equal(back.value(grid), u.value(grid))
