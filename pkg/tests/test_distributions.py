import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from utilityforge import distributions as dist
from utilityforge.errors import InvalidParameter, UndefinedHazard
from utilityforge.numerics import integrate

# 40-digit mpmath values
LN_QUANTILES = {0.1: 0.81358057239053751581, 0.5: 1.0512710963760240397, 0.9: 1.3584037716489867095}
NORMAL_HAZARD_0 = 0.79788456080286535588
KS_SHIFT_01 = 0.039877611676744925404


def test_normal_symmetry():
    assert dist.make({"family": "normal", "params": {"M": 0, "Sigma": 1}}).cdf(0.0) == 0.5


@pytest.mark.parametrize("p", sorted(LN_QUANTILES))
def test_lognormal_quantile(p):
    d = dist.make({"family": "lognormal", "params": {"M": 0.05, "Sigma": 0.2}})
    assert d.quantile(p) == pytest.approx(LN_QUANTILES[p], rel=1e-14)


def test_pareto_cdf():
    d = dist.make({"family": "pareto", "params": {"m": 1, "alpha": 3}})
    assert d.cdf(2.0) == pytest.approx(0.875, abs=1e-15)
    assert d.cdf(0.5) == 0.0


def test_make_rejects_bad_params():
    with pytest.raises(InvalidParameter):
        dist.make({"family": "normal", "params": {"M": 0, "Sigma": -1}})
    with pytest.raises(InvalidParameter, match="valid families"):
        dist.make({"family": "weibull"})
    with pytest.raises(InvalidParameter, match="missing"):
        dist.make({"family": "pareto", "params": {"m": 1}})


def test_mix_endpoints():
    D = dist.PointMass(1.0)
    C = dist.Normal(0, 1)
    xs = np.linspace(-3, 3, 13)
    np.testing.assert_allclose(dist.mix(D, C, 0.0).cdf(xs), C.cdf(xs))
    np.testing.assert_allclose(dist.mix(D, C, 1.0).cdf(xs), D.cdf(xs))
    with pytest.raises(InvalidParameter):
        dist.mix(D, C, 1.5)


def test_capital_guarantee_mixture():
    G, M, s = 0.9, 0.05, 0.2
    d = dist.capital_guarantee(G, M, s)
    p = stats.norm.cdf((math.log(G) - M) / s)
    assert d.cdf_left(G) == pytest.approx(0.0, abs=1e-15)
    assert d.cdf(np.nextafter(G, 0)) == 0.0
    assert d.cdf(G) == pytest.approx(p, rel=1e-14)
    assert d.atoms[0][0] == G and d.atoms[0][1] == pytest.approx(p)
    # quantile flat over the atom
    assert d.quantile(p / 2) == G and d.quantile(p) == G
    assert d.quantile(p + 1e-9) > G


def test_hazard_examples():
    assert np.allclose(dist.hazard(dist.Exponential(2.0), np.array([0.0, 1.0, 5.0])), 2.0)
    xs = np.array([1.0, 2.0, 7.0])
    np.testing.assert_allclose(dist.hazard(dist.Pareto(1.0, 3.0), xs), 3.0 / xs, rtol=1e-13)
    assert dist.hazard(dist.Normal(0, 1), 0.0) == pytest.approx(NORMAL_HAZARD_0, rel=1e-14)


def test_hazard_errors():
    with pytest.raises(UndefinedHazard):
        dist.hazard(dist.PointMass(1.0), 1.0)
    with pytest.raises(UndefinedHazard):
        dist.hazard(dist.Uniform(0, 1), 1.5)


def test_ks_examples():
    g = np.linspace(-4, 4, 8001)
    assert dist.ks_distance(dist.Normal(0, 1), dist.Normal(0, 1), g) == 0.0
    assert dist.ks_distance(dist.PointMass(0), dist.PointMass(1), [0.5]) == 1.0
    assert dist.ks_distance(dist.Normal(0, 1), dist.Normal(0.1, 1), g) == pytest.approx(KS_SHIFT_01, abs=1e-12)


def _random_law(draw):
    kind = draw(st.sampled_from(["normal", "lognormal", "exponential", "pareto", "uniform",
                                 "discrete", "mixture", "empirical"]))
    pos = st.floats(0.1, 3.0)
    if kind == "normal":
        return dist.Normal(draw(st.floats(-5, 5)), draw(pos))
    if kind == "lognormal":
        return dist.LogNormal(draw(st.floats(-1, 1)), draw(pos))
    if kind == "exponential":
        return dist.Exponential(draw(pos))
    if kind == "pareto":
        return dist.Pareto(draw(pos), draw(st.floats(0.5, 5)))
    if kind == "uniform":
        lo = draw(st.floats(-3, 3))
        return dist.Uniform(lo, lo + draw(pos))
    locs = sorted(set(draw(st.lists(st.integers(-20, 20), min_size=1, max_size=6))))
    w = np.array(draw(st.lists(st.floats(0.1, 1.0), min_size=len(locs), max_size=len(locs))))
    disc = dist.Discrete([float(v) for v in locs], w / w.sum())
    if kind == "discrete":
        return disc
    if kind == "mixture":
        return dist.mix(disc, dist.Normal(0, 3), draw(st.floats(0.05, 0.95)))
    xs = np.array([0.0, 1.0, 2.0, 3.0, 4.0])
    return dist.EmpiricalGrid(xs, [0.1, 0.3, 0.3, 0.8, 1.0])


@st.composite
def law_and_level(draw):
    return _random_law(draw), draw(st.floats(1e-6, 1 - 1e-6))


@given(law_and_level())
def test_galois_property(case):
    d, p = case
    x = d.quantile(p)
    assert d.cdf(x) >= p - 1e-12
    Fx = d.cdf(x)
    if 0 < Fx < 1:
        assert d.quantile(Fx) <= x + 1e-12 * max(1.0, abs(x))


def test_mixed_quantile_flat_over_atoms():
    d = dist.mix(dist.Discrete([0.0, 2.0], [0.5, 0.5]), dist.Normal(0, 1), 0.4)
    for loc, _ in d.atoms:
        lo, hi = d.cdf_left(loc), d.cdf(loc)
        levels = np.linspace(lo, hi, 7)[1:]
        assert np.all(d.quantile(levels) == loc)


@pytest.mark.parametrize("d", [dist.Normal(1, 0.3), dist.LogNormal(0.05, 0.2), dist.Exponential(1),
                               dist.Pareto(1, 3), dist.Uniform(0, 1)], ids=lambda d: d.name)
def test_density_integrates_to_one(d):
    lo, hi = d.support
    assert integrate(d.pdf, lo, hi) == pytest.approx(1.0, abs=1e-6)


def test_empirical_grid_from_csv(tmp_path):
    path = tmp_path / "law.csv"
    path.write_text("x,F\n0,0\n1,0.25\n2,0.25\n3,1\n")
    d = dist.make({"family": "empirical-grid", "params": {"csv": str(path)}})
    assert d.cdf(0.5) == pytest.approx(0.125)
    assert d.flats() == [(1.0, 2.0)]
    assert d.quantile(0.25) == 1.0


def test_quantile_rejects_closed_levels():
    with pytest.raises(InvalidParameter):
        dist.Normal(0, 1).quantile(0.0)
    with pytest.raises(InvalidParameter):
        dist.Normal(0, 1).quantile(1.0)


def test_named_law_round_trip():
    law = dist.NamedLaw.from_dict({"family": "pareto", "params": {"m": 1, "alpha": 3}})
    assert dist.NamedLaw.from_dict(law.to_dict()) == law
