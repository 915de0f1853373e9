"""Arrow-Pratt risk aversion implied by a target law, and DARA tests.

With ``G`` the law of ``H = -log(xi)`` and ``g`` its density, the implied
absolute risk aversion at wealth ``x`` is ``f(x) / g(G^{-1}(F(x)))``. DARA
holds exactly when ``y -> F^{-1}(G(y))`` is strictly convex.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from . import distributions as dist
from .errors import UndefinedAt, UndefinedHazard
from .market import PricingKernel
from .numerics import as_array, as_points, restore, second_differences

EPS_CONV = 1e-9
EPS_RATIO = 1e-6

TRANSFORM = "transform-convexity"
BS = "bs-convexity"
HAZARD = "hazard-sufficient"

STD_NORMAL = dist.Normal(0.0, 1.0)


def _levels(F: dist.Distribution, x: np.ndarray):
    """``(F(x), 1 - F(x))`` after checking that ``F`` has a density at ``x``."""
    if not F.has_density:
        raise UndefinedAt(f"{F.name} has no density")
    if F.atoms and np.any(F.atom_mass(x) > 0):
        raise UndefinedAt("risk aversion is undefined at an atom of the target law")
    p = F._cdf(x)
    q = F._sf(x)
    if np.any(~(p > 0) | ~(q > 0)):
        bad = x[~(p > 0) | ~(q > 0)][0]
        raise UndefinedAt(f"F(x) must lie in (0, 1); x={bad!r} is outside")
    return p, q


def _quantile_at(G: dist.Distribution, p: np.ndarray, q: np.ndarray) -> np.ndarray:
    return np.where(p < 0.5, G._quantile(np.minimum(p, 0.5)), G._isf(np.minimum(q, 0.5)))


def ara(F: dist.Distribution, k: PricingKernel, x):
    """Absolute risk aversion ``f(x) / g(G^{-1}(F(x)))``.

    Raises:
        UndefinedAt: ``F(x)`` is 0 or 1, ``x`` is an atom, or ``F`` has no density.
    """
    arr, scalar = as_array(x)
    p, q = _levels(F, arr)
    G = k.h_law
    h = _quantile_at(G, p, q)
    return restore(F._pdf(arr) / G._pdf(h), scalar)


def rra(F: dist.Distribution, k: PricingKernel, x):
    """Relative risk aversion ``x * ara(x)``."""
    arr, scalar = as_array(x)
    return restore(arr * np.asarray(ara(F, k, arr)), scalar)


@dataclass(frozen=True)
class RiskAversionProfile:
    x: np.ndarray
    p: np.ndarray
    ara: np.ndarray
    rra: np.ndarray

    def rows(self):
        return list(zip(self.x.tolist(), self.p.tolist(), self.ara.tolist(), self.rra.tolist()))


def profile(F: dist.Distribution, k: PricingKernel, grid=None, n: int = 201) -> RiskAversionProfile:
    """Risk aversion on a wealth grid (default: ``n`` quantiles of ``F`` over [0.005, 0.995])."""
    x = dist.quantile_grid(F, n=n) if grid is None else as_points(grid)
    a = np.asarray(ara(F, k, x))
    return RiskAversionProfile(x=x, p=np.asarray(F.cdf(x)), ara=a, rra=x * a)


@dataclass(frozen=True)
class DaraVerdict:
    """Outcome of a DARA test.

    ``margin`` is the smallest normalized second difference (or, for the
    hazard test, the smallest normalized hazard decrease). ``boundary``
    flags ``|margin| <= 1e-9``, the constant-risk-aversion case.
    """

    is_dara: bool
    is_asymptotic_dara: bool
    criterion_used: str
    witness: Optional[float]
    margin: float
    boundary: bool
    cross_check: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _transform(F: dist.Distribution, G: dist.Distribution, y: np.ndarray) -> np.ndarray:
    lo, hi = G.support
    if np.any((y <= lo) | (y >= hi)):
        raise UndefinedAt("grid leaves the support of G")
    p = G._cdf(y)
    q = G._sf(y)
    if np.any(~(p > 0) | ~(q > 0)):
        raise UndefinedAt("G(y) must lie in (0, 1) on the grid")
    out = _quantile_at(F, p, q)
    if not np.all(np.isfinite(out)):
        raise UndefinedAt("F^{-1}(G(y)) is not finite on the grid")
    return out


def _normalized_curvature(y: np.ndarray, t: np.ndarray) -> np.ndarray:
    d2 = second_differences(y, t)
    h = 0.5 * (y[2:] - y[:-2])
    scale = np.maximum.reduce([np.abs(t[:-2]), np.abs(t[1:-1]), np.abs(t[2:]),
                               np.abs(t[2:] - t[:-2]), np.full(d2.shape, np.finfo(float).tiny)])
    return d2 * h * h / scale


def _suffix_ok(values: np.ndarray, eps: float) -> bool:
    ok = values > eps
    n = 0
    for flag in ok[::-1]:
        if not flag:
            break
        n += 1
    return n >= max(3, int(math.ceil(0.05 * values.size)))


def _density_slope_ratio(d: dist.Distribution, x: np.ndarray) -> np.ndarray:
    """``f'(x) / f(x)^2``."""
    f = d._pdf(x)
    return np.asarray(d.pdf_derivative(x)) / (f * f)


def _verdict(y: np.ndarray, curv: np.ndarray, criterion: str, cross: dict) -> DaraVerdict:
    i = int(np.argmin(curv))
    margin = float(curv[i])
    is_dara = margin > EPS_CONV
    return DaraVerdict(
        is_dara=bool(is_dara),
        is_asymptotic_dara=bool(is_dara or _suffix_ok(curv, EPS_CONV)),
        criterion_used=criterion,
        witness=None if is_dara else float(y[i + 1]),
        margin=margin,
        boundary=bool(abs(margin) <= EPS_CONV),
        cross_check=cross,
    )


def default_h_grid(G: dist.Distribution, n: int = 201) -> np.ndarray:
    return dist.quantile_grid(G, n=n)


def dara_general(F: dist.Distribution, G: dist.Distribution, grid=None) -> DaraVerdict:
    """DARA test through strict convexity of ``y -> F^{-1}(G(y))``.

    The grid lives on the ``H`` axis (default: 201 quantiles of ``G`` over
    [0.005, 0.995]). The derivative-ratio form ``g'/g^2 > f'/f^2`` is
    evaluated on the same levels and reported as a cross-check.
    """
    y = default_h_grid(G) if grid is None else as_points(grid)
    t = _transform(F, G, y)
    curv = _normalized_curvature(y, t)
    cross = {}
    try:
        lhs = _density_slope_ratio(G, y[1:-1])
        rhs = _density_slope_ratio(F, t[1:-1])
        rel = (lhs - rhs) / (np.abs(lhs) + np.abs(rhs) + np.finfo(float).tiny)
        ratio_dara = bool(np.all(rel > EPS_RATIO))
        cross = {"ratio_margin": float(np.min(rel)), "ratio_is_dara": ratio_dara,
                 "agrees": ratio_dara == bool(np.min(curv) > EPS_CONV)}
    except (UndefinedAt, ArithmeticError, ValueError):
        cross = {"ratio_margin": None, "ratio_is_dara": None, "agrees": None}
    return _verdict(y, curv, TRANSFORM, cross)


def dara_bs(F: dist.Distribution, grid=None) -> DaraVerdict:
    """Black-Scholes DARA test: strict convexity of ``x -> F^{-1}(Phi(x))``.

    Also checks that ``f(F^{-1}(p)) / phi(Phi^{-1}(p))`` strictly decreases
    in ``p`` and reports agreement.
    """
    base = dara_general(F, STD_NORMAL, grid)
    y = default_h_grid(STD_NORMAL) if grid is None else as_points(grid)
    t = _transform(F, STD_NORMAL, y)
    ratio = F._pdf(t) / stats.norm.pdf(y)
    step = -np.diff(ratio) / np.maximum(np.abs(ratio[1:]), np.abs(ratio[:-1]))
    decreasing = bool(np.all(step > EPS_CONV))
    cross = dict(base.cross_check)
    cross.update({"density_ratio_decreasing": decreasing,
                  "density_ratio_margin": float(np.min(step)),
                  "ratio_agrees": decreasing == base.is_dara})
    return DaraVerdict(base.is_dara, base.is_asymptotic_dara, BS, base.witness,
                       base.margin, base.boundary, cross)


def dara_hazard_sufficient(F: dist.Distribution, grid=None) -> DaraVerdict:
    """Sufficient DARA test: non-increasing hazard on a wealth grid.

    The log-convexity of the survival function is checked alongside. A true
    verdict implies DARA; a false verdict is inconclusive.
    """
    x = dist.quantile_grid(F) if grid is None else as_points(grid)
    try:
        h = np.asarray(dist.hazard(F, x))
    except UndefinedHazard as exc:
        raise UndefinedAt(str(exc)) from exc
    top = float(np.max(np.abs(h)))
    drop = -np.diff(h) / top
    logsf = np.log(F._sf(x))
    curv = _normalized_curvature(x, logsf)
    nonincreasing = bool(np.all(drop >= -EPS_CONV))
    log_convex = bool(np.all(curv >= -EPS_CONV))
    i = int(np.argmin(drop))
    ok_suffix = 0
    for flag in (drop >= -EPS_CONV)[::-1]:
        if not flag:
            break
        ok_suffix += 1
    asym = ok_suffix >= max(3, int(math.ceil(0.05 * drop.size)))
    verdict = nonincreasing and log_convex
    return DaraVerdict(
        is_dara=verdict,
        is_asymptotic_dara=bool(verdict or asym),
        criterion_used=HAZARD,
        witness=None if verdict else float(x[i + 1]),
        margin=float(drop[i]),
        boundary=bool(abs(float(drop[i])) <= EPS_CONV),
        cross_check={"log_survival_convex": log_convex, "hazard_nonincreasing": nonincreasing},
    )
