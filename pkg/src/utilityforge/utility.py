"""Utility inference from a target law and the reverse map from a utility to
its optimal payoff.

Inferred curves satisfy ``U'(x) = q(1 - F(x))`` with ``q`` the kernel
quantile, so that the cost-efficient payoff for ``F`` is the expected-utility
optimum. Generalized curves extend the formula to laws with atoms and flats:
the value is ``-inf`` below the lower end of the support and constant above
the upper end.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from . import distributions as dist
from .efficiency import DECREASING, Payoff, cost, distributional_price, efficient_map
from .errors import (
    BudgetOutOfRange,
    DomainMismatch,
    InvalidParameter,
    NoBracket,
    NonContinuousTarget,
    NonConvergence,
)
from .market import PricingKernel
from .numerics import (
    Tolerance,
    as_array,
    as_points,
    bisect_first_true,
    default_tolerance,
    find_root,
    integrate,
    restore,
)

ArrayFn = Callable[[np.ndarray], np.ndarray]

LAMBDA_MIN = 1e-12
LAMBDA_MAX = 1e12


def _interior(x: np.ndarray, a: float, b: float) -> np.ndarray:
    return (x > a) & (x < b)


@dataclass(frozen=True)
class UtilityCurve:
    """Concave, strictly increasing utility on the open interval ``(a, b)``.

    ``value`` is closed form when ``value_fn`` is given, otherwise the
    cumulative integral of ``marginal`` from the anchor. ``marginal`` is the
    left derivative. ``kinks`` are points where the marginal jumps and
    ``flat_levels`` are marginal values held on a whole interval; both matter
    for the pseudo-inverse.
    """

    a: float
    b: float
    marginal_fn: ArrayFn
    anchor: Optional[float] = None
    value_fn: Optional[ArrayFn] = None
    inverse_fn: Optional[ArrayFn] = None
    kinks: tuple[float, ...] = ()
    flat_levels: tuple[float, ...] = ()
    name: str = "utility"
    tol: Optional[Tolerance] = None
    info: dict = field(default_factory=dict, compare=False)

    @property
    def domain(self) -> tuple[float, float]:
        return (self.a, self.b)

    def _check_domain(self, x: np.ndarray) -> None:
        if not np.all(_interior(x, self.a, self.b)):
            bad = x[~_interior(x, self.a, self.b)][0]
            raise DomainMismatch(f"x={bad!r} is outside the domain ({self.a}, {self.b}) of {self.name}")

    def value(self, x):
        arr, scalar = as_array(x)
        self._check_domain(arr)
        return restore(self._value(arr), scalar)

    def marginal(self, x):
        arr, scalar = as_array(x)
        self._check_domain(arr)
        return restore(np.asarray(self.marginal_fn(arr), dtype=float), scalar)

    def marginal_inverse(self, y):
        """``inf{x in (a, b) : U'(x) <= y}`` with ``inf{} = b``, for ``y > 0``."""
        arr, scalar = as_array(y)
        if np.any(~(arr > 0)):
            raise InvalidParameter("marginal utility levels must be > 0")
        if self.inverse_fn is not None:
            return restore(np.asarray(self.inverse_fn(arr), dtype=float), scalar)
        return restore(pseudo_inverse(self.marginal_fn, self.a, self.b, arr, self.kinks), scalar)

    def _value(self, x: np.ndarray) -> np.ndarray:
        if self.value_fn is not None:
            return np.asarray(self.value_fn(x), dtype=float)
        return cumulative_integral(self.marginal_fn, self.anchor, x, self.kinks, self.tol)

    def describe(self) -> dict:
        return {"name": self.name, "a": self.a, "b": self.b, "anchor": self.anchor,
                "kinks": list(self.kinks), "flat_levels": list(self.flat_levels)}


@dataclass(frozen=True)
class GeneralizedUtility(UtilityCurve):
    """Utility extended to the whole line: ``-inf`` below ``a``, flat from ``b``.

    ``a == b`` is allowed (a point-mass target), in which case the core
    interval is empty.
    """

    def _check_domain(self, x: np.ndarray) -> None:
        if np.any(np.isnan(x)):
            raise InvalidParameter("x must not be nan")

    @property
    def core(self) -> Optional[UtilityCurve]:
        if not self.a < self.b:
            return None
        return UtilityCurve(self.a, self.b, self.marginal_fn, self.anchor, self.value_fn,
                            self.inverse_fn, self.kinks, self.flat_levels, self.name, self.tol)

    def value_at_top(self) -> float:
        """``U(b-)``, the constant value from ``b`` on."""
        if math.isinf(self.b):
            return math.inf
        return float(self._value_core(np.array([self.b]))[0])

    def _value_core(self, x: np.ndarray) -> np.ndarray:
        if self.value_fn is not None:
            return np.asarray(self.value_fn(x), dtype=float)
        return cumulative_integral(self.marginal_fn, self.anchor, x, self.kinks, self.tol)

    def _value(self, x: np.ndarray) -> np.ndarray:
        out = np.empty_like(x)
        below = x < self.a
        above = x >= self.b
        mid = ~below & ~above
        out[below] = -math.inf
        if np.any(above):
            out[above] = self.value_at_top()
        at_a = mid & (x == self.a)
        inner = mid & ~at_a
        if np.any(inner):
            out[inner] = self._value_core(x[inner])
        if np.any(at_a):
            try:
                out[at_a] = self._value_core(x[at_a])
            except (NonConvergence, ArithmeticError):
                out[at_a] = -math.inf
        return out

    def marginal(self, x):
        arr, scalar = as_array(x)
        self._check_domain(arr)
        out = np.empty_like(arr)
        below = arr <= self.a
        above = arr > self.b
        mid = ~below & ~above
        out[below] = math.inf
        out[above] = 0.0
        if np.any(mid):
            out[mid] = np.asarray(self.marginal_fn(arr[mid]), dtype=float)
        return restore(out, scalar)


def cumulative_integral(marginal: ArrayFn, anchor: float, x: np.ndarray, breaks: Sequence[float] = (),
                        tol: Tolerance | None = None) -> np.ndarray:
    """``int_anchor^x marginal`` for each entry of ``x`` by chained quadrature."""
    if anchor is None:
        raise InvalidParameter("quadrature-based utility needs an anchor")
    x = np.asarray(x, dtype=float)
    vals = {float(anchor): 0.0}
    for side in (np.unique(x[x > anchor]), np.unique(x[x < anchor])[::-1]):
        prev, acc = float(anchor), 0.0
        for xi in side:
            acc += integrate(marginal, prev, xi, tol, points=breaks)
            prev = float(xi)
            vals[prev] = acc
    return np.array([vals[float(v)] for v in x])


def pseudo_inverse(marginal: ArrayFn, a: float, b: float, y: np.ndarray,
                   kinks: Sequence[float] = ()) -> np.ndarray:
    """``inf{x in (a, b) : marginal(x) <= y}`` with ``inf{} = b``.

    ``marginal`` must be non-increasing. Infinite ends are bracketed by
    geometric expansion; ``a`` and the kinks are tested first so that
    results landing on them come back exactly.
    """
    y = np.asarray(y, dtype=float)
    out = np.full(y.shape, np.nan)
    if not a < b:
        return np.full(y.shape, float(b))

    def pred(x, idx=None):
        yy = y if idx is None else y[idx]
        return np.asarray(marginal(x), dtype=float) <= yy

    # Candidates: the lower end and interior kinks.
    cands = ([a] if math.isfinite(a) else []) + [s for s in kinks if a < s < b]
    for s in sorted(cands):
        todo = np.isnan(out)
        if not np.any(todo):
            break
        idx = np.nonzero(todo)[0]
        right = np.nextafter(s, math.inf)
        if not right < b:
            continue
        hit = pred(np.full(idx.size, right), idx)
        if s > a:
            hit &= ~pred(np.full(idx.size, s), idx)
        out[idx[hit]] = s

    todo = np.isnan(out)
    if not np.any(todo):
        return out
    idx = np.nonzero(todo)[0]
    yy = y[idx]
    mp = lambda x: np.asarray(marginal(x), dtype=float)

    if math.isfinite(a):
        lo = np.full(idx.size, float(a))
    else:
        base = (b - 1.0) if math.isfinite(b) else 0.0
        lo = np.full(idx.size, base - 1.0)
        step = 1.0
        while True:
            bad = mp(lo) <= yy
            if not np.any(bad) or step > 1e300:
                break
            step *= 2.0
            lo[bad] = base - step
    if math.isfinite(b):
        hi = np.full(idx.size, float(b))
        empty = np.zeros(idx.size, dtype=bool)
    else:
        base = (lo.max() + 1.0) if math.isfinite(a) else max(lo.max() + 1.0, 1.0)
        base = max(base, float(a) + 1.0) if math.isfinite(a) else base
        hi = np.full(idx.size, base)
        step = 1.0
        while True:
            bad = mp(hi) > yy
            if not np.any(bad) or step > 1e300:
                break
            step *= 2.0
            hi[bad] = base + step
        empty = mp(hi) > yy
    res = bisect_first_true(lambda x, j: mp(x) <= yy[j], lo, hi)
    res[empty] = b
    out[idx] = res
    return out


# ---------------------------------------------------------------------------
# Inference


def _check_anchor(F: dist.Distribution, c: Optional[float], lo_ok: bool) -> float:
    if c is None:
        c = float(F.quantile(0.5))
    c = float(c)
    if not F.cdf(c) > 0:
        raise InvalidParameter(f"anchor c={c} needs F(c) > 0")
    a, b = F.support
    if c > b or c < a or (c == a and not lo_ok):
        raise InvalidParameter(f"anchor c={c} must lie in the support [{a}, {b}]")
    return c


def _marginal_from(F: dist.Distribution, k: PricingKernel, left: bool) -> ArrayFn:
    law = k.law

    def marginal(x):
        x = np.asarray(x, dtype=float)
        Fx = F._cdf_left(x) if left else F._cdf(x)
        sx = 1.0 - Fx if left else F._sf(x)
        out = np.empty_like(x)
        small = Fx < 0.5
        with np.errstate(divide="ignore"):
            out[small] = np.where(Fx[small] > 0, law._isf(np.maximum(Fx[small], 1e-320)), math.inf)
            out[~small] = np.where(sx[~small] > 0, law._quantile(np.maximum(sx[~small], 1e-320)), 0.0)
        return out

    return marginal


def infer_utility(F: dist.Distribution, k: PricingKernel, c: Optional[float] = None,
                  tol: Tolerance | None = None) -> UtilityCurve:
    """Concave utility under which the cost-efficient payoff for ``F`` is optimal.

    ``U(x) = int_c^x q(1 - F(y)) dy`` on the support ``(a, b)`` of ``F``.

    Raises:
        NonContinuousTarget: ``F`` has atoms or interior flats.
        UnpricedTail: the target has no finite price.
    """
    if F.atoms or F.flats():
        raise NonContinuousTarget(
            f"{F.name} has atoms or flat pieces; use infer_generalized_utility")
    c = _check_anchor(F, c, lo_ok=False)
    price = distributional_price(F, k, tol)
    a, b = F.support
    inv = efficient_map(F, k)
    return UtilityCurve(a=a, b=b, marginal_fn=_marginal_from(F, k, left=False), anchor=c,
                        inverse_fn=inv, name=f"inferred[{F.name}]", tol=tol,
                        info={"price": price})


def infer_generalized_utility(F: dist.Distribution, k: PricingKernel, c: Optional[float] = None,
                              tol: Tolerance | None = None) -> GeneralizedUtility:
    """Generalized utility for an arbitrary target law (atoms and flats allowed).

    Atoms of ``F`` become kinks of ``U`` and flats of ``F`` become linear
    pieces. The marginal is the left derivative ``q(1 - F(x-))``.
    """
    c = _check_anchor(F, c, lo_ok=True)
    price = distributional_price(F, k, tol)
    a, b = F.support
    kinks = {float(loc) for loc, _ in F.atoms if a < loc < b}
    levels = []
    for lo, hi in F.flats():
        kinks.update(v for v in (lo, hi) if a < v < b)
        levels.append(float(k.law.isf(float(F.cdf(lo)))))
    return GeneralizedUtility(a=a, b=b, marginal_fn=_marginal_from(F, k, left=True), anchor=c,
                              kinks=tuple(sorted(kinks)), flat_levels=tuple(sorted(levels)),
                              name=f"generalized[{F.name}]", tol=tol, info={"price": price})


# ---------------------------------------------------------------------------
# Utility -> payoff


def budget_window(u: UtilityCurve, k: PricingKernel) -> tuple[float, float]:
    """Budgets for which an optimum exists: ``(a E[xi], b E[xi])``."""
    m = k.mean()
    return (u.a * m, u.b * m)


def optimal_payoff(u: UtilityCurve, k: PricingKernel, budget: float,
                   tol: Tolerance | None = None) -> Payoff:
    """Expected-utility optimum ``xi -> [U']^{-1}(lambda* xi)`` for a budget.

    The multiplier is 1 when that already matches the budget; otherwise it
    is found by a root search in ``log(lambda)`` after expanding a bracket
    geometrically from 1.

    Raises:
        BudgetOutOfRange: budget outside ``(a E[xi], b E[xi])``.
        NoBracket: no bracket inside ``[1e-12, 1e12]``.
    """
    tol = tol or default_tolerance()
    budget = float(budget)
    lo_b, hi_b = budget_window(u, k)
    if not lo_b < budget < hi_b:
        raise BudgetOutOfRange(f"budget {budget} outside ({lo_b}, {hi_b})")

    def payoff_for(lam: float) -> Payoff:
        breaks = tuple(sorted(lv / lam for lv in u.flat_levels))
        return Payoff(lambda xi: u.marginal_inverse(lam * np.asarray(xi, dtype=float)),
                      breaks=breaks, monotone=DECREASING, info={"lambda": lam})

    def gap(lam: float) -> float:
        return cost(payoff_for(lam), k, tol) - budget

    g1 = gap(1.0)
    match = max(tol.abs_tol, tol.rel_tol * abs(budget)) * 10
    if abs(g1) <= match:
        return payoff_for(1.0)
    # cost is non-increasing in lambda
    lam_a, g_a = 1.0, g1
    factor = 10.0 if g1 > 0 else 0.1
    while True:
        lam_b = lam_a * factor
        if not LAMBDA_MIN <= lam_b <= LAMBDA_MAX:
            raise NoBracket(f"could not bracket the budget with lambda in [{LAMBDA_MIN}, {LAMBDA_MAX}]")
        g_b = gap(lam_b)
        if g_b == 0.0:
            return payoff_for(lam_b)
        if (g_b > 0) != (g_a > 0):
            break
        lam_a, g_a = lam_b, g_b
    t = find_root(lambda s: gap(math.exp(s)), math.log(lam_a), math.log(lam_b),
                  Tolerance(abs_tol=1e-14, rel_tol=tol.rel_tol, max_iter=200))
    return payoff_for(math.exp(t))


# ---------------------------------------------------------------------------
# Parametric families


@dataclass(frozen=True)
class ParametricFamily:
    """Closed-form utility families.

    ``crra(gamma)``, ``log``, ``cara(gamma)``, ``hara(a, b, gamma)``,
    ``yaari-piecewise(c, B)`` and ``guarantee-crra(G, exponent, scale)``.
    """

    family: str
    params: Mapping[str, float] = field(default_factory=dict)

    def curve(self) -> UtilityCurve:
        p = dict(self.params)
        builder = _FAMILIES.get(self.family)
        if builder is None:
            raise InvalidParameter(
                f"unknown utility family {self.family!r}; expected one of {', '.join(_FAMILIES)}")
        try:
            return builder(**p)
        except TypeError as exc:
            raise InvalidParameter(f"bad parameters for {self.family}: {exc}") from exc

    def value(self, x):
        return self.curve().value(x)

    def to_dict(self) -> dict:
        return {"family": self.family, "params": dict(self.params)}


def crra(gamma: float) -> UtilityCurve:
    g = float(gamma)
    if not g > 0:
        raise InvalidParameter("crra needs gamma > 0")
    if g == 1.0:
        value = np.log
    else:
        value = lambda x: np.power(x, 1.0 - g) / (1.0 - g)
    return UtilityCurve(0.0, math.inf, lambda x: np.power(x, -g), value_fn=value,
                        inverse_fn=lambda y: np.power(y, -1.0 / g), name=f"crra({g})")


def cara(gamma: float) -> UtilityCurve:
    g = float(gamma)
    if not g > 0:
        raise InvalidParameter("cara needs gamma > 0")
    return UtilityCurve(-math.inf, math.inf, lambda x: g * np.exp(-g * x),
                        value_fn=lambda x: -np.exp(-g * x),
                        inverse_fn=lambda y: -np.log(y / g) / g, name=f"cara({g})")


def hara(a: float, b: float, gamma: float) -> UtilityCurve:
    """``U(x) = (1-gamma)/gamma * (a x/(1-gamma) + b)^gamma`` on ``a x/(1-gamma) + b > 0``."""
    a, b, g = float(a), float(b), float(gamma)
    if not a > 0 or g == 1.0:
        raise InvalidParameter("hara needs a > 0 and gamma != 1")
    edge = -b * (1.0 - g) / a
    lo, hi = (edge, math.inf) if g < 1 else (-math.inf, edge)
    z = lambda x: a * x / (1.0 - g) + b
    if g == 0.0:
        value = lambda x: np.log(z(x))
    else:
        value = lambda x: (1.0 - g) / g * np.power(z(x), g)
    return UtilityCurve(lo, hi, lambda x: a * np.power(z(x), g - 1.0), value_fn=value,
                        inverse_fn=lambda y: (np.power(y / a, 1.0 / (g - 1.0)) - b) * (1.0 - g) / a,
                        name=f"hara({a}, {b}, {g})")


def yaari_piecewise(c: float, B: float) -> GeneralizedUtility:
    """``-inf`` below 0, ``c (x - c)`` on ``[0, B]``, ``c (B - c)`` above."""
    c, B = float(c), float(B)
    if not (c > 0 and B > 0):
        raise InvalidParameter("yaari-piecewise needs c > 0 and B > 0")
    return GeneralizedUtility(0.0, B, lambda x: np.full(np.shape(x), c), anchor=c,
                              value_fn=lambda x: c * (np.asarray(x) - c), flat_levels=(c,),
                              name=f"yaari({c}, {B})")


def guarantee_crra(G: float, exponent: float, scale: float = 1.0) -> GeneralizedUtility:
    """``-inf`` below ``G``; ``scale (x^(1-e) - G^(1-e))/(1-e)`` from ``G`` on (log when e = 1)."""
    G, e, s = float(G), float(exponent), float(scale)
    if not (G > 0 and e > 0 and s > 0):
        raise InvalidParameter("guarantee-crra needs G, exponent, scale > 0")
    if e == 1.0:
        value = lambda x: s * np.log(np.asarray(x) / G)
    else:
        value = lambda x: s * (np.power(x, 1.0 - e) - G ** (1.0 - e)) / (1.0 - e)
    return GeneralizedUtility(G, math.inf, lambda x: s * np.power(x, -e), anchor=G, value_fn=value,
                              name=f"guarantee-crra({G}, {e}, {s})")


_FAMILIES: dict[str, Callable[..., UtilityCurve]] = {
    "crra": crra,
    "log": lambda: crra(1.0),
    "cara": cara,
    "hara": hara,
    "yaari-piecewise": yaari_piecewise,
    "guarantee-crra": guarantee_crra,
}

FAMILY_NAMES = tuple(_FAMILIES)


# ---------------------------------------------------------------------------
# Affine matching and CSV


@dataclass(frozen=True)
class AffineFit:
    alpha: float
    beta: float
    residual: float

    def to_dict(self) -> dict:
        return asdict(self)


def affine_fit(u: UtilityCurve, fam: UtilityCurve | ParametricFamily, grid) -> AffineFit:
    """Least-squares ``alpha * fam + beta`` against ``u`` on the grid."""
    pts = as_points(grid)
    other = fam.curve() if isinstance(fam, ParametricFamily) else fam
    for curve in (u, other):
        if not np.all(_interior(pts, curve.a, curve.b)):
            raise DomainMismatch(f"grid leaves the domain ({curve.a}, {curve.b}) of {curve.name}")
    target = np.asarray(u.value(pts), dtype=float)
    basis = np.asarray(other.value(pts), dtype=float)
    design = np.column_stack([basis, np.ones_like(basis)])
    (alpha, beta), *_ = np.linalg.lstsq(design, target, rcond=None)
    resid = float(np.max(np.abs(target - (alpha * basis + beta))))
    return AffineFit(float(alpha), float(beta), resid)


def affine_match(u: UtilityCurve, fam: UtilityCurve | ParametricFamily, grid) -> float:
    """Max residual of the best affine fit ``alpha * fam + beta`` to ``u``."""
    return affine_fit(u, fam, grid).residual


def curve_rows(u: UtilityCurve, grid) -> list[tuple[float, float, float]]:
    pts = as_points(grid)
    return list(zip(pts.tolist(), np.asarray(u.value(pts)).tolist(),
                    np.asarray(u.marginal(pts)).tolist()))


def write_curve_csv(u: UtilityCurve, grid, path_or_file) -> None:
    """Write ``x,value,marginal`` rows at 17 significant digits."""
    rows = curve_rows(u, grid)
    own = isinstance(path_or_file, str)
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "value", "marginal"])
        for row in rows:
            w.writerow([format(v, ".17g") for v in row])
    finally:
        if own:
            fh.close()


def curve_from_csv(path: str) -> UtilityCurve:
    """Utility from ``x,value,marginal`` rows; interpolates linearly between nodes."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if len(rows) < 2:
        raise InvalidParameter("curve csv needs at least two rows")
    try:
        x = np.array([float(r["x"]) for r in rows])
        v = np.array([float(r["value"]) for r in rows])
        m = np.array([float(r["marginal"]) for r in rows])
    except (KeyError, ValueError) as exc:
        raise InvalidParameter(f"curve csv needs numeric x,value,marginal columns: {exc}") from exc
    if np.any(np.diff(x) <= 0):
        raise InvalidParameter("curve csv x column must be strictly increasing")
    h = (x[-1] - x[0]) * 1e-12
    return UtilityCurve(x[0] - h, x[-1] + h, lambda t: np.interp(t, x, m),
                        value_fn=lambda t: np.interp(t, x, v), name=f"csv[{path}]")
