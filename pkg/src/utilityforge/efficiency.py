"""Cost-efficiency: the cheapest payoff with a given law, payoff pricing, and
audits of arbitrary payoffs.

A payoff is a function of the kernel value ``xi``. Prices are computed in
kernel-quantile space, ``E[xi X] = int_0^1 X(q(u)) q(u) du`` with ``q`` the
kernel quantile, which keeps the integration range bounded.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Optional

import numpy as np
from scipy import special, stats

from . import distributions as dist
from .errors import InvalidParameter, NonConvergence, NonFinite, UnpricedTail
from .market import PricingKernel
from .numerics import Tolerance, as_array, bisect_first_true, default_tolerance, integrate, restore

DECREASING = "decreasing"
INCREASING = "increasing"

Z_MAX = 37.5  # Phi(-37.5) ~ 5e-308, the edge of double precision


@dataclass(frozen=True)
class Payoff:
    """Terminal consumption written as a function of the kernel value.

    Attributes:
        func: vectorized map ``xi -> X``.
        declared_law: the law of ``X`` when known.
        breaks: kernel values where ``func`` may jump.
        monotone: ``"decreasing"``/``"increasing"`` in ``xi`` when known.
        info: free-form metadata (e.g. the multiplier of an optimal payoff).
    """

    func: Callable[[np.ndarray], np.ndarray]
    declared_law: Optional[dist.Distribution] = None
    breaks: tuple[float, ...] = ()
    monotone: Optional[str] = None
    info: dict = field(default_factory=dict)

    def __call__(self, xi):
        arr, scalar = as_array(xi)
        return restore(np.asarray(self.func(arr), dtype=float), scalar)


@dataclass(frozen=True)
class EfficiencyReport:
    cost: float
    distributional_price: float
    is_antimonotone: bool
    is_efficient: bool
    excess_cost: float

    def to_dict(self) -> dict:
        return asdict(self)


def kernel_at_z(k: PricingKernel, z):
    """Kernel value at standard-normal score ``z`` (i.e. ``q(Phi(z))``), tail-accurate."""
    z = np.asarray(z, dtype=float)
    if k.params is not None:
        return np.exp(k.law.M + k.law.Sigma * z)
    lower = z < 0
    out = np.empty_like(z)
    out[lower] = k.law._quantile(special.ndtr(z[lower]))
    out[~lower] = k.law._isf(special.ndtr(-z[~lower]))
    return out


def constant_payoff(c: float) -> Payoff:
    c = float(c)
    return Payoff(lambda xi: np.full(np.shape(xi), c), dist.PointMass(c), monotone=DECREASING)


def stock_payoff(k: PricingKernel, g: Callable[[np.ndarray], np.ndarray], monotone: Optional[str] = None) -> Payoff:
    """Payoff ``g(S_T)`` re-expressed through the kernel (Black-Scholes only)."""
    if k.to_stock is None:
        raise InvalidParameter("stock payoffs need a kernel with a stock map")
    to_stock = k.to_stock
    return Payoff(lambda xi: g(to_stock(xi)), monotone=monotone)


def table_payoff(xi_points, values) -> Payoff:
    """Piecewise-linear payoff through ``(xi, value)`` nodes, flat outside."""
    xs = np.asarray(xi_points, dtype=float)
    vs = np.asarray(values, dtype=float)
    if xs.ndim != 1 or xs.size < 2 or xs.shape != vs.shape or np.any(np.diff(xs) <= 0):
        raise InvalidParameter("payoff table needs >= 2 rows with strictly increasing xi")
    mono = None
    if np.all(np.diff(vs) <= 0):
        mono = DECREASING
    elif np.all(np.diff(vs) >= 0):
        mono = INCREASING
    return Payoff(lambda xi: np.interp(xi, xs, vs), breaks=tuple(xs), monotone=mono)


def efficient_map(F: dist.Distribution, k: PricingKernel) -> Callable[[np.ndarray], np.ndarray]:
    """Vectorized ``xi -> F^{-1}(1 - F_xi(xi))`` with tail-accurate levels."""
    law = k.law
    tiny = np.finfo(float).tiny
    top = 1.0 - np.finfo(float).epsneg

    def func(xi):
        xi = np.asarray(xi, dtype=float)
        u = law._cdf(xi)
        v = law._sf(xi)
        out = np.empty_like(xi)
        lo = u < 0.5
        out[lo] = F._isf(np.clip(u[lo], tiny, top))
        out[~lo] = F._quantile(np.clip(v[~lo], tiny, top))
        return out

    return func


def efficient_payoff(F: dist.Distribution, k: PricingKernel, tol: Tolerance | None = None) -> Payoff:
    """Cheapest payoff with law ``F``: ``xi -> F^{-1}(1 - F_xi(xi))``.

    The payoff is non-increasing in ``xi``. Its price is computed once and
    stored in ``info["price"]``.

    Raises:
        UnpricedTail: the price of the payoff is infinite.
    """
    law = k.law
    func = efficient_map(F, k)

    levels = set()
    for loc, _ in F.atoms:
        levels.add(float(F.cdf_left(loc)))
        levels.add(float(F.cdf(loc)))
    for a, _ in F.flats():
        levels.add(float(F.cdf(a)))
    breaks = tuple(sorted(float(law.isf(lv)) for lv in levels if 0.0 < lv < 1.0))
    payoff = Payoff(func, declared_law=F, breaks=breaks, monotone=DECREASING)
    payoff.info["price"] = cost(payoff, k, tol)
    return payoff


def cost(x: Payoff, k: PricingKernel, tol: Tolerance | None = None) -> float:
    """Price ``E[xi_T X_T]`` by quadrature in kernel-quantile space.

    Raises:
        UnpricedTail: the price integral diverges.
        NonConvergence: quadrature failed for another reason.
    """
    tol = tol or default_tolerance()
    law = k.law

    def integrand(u):
        xi = law._quantile(u)
        return np.asarray(x.func(xi), dtype=float) * xi

    pts = [float(law.cdf(b)) for b in x.breaks if b > 0 and math.isfinite(b)]
    try:
        return integrate(integrand, 0.0, 1.0, tol, points=pts)
    except (NonConvergence, NonFinite) as exc:
        if _tail_diverges(integrand, tol, pts):
            raise UnpricedTail(f"payoff price diverges: {exc}") from exc
        raise


def _tail_diverges(integrand, tol, pts) -> bool:
    values = []
    for delta in (1e-3, 1e-6, 1e-9, 1e-12):
        try:
            inner = [p for p in pts if delta < p < 1 - delta]
            values.append(integrate(integrand, delta, 1 - delta, tol, points=inner))
        except (NonConvergence, NonFinite):
            return True
    steps = np.abs(np.diff(values))
    return bool(steps[-1] >= steps[-2] and steps[-1] > 10 * tol.abs_tol)


def distributional_price(F: dist.Distribution, k: PricingKernel, tol: Tolerance | None = None) -> float:
    """Lowest price of any payoff distributed as ``F``."""
    return efficient_payoff(F, k, tol).info["price"]


class PushforwardLaw(dist.Distribution):
    """Law of a monotone payoff ``X = x(xi_T)``.

    The kernel is parametrized by a standard-normal score ``z`` so that both
    tails keep full relative precision; cdf values come from bisection on
    ``z``.
    """

    kind = dist.CONTINUOUS

    def __init__(self, x: Payoff, k: PricingKernel, direction: str):
        if direction not in (DECREASING, INCREASING):
            raise InvalidParameter("direction must be 'decreasing' or 'increasing'")
        self.payoff, self.kernel, self.direction = x, k, direction
        ends = self._g(np.array([-Z_MAX, Z_MAX]))
        self.support = (float(np.min(ends)), float(np.max(ends)))
        self.name = f"pushforward({direction})"

    def _g(self, z):
        return np.asarray(self.payoff.func(kernel_at_z(self.kernel, z)), dtype=float)

    def _zstar(self, y):
        y = np.asarray(y, dtype=float)
        lo = np.full(y.shape, -Z_MAX)
        hi = np.full(y.shape, Z_MAX)
        if self.direction == DECREASING:
            pred = lambda z, idx: self._g(z) <= y[idx]
        else:
            pred = lambda z, idx: self._g(z) > y[idx]
        return bisect_first_true(pred, lo, hi, max_iter=200)

    def _cdf(self, y):
        z = self._zstar(y)
        return special.ndtr(-z) if self.direction == DECREASING else special.ndtr(z)

    def _sf(self, y):
        z = self._zstar(y)
        return special.ndtr(z) if self.direction == DECREASING else special.ndtr(-z)

    def _quantile(self, p):
        z = stats.norm.ppf(p)
        return self._g(-z) if self.direction == DECREASING else self._g(z)

    def _isf(self, q):
        z = stats.norm.isf(q)
        return self._g(-z) if self.direction == DECREASING else self._g(z)

    def _pdf(self, y):
        z = self._zstar(y)
        h = 1e-5 * np.maximum(1.0, np.abs(z))
        slope = np.abs(self._g(z + h) - self._g(z - h)) / (2 * h)
        with np.errstate(divide="ignore"):
            return np.where(slope > 0, stats.norm.pdf(z) / slope, 0.0)


def detect_monotone(x: Payoff, k: PricingKernel, n: int = 1001) -> Optional[str]:
    """Monotonicity of ``x`` in ``xi`` sampled on a kernel-quantile grid."""
    if x.monotone is not None:
        return x.monotone
    u = np.linspace(1e-4, 1 - 1e-4, n)
    vals = np.asarray(x.func(k.law._quantile(u)), dtype=float)
    d = np.diff(vals)
    slack = 1e-12 * max(1.0, float(np.max(np.abs(vals))))
    if np.all(d <= slack):
        return DECREASING
    if np.all(d >= -slack):
        return INCREASING
    return None


def payoff_law(x: Payoff, k: PricingKernel, n: int = 20_000) -> dist.Distribution:
    """Law of a payoff: declared, exact pushforward when monotone, else a
    sorted-sample approximation on ``n`` equal-probability kernel bands."""
    if x.declared_law is not None:
        return x.declared_law
    direction = detect_monotone(x, k)
    if direction is not None:
        return PushforwardLaw(x, k, direction)
    u = (np.arange(n) + 0.5) / n
    vals = np.asarray(x.func(k.law._quantile(u)), dtype=float)
    return dist.Discrete(vals, np.full(n, 1.0 / n), name="sampled-payoff-law")


def audit(x: Payoff, k: PricingKernel, law: dist.Distribution | None = None,
          tol: Tolerance | None = None, n_grid: int = 1001) -> EfficiencyReport:
    """Compare a payoff's price with the cheapest price for its law."""
    c = cost(x, k, tol)
    F = law if law is not None else payoff_law(x, k)
    price = distributional_price(F, k, tol)
    u = np.linspace(1e-4, 1 - 1e-4, n_grid)
    vals = np.asarray(x.func(k.law._quantile(u)), dtype=float)
    slack = 1e-12 * max(1.0, float(np.max(np.abs(vals))))
    anti = bool(np.all(np.diff(vals) <= slack))
    excess = c - price
    threshold = 1e-7 * max(1.0, abs(price))
    return EfficiencyReport(cost=c, distributional_price=price, is_antimonotone=anti,
                            is_efficient=bool(anti and excess <= threshold),
                            excess_cost=max(excess, 0.0) if excess > -threshold else excess)


def rearrange_bands(x: Payoff, k: PricingKernel, u1: float, u2: float, width: float) -> Payoff:
    """Swap payoff values between kernel-quantile bands ``[u1, u1+w)`` and ``[u2, u2+w)``.

    Both bands carry the same probability, so the law of the payoff is
    unchanged while its ordering against the kernel is broken.
    """
    if not (0 <= u1 and u1 + width <= u2 and u2 + width <= 1 and width > 0):
        raise InvalidParameter("bands must be disjoint, ordered and inside [0, 1]")
    law = k.law

    def func(xi):
        xi = np.asarray(xi, dtype=float)
        u = law._cdf(xi)
        src = xi.copy()
        a = (u >= u1) & (u < u1 + width)
        b = (u >= u2) & (u < u2 + width)
        src[a] = law._quantile(u[a] - u1 + u2)
        src[b] = law._quantile(u[b] - u2 + u1)
        return x.func(src)

    edges = [u1, u1 + width, u2, u2 + width]
    breaks = set(x.breaks)
    for e in edges:
        if 0 < e < 1:
            breaks.add(float(law.quantile(e)))
    for b in x.breaks:
        ub = float(law.cdf(b))
        for lo, hi, shift in ((u1, u1 + width, u2 - u1), (u2, u2 + width, u1 - u2)):
            if lo <= ub - shift < hi:
                breaks.add(float(law.quantile(min(max(ub - shift, 1e-300), 1 - 1e-16))))
    return Payoff(func, declared_law=x.declared_law, breaks=tuple(sorted(breaks)),
                  info={"bands": (u1, u2, width)})


def random_rearrangement(x: Payoff, k: PricingKernel, rng: np.random.Generator,
                         min_width: float = 0.005, max_width: float = 0.1) -> Payoff:
    """Band swap with random equal-probability bands."""
    w = rng.uniform(min_width, max_width)
    u1 = rng.uniform(0.0, 1.0 - 2 * w)
    u2 = rng.uniform(u1 + w, 1.0 - w)
    return rearrange_bands(x, k, u1, u2, w)


def parse_payoff(spec: str, k: PricingKernel) -> Payoff:
    """Parse a payoff spec: ``constant:C``, ``stock``, ``put:K``, ``call:K``,
    ``digital:C:B`` (pays B when xi <= C) or ``csv:PATH`` (xi,value table)."""
    kind, _, rest = spec.partition(":")
    args = rest.split(":") if rest else []
    try:
        if kind == "constant":
            return constant_payoff(float(args[0]))
        if kind == "stock":
            return stock_payoff(k, lambda s: s, monotone=DECREASING if k.theta > 0 else INCREASING)
        if kind == "put":
            K = float(args[0])
            return stock_payoff(k, lambda s: np.maximum(K - s, 0.0))
        if kind == "call":
            K = float(args[0])
            return stock_payoff(k, lambda s: np.maximum(s - K, 0.0))
        if kind == "digital":
            c, B = float(args[0]), float(args[1])
            return digital_payoff(c, B)
        if kind == "csv":
            import csv as _csv
            with open(rest, newline="") as fh:
                rows = list(_csv.DictReader(fh))
            return table_payoff([float(r["xi"]) for r in rows], [float(r["value"]) for r in rows])
    except (IndexError, ValueError, KeyError) as exc:
        raise InvalidParameter(f"bad payoff spec {spec!r}: {exc}") from exc
    raise InvalidParameter(
        f"unknown payoff kind {kind!r}; expected constant, stock, put, call, digital or csv")


def digital_payoff(c: float, B: float) -> Payoff:
    """``B * 1{xi <= c}``."""
    return Payoff(lambda xi: np.where(np.asarray(xi) <= c, B, 0.0), breaks=(c,), monotone=DECREASING)


def payoff_summary(x: Payoff) -> dict[str, Any]:
    out = {"monotone": x.monotone, "breaks": list(x.breaks)}
    out.update({k: v for k, v in x.info.items() if isinstance(v, (int, float, str))})
    return out
