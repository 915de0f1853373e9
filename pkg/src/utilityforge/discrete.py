"""Finite-state markets: anti-monotone rearrangement, two piecewise utilities
that rationalize a given allocation, an optimality checker, and a
non-equiprobable counterexample.

State ``i`` has probability ``p_i`` and kernel value ``xi_i``; an allocation
``x`` costs ``sum p_i xi_i x_i``. Scalar paths accept ``fractions.Fraction``
inputs and stay exact.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .errors import InfeasibleAllocation, InvalidParameter, NonStrictOrder, NotEquiprobable

PAPER_STEP = "paper-step"
PELEG_YAARI = "peleg-yaari"


@dataclass(frozen=True)
class DiscreteMarket:
    """``N`` states with kernel values ``xi`` and probabilities ``probs``."""

    xi: tuple
    probs: tuple = ()

    def __post_init__(self):
        xi = tuple(self.xi)
        if not xi:
            raise InvalidParameter("market needs at least one state")
        if any(not v > 0 for v in xi):
            raise InvalidParameter("kernel values must be > 0")
        probs = tuple(self.probs) or tuple(Fraction(1, len(xi)) for _ in xi)
        if len(probs) != len(xi):
            raise InvalidParameter("probs and xi must have the same length")
        if any(not (0 < q <= 1) for q in probs):
            raise InvalidParameter("probabilities must lie in (0, 1]")
        if abs(float(sum(probs)) - 1.0) > 1e-12:
            raise InvalidParameter("probabilities must sum to 1")
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "probs", probs)

    @property
    def N(self) -> int:
        return len(self.xi)

    @property
    def is_equiprobable(self) -> bool:
        p0 = self.probs[0]
        return all(abs(float(q - p0)) <= 1e-12 for q in self.probs)

    def order(self) -> list[int]:
        """State indices sorted by kernel value, largest first (stable)."""
        return sorted(range(self.N), key=lambda i: -self.xi[i])

    def cost(self, x: Sequence) -> object:
        if len(x) != self.N:
            raise InfeasibleAllocation(f"allocation has {len(x)} entries, market has {self.N} states")
        return sum(p * z * v for p, z, v in zip(self.probs, self.xi, x))

    def expected(self, values: Sequence) -> object:
        return sum(p * v for p, v in zip(self.probs, values))

    def to_dict(self) -> dict:
        return {"N": self.N, "xi": [float(v) for v in self.xi], "probs": [float(q) for q in self.probs]}


def rearrange_antimonotone(m: DiscreteMarket, x: Sequence) -> list:
    """Reorder allocation values so they increase as the kernel decreases.

    States sharing a kernel value keep the relative order of their original
    values, so already anti-monotone inputs come back unchanged.

    Raises:
        NotEquiprobable: the swap argument needs equal state probabilities.
    """
    if not m.is_equiprobable:
        raise NotEquiprobable("rearrangement preserves the law only for equiprobable states")
    if len(x) != m.N:
        raise InfeasibleAllocation("allocation length does not match the market")
    values = sorted(x)
    states = m.order()
    out = list(x)
    start = 0
    while start < m.N:
        end = start
        while end + 1 < m.N and m.xi[states[end + 1]] == m.xi[states[start]]:
            end += 1
        group = states[start:end + 1]
        by_value = sorted(group, key=lambda i: (x[i], i))
        for i, v in zip(by_value, values[start:end + 1]):
            out[i] = v
        start = end + 1
    return out


def min_cost_permutation(m: DiscreteMarket, x: Sequence):
    """Cheapest arrangement of ``x`` over all ``N!`` permutations (small ``N``)."""
    if m.N > 9:
        raise InvalidParameter("exhaustive search is limited to N <= 9")
    best, arg = None, None
    for perm in itertools.permutations(x):
        c = m.cost(perm)
        if best is None or c < best:
            best, arg = c, list(perm)
    return best, arg


@dataclass(frozen=True)
class PiecewiseUtility:
    """Concave utility built from sorted levels ``x_1 < ... < x_N`` and
    kernel values ``xi_1 > ... > xi_N``.

    ``paper-step``: slope ``xi_1`` below ``x_1``, ``xi_{i+1}`` on
    ``[x_i, x_{i+1})``, 0 above ``x_N``; ``U(x_1) = 0``.

    ``peleg-yaari``: derivative ``xi_1 - y + x_1`` below ``x_1``, linear
    between the points ``(x_j, xi_j)``, ``xi_N`` above ``x_N``; ``U(0) = 0``.
    """

    kind: str
    breakpoints: tuple
    xi: tuple

    @property
    def slopes(self) -> tuple:
        """Slopes of the paper-step utility per segment, left to right."""
        if self.kind != PAPER_STEP:
            raise InvalidParameter("slopes are defined for the paper-step utility")
        return tuple(self.xi) + (0,)

    # -- exact scalar evaluation --
    def _v(self, y):
        """Derivative (left derivative for the step utility)."""
        xs, zs = self.breakpoints, self.xi
        n = len(xs)
        if self.kind == PAPER_STEP:
            if y <= xs[0]:
                return zs[0]
            for j in range(1, n):
                if y <= xs[j]:
                    return zs[j]
            return 0 * zs[0]
        if y < xs[0]:
            return zs[0] - y + xs[0]
        for j in range(n - 1):
            if y < xs[j + 1]:
                return zs[j] + (y - xs[j]) * (zs[j + 1] - zs[j]) / (xs[j + 1] - xs[j])
        return zs[-1]

    def _from_x1(self, x):
        """``int_{x_1}^x`` of the derivative."""
        xs, zs = self.breakpoints, self.xi
        n = len(xs)
        if x <= xs[0]:
            if self.kind == PAPER_STEP:
                return zs[0] * (x - xs[0])
            return (x - xs[0]) * (zs[0] + (xs[0] - x) / 2)
        total = 0 * x
        for j in range(n - 1):
            lo, hi = xs[j], xs[j + 1]
            if x <= lo:
                break
            t = min(x, hi)
            if self.kind == PAPER_STEP:
                total += zs[j + 1] * (t - lo)
            else:
                total += (t - lo) * (zs[j] + self._v(t) if t < hi else zs[j] + zs[j + 1]) / 2
        if x > xs[-1] and self.kind == PELEG_YAARI:
            total += zs[-1] * (x - xs[-1])
        return total

    def value(self, x):
        """Utility at ``x``: exact for scalars (incl. Fractions), vectorized for arrays."""
        if isinstance(x, np.ndarray):
            return self._value_array(x)
        if self.kind == PAPER_STEP:
            return self._from_x1(x)
        return self._from_x1(x) - self._from_x1(0 * x)

    def left_derivative(self, x):
        return self._v(x)

    def _value_array(self, x: np.ndarray) -> np.ndarray:
        xs = np.array([float(v) for v in self.breakpoints])
        knots = np.array([float(self._from_x1(v)) for v in self.breakpoints])
        zs = np.array([float(v) for v in self.xi])
        x = np.asarray(x, dtype=float)
        if self.kind == PAPER_STEP:
            out = np.interp(x, xs, knots)
            below = x < xs[0]
            out[below] = zs[0] * (x[below] - xs[0])
            return out  # anchored at x_1
        out = np.empty_like(x)
        below = x < xs[0]
        above = x >= xs[-1]
        out[below] = (x[below] - xs[0]) * (zs[0] + (xs[0] - x[below]) / 2)
        out[above] = knots[-1] + zs[-1] * (x[above] - xs[-1])
        mid = ~below & ~above
        if np.any(mid):
            j = np.clip(np.searchsorted(xs, x[mid], side="right") - 1, 0, xs.size - 2)
            t = x[mid] - xs[j]
            slope = (zs[j + 1] - zs[j]) / (xs[j + 1] - xs[j])
            out[mid] = knots[j] + zs[j] * t + slope * t * t / 2
        return out - float(self._from_x1(0.0))

    def to_rows(self) -> list[tuple[float, float, float]]:
        """``(breakpoint, value, left slope)`` rows."""
        return [(float(b), float(self.value(b)), float(self.left_derivative(b))) for b in self.breakpoints]


def _sorted_inputs(m: DiscreteMarket, xstar: Sequence):
    if len(xstar) != m.N:
        raise InfeasibleAllocation("allocation length does not match the market")
    xs = tuple(sorted(xstar))
    zs = tuple(sorted(m.xi, reverse=True))
    if any(a == b for a, b in zip(xs, xs[1:])):
        raise NonStrictOrder("allocation values must be distinct")
    if any(a == b for a, b in zip(zs, zs[1:])):
        raise NonStrictOrder("kernel values must be distinct")
    return xs, zs


def paper_step_utility(m: DiscreteMarket, xstar: Sequence) -> PiecewiseUtility:
    """Step-marginal utility built from the laws of ``x*`` and ``xi``.

    Raises:
        NotEquiprobable: states are not equally likely.
        NonStrictOrder: ties among the allocation or kernel values.
    """
    if not m.is_equiprobable:
        raise NotEquiprobable("the step construction assumes equiprobable states")
    xs, zs = _sorted_inputs(m, xstar)
    return PiecewiseUtility(PAPER_STEP, xs, zs)


def peleg_yaari_utility(m: DiscreteMarket, xstar: Sequence) -> PiecewiseUtility:
    """Smooth-marginal utility interpolating ``U'(x_j) = xi_j`` linearly."""
    if not m.is_equiprobable:
        raise NotEquiprobable("the construction assumes equiprobable states")
    xs, zs = _sorted_inputs(m, xstar)
    return PiecewiseUtility(PELEG_YAARI, xs, zs)


def empirical_formula_value(xstar: Sequence, xi: Sequence, x):
    """``int_{x_1}^x F_xi^{-1}(1 - F(y)) dy`` with ``F``, ``F_xi`` the
    equal-weight empirical laws of ``x*`` and ``xi``, for ``x >= min x*``.

    Computed straight from the generalized quantile definition.
    """
    xs = sorted(xstar)
    zs = sorted(xi)
    n = len(xs)

    def kernel_quantile(level):
        # inf{t : F_xi(t) >= level}
        for j, z in enumerate(zs):
            if Fraction(j + 1, n) >= level:
                return z
        return zs[-1]

    if x < xs[0]:
        raise InvalidParameter("the formula is finite only from the smallest level on")
    total = 0 * x
    for j in range(n):
        lo = xs[j]
        hi = xs[j + 1] if j + 1 < n else None
        if x <= lo:
            break
        t = x if hi is None else min(x, hi)
        level = 1 - Fraction(j + 1, n)  # 1 - F(y) on [x_j, x_{j+1})
        integrand = 0 if level == 0 else kernel_quantile(level)
        total += integrand * (t - lo)
    return total


@dataclass
class OptimalityReport:
    pathwise_violations: list = field(default_factory=list)
    random_violations: int = 0
    max_random_gap: float = -math.inf
    trials: int = 0
    expected_utility: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.pathwise_violations and self.random_violations == 0

    def to_dict(self) -> dict:
        out = asdict(self)
        out["ok"] = self.ok
        return out


def verify_optimality(m: DiscreteMarket, u: PiecewiseUtility, xstar: Sequence, trials: int = 10_000,
                      rng: Optional[np.random.Generator] = None, slack: float = 1e-10,
                      n_grid: int = 2001) -> OptimalityReport:
    """Check that ``x*`` maximizes expected utility under its own budget.

    (a) State by state, ``U(x_i*) - xi_i x_i* >= U(z) - xi_i z`` on a dense
    ``z`` grid. (b) ``trials`` random allocations with the same cost never
    beat ``x*`` by more than ``slack``.

    Raises:
        InfeasibleAllocation: wrong length or non-finite entries.
    """
    if len(xstar) != m.N:
        raise InfeasibleAllocation("allocation length does not match the market")
    x0 = np.array([float(v) for v in xstar])
    if not np.all(np.isfinite(x0)):
        raise InfeasibleAllocation("allocation entries must be finite")
    rng = rng if rng is not None else np.random.default_rng(0)
    xi = np.array([float(v) for v in m.xi])
    p = np.array([float(q) for q in m.probs])
    report = OptimalityReport(trials=int(trials))

    span = max(float(np.ptp(x0)), 1.0)
    z = np.unique(np.concatenate([
        np.linspace(x0.min() - 2 * span, x0.max() + 2 * span, n_grid),
        np.array([float(b) for b in u.breakpoints]), [0.0]]))
    uz = u.value(z)
    ux = u.value(x0)
    for i in range(m.N):
        gap = np.max(uz - xi[i] * z) - (ux[i] - xi[i] * x0[i])
        if gap > slack * max(1.0, abs(ux[i])):
            j = int(np.argmax(uz - xi[i] * z))
            report.pathwise_violations.append({"state": i, "z": float(z[j]), "gap": float(gap)})

    eu_star = float(p @ ux)
    report.expected_utility = eu_star
    if trials > 0:
        w = p * xi
        scales = span * np.array([1e-6, 1e-3, 0.1, 1.0])
        d = rng.dirichlet(np.ones(m.N), size=trials) - 1.0 / m.N
        d *= scales[rng.integers(0, scales.size, size=trials)][:, None] * m.N
        d -= np.outer(d @ w / (w @ w), w)
        challengers = x0[None, :] + d
        eu = u.value(challengers.ravel()).reshape(challengers.shape) @ p
        gaps = eu - eu_star
        report.max_random_gap = float(np.max(gaps))
        report.random_violations = int(np.sum(gaps > slack))
    return report


@dataclass(frozen=True)
class Counterexample:
    probs: tuple
    xi: tuple
    x_star: tuple
    y: tuple
    cost_x_star: Fraction
    cost_y: Fraction
    eu_x_star: Fraction
    eu_y_lower_bound: Fraction
    concavity_bound_u_8_9: Fraction
    random_checks: int
    min_random_eu_y: Fraction

    def to_dict(self) -> dict:
        return {k: (str(v) if isinstance(v, Fraction) else
                    [str(t) for t in v] if isinstance(v, tuple) else v)
                for k, v in asdict(self).items()}


def _random_concave(rng: np.random.Generator, knots: Sequence[Fraction]):
    """Random concave non-decreasing piecewise-linear ``U`` with ``U(0) = 0``
    and ``U(4/3) = 1``, exact in Fractions."""
    slopes = sorted((Fraction(int(s), 97) for s in rng.integers(0, 500, size=len(knots) + 1)),
                    reverse=True)
    edges = [Fraction(0), *knots]

    def raw(x):
        total = Fraction(0)
        for j, s in enumerate(slopes):
            lo = edges[j]
            hi = edges[j + 1] if j + 1 < len(edges) else x
            seg = min(x, hi) - lo
            if seg > 0:
                total += s * seg
        return total

    top = raw(Fraction(4, 3))
    if top == 0:
        return None
    return lambda x: raw(x) / top


def counterexample_nonequiprobable(n_random: int = 200, seed: int = 0) -> Counterexample:
    """Two-state market where the cheapest allocation is not rationalizable.

    With ``P = (1/3, 2/3)`` and ``xi = (3/4, 9/8)``, ``X* = (0, 4/3)`` and
    ``Y = (4/3, 8/9)`` both cost 1 and ``X*`` is cost-efficient, yet every
    concave non-decreasing ``U`` with ``U(0) = 0``, ``U(4/3) = 1`` gives
    ``E[U(Y)] >= 7/9 > 2/3 = E[U(X*)]``.
    """
    P = (Fraction(1, 3), Fraction(2, 3))
    xi = (Fraction(3, 4), Fraction(9, 8))
    m = DiscreteMarket(xi, P)
    xs = (Fraction(0), Fraction(4, 3))
    ys = (Fraction(4, 3), Fraction(8, 9))
    # U(8/9) >= (1/3) U(0) + (2/3) U(4/3) since 8/9 = (2/3)(4/3)
    u89 = Fraction(1, 3) * 0 + Fraction(2, 3) * 1
    eu_x = P[0] * 0 + P[1] * 1
    eu_y_lb = P[0] * 1 + P[1] * u89

    rng = np.random.default_rng(seed)
    worst = None
    done = 0
    while done < n_random:
        knots = sorted({Fraction(int(k), 36) for k in rng.integers(1, 60, size=3)})
        u = _random_concave(rng, knots)
        if u is None:
            continue
        eu_y = m.expected([u(v) for v in ys])
        eu_xs = m.expected([u(v) for v in xs])
        if eu_xs != Fraction(2, 3):
            raise AssertionError("normalization failed")
        worst = eu_y if worst is None else min(worst, eu_y)
        done += 1
    return Counterexample(P, xi, xs, ys, m.cost(xs), m.cost(ys), eu_x, eu_y_lb, u89,
                          n_random, worst if worst is not None else eu_y_lb)


def random_strict_instance(rng: np.random.Generator, N: int):
    """Equiprobable market with distinct kernel values and an anti-monotone
    allocation with distinct levels."""
    xi = np.sort(rng.uniform(0.2, 3.0, size=N))[::-1]
    while np.any(np.diff(xi) == 0):
        xi = np.sort(rng.uniform(0.2, 3.0, size=N))[::-1]
    perm = rng.permutation(N)
    xi = xi[perm]
    levels = np.sort(rng.uniform(-2.0, 5.0, size=N))
    x = np.empty(N)
    order = np.argsort(-xi, kind="stable")
    x[order] = levels
    return DiscreteMarket(tuple(xi.tolist())), x.tolist()
