"""Scalar probability laws: continuous, discrete and mixed.

All laws expose vectorized ``cdf``, ``sf``, ``cdf_left`` (the limit from the
left, ``F(x-)``), ``quantile`` (generalized inverse ``inf{t : F(t) >= p}``)
and ``isf``. Continuous parts also expose ``pdf``. Laws are immutable.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np
from scipy import stats

from .errors import InvalidParameter, UndefinedAt, UndefinedHazard
from .numerics import as_array, as_points, bisect_first_true, derivative, restore

CONTINUOUS = "continuous"
DISCRETE = "discrete"
MIXED = "mixed"

FAMILIES = (
    "normal", "lognormal", "exponential", "pareto", "uniform", "pointmass",
    "two-point", "discrete", "empirical-grid", "capital-guarantee",
)


def _check_levels(p: np.ndarray) -> None:
    if np.any(~(p > 0) | ~(p < 1)):
        raise InvalidParameter("quantile levels must lie strictly inside (0, 1)")


class Distribution:
    """Base class for a law on the real line.

    Subclasses set ``kind``, ``support`` and ``atoms`` and implement at least
    ``_cdf`` and ``_quantile``.
    """

    kind: str = CONTINUOUS
    support: tuple[float, float] = (-math.inf, math.inf)
    atoms: tuple[tuple[float, float], ...] = ()
    name: str = "distribution"

    # -- overridable kernels (array in, array out) --
    def _cdf(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _sf(self, x: np.ndarray) -> np.ndarray:
        return 1.0 - self._cdf(x)

    def _cdf_left(self, x: np.ndarray) -> np.ndarray:
        if not self.atoms:
            return self._cdf(x)
        out = self._cdf(x)
        for loc, mass in self.atoms:
            out = np.where(x == loc, out - mass, out)
        return np.clip(out, 0.0, 1.0)

    def _quantile(self, p: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _isf(self, q: np.ndarray) -> np.ndarray:
        return self._quantile(1.0 - q)

    def _pdf(self, x: np.ndarray) -> np.ndarray:
        raise UndefinedAt(f"{self.name} has no density")

    # -- public vectorized API --
    def cdf(self, x):
        arr, scalar = as_array(x)
        return restore(np.clip(self._cdf(arr), 0.0, 1.0), scalar)

    def sf(self, x):
        arr, scalar = as_array(x)
        return restore(np.clip(self._sf(arr), 0.0, 1.0), scalar)

    def cdf_left(self, x):
        arr, scalar = as_array(x)
        return restore(self._cdf_left(arr), scalar)

    def quantile(self, p):
        arr, scalar = as_array(p)
        _check_levels(arr)
        return restore(self._quantile(arr), scalar)

    def isf(self, q):
        """Quantile at level ``1 - q``, accurate for small ``q``."""
        arr, scalar = as_array(q)
        _check_levels(arr)
        return restore(self._isf(arr), scalar)

    def pdf(self, x):
        arr, scalar = as_array(x)
        return restore(self._pdf(arr), scalar)

    def pdf_derivative(self, x):
        """Derivative of the density (centered differences of ``pdf``)."""
        arr, scalar = as_array(x)
        return restore(derivative(self._pdf, arr), scalar)

    @property
    def has_density(self) -> bool:
        return type(self)._pdf is not Distribution._pdf

    def atom_mass(self, x):
        arr, scalar = as_array(x)
        out = np.zeros_like(arr)
        for loc, mass in self.atoms:
            out = np.where(arr == loc, out + mass, out)
        return restore(out, scalar)

    def flats(self) -> list[tuple[float, float]]:
        """Open intervals inside the support where the cdf is constant."""
        return []

    @property
    def is_continuous(self) -> bool:
        return not self.atoms

    @property
    def lower(self) -> float:
        return self.support[0]

    @property
    def upper(self) -> float:
        return self.support[1]

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.name}>"


class ScipyLaw(Distribution):
    """Continuous law backed by a frozen ``scipy.stats`` distribution."""

    kind = CONTINUOUS

    def __init__(self, frozen, name: str, params: Mapping[str, float]):
        self._d = frozen
        self.name = name
        self.params = dict(params)
        lo, hi = frozen.support()
        self.support = (float(lo), float(hi))

    def _cdf(self, x):
        return self._d.cdf(x)

    def _sf(self, x):
        return self._d.sf(x)

    def _quantile(self, p):
        return self._d.ppf(p)

    def _isf(self, q):
        return self._d.isf(q)

    def _pdf(self, x):
        return self._d.pdf(x)

    def mean(self) -> float:
        return float(self._d.mean())


class Normal(ScipyLaw):
    def __init__(self, M: float, Sigma: float):
        if not Sigma > 0:
            raise InvalidParameter("normal: Sigma must be > 0")
        super().__init__(stats.norm(loc=M, scale=Sigma), f"normal({M}, {Sigma})",
                         {"M": M, "Sigma": Sigma})
        self.M, self.Sigma = float(M), float(Sigma)

    def _pdf_derivative(self, x):
        z = (x - self.M) / self.Sigma
        return -z / self.Sigma * self._d.pdf(x)

    def pdf_derivative(self, x):
        arr, scalar = as_array(x)
        return restore(self._pdf_derivative(arr), scalar)


class LogNormal(ScipyLaw):
    def __init__(self, M: float, Sigma: float):
        if not Sigma > 0:
            raise InvalidParameter("lognormal: Sigma must be > 0")
        super().__init__(stats.lognorm(s=Sigma, scale=math.exp(M)),
                         f"lognormal({M}, {Sigma})", {"M": M, "Sigma": Sigma})
        self.M, self.Sigma = float(M), float(Sigma)

    def _quantile(self, p):
        return np.exp(self.M + self.Sigma * stats.norm.ppf(p))

    def _isf(self, q):
        return np.exp(self.M + self.Sigma * stats.norm.isf(q))


class Exponential(ScipyLaw):
    def __init__(self, lam: float):
        if not lam > 0:
            raise InvalidParameter("exponential: lam must be > 0")
        super().__init__(stats.expon(scale=1.0 / lam), f"exponential({lam})", {"lam": lam})
        self.lam = float(lam)


class Pareto(ScipyLaw):
    def __init__(self, m: float, alpha: float):
        if not (m > 0 and alpha > 0):
            raise InvalidParameter("pareto: m and alpha must be > 0")
        super().__init__(stats.pareto(b=alpha, scale=m), f"pareto({m}, {alpha})",
                         {"m": m, "alpha": alpha})
        self.m, self.alpha = float(m), float(alpha)

    def _sf(self, x):
        return np.where(x < self.m, 1.0, (self.m / np.maximum(x, self.m)) ** self.alpha)

    def _cdf(self, x):
        return np.where(x < self.m, 0.0, -np.expm1(self.alpha * np.log(self.m / np.maximum(x, self.m))))

    def _isf(self, q):
        return self.m * q ** (-1.0 / self.alpha)

    def _quantile(self, p):
        return self.m * np.exp(-np.log1p(-p) / self.alpha)


class Uniform(ScipyLaw):
    def __init__(self, lo: float = 0.0, hi: float = 1.0):
        if not hi > lo:
            raise InvalidParameter("uniform: hi must exceed lo")
        super().__init__(stats.uniform(loc=lo, scale=hi - lo), f"uniform({lo}, {hi})",
                         {"lo": lo, "hi": hi})


class Discrete(Distribution):
    """Finite law given by atoms ``(location, mass)``."""

    kind = DISCRETE

    def __init__(self, locations: Sequence[float], masses: Sequence[float], name: str | None = None):
        locs = np.asarray(locations, dtype=float)
        w = np.asarray(masses, dtype=float)
        if locs.ndim != 1 or locs.size == 0 or locs.shape != w.shape:
            raise InvalidParameter("discrete law needs matching non-empty locations and masses")
        if np.any(w <= 0) or np.any(w > 1) or not np.isfinite(locs).all():
            raise InvalidParameter("atom masses must lie in (0, 1] and locations be finite")
        if abs(w.sum() - 1.0) > 1e-12:
            raise InvalidParameter(f"atom masses sum to {w.sum()!r}, not 1")
        order = np.argsort(locs, kind="stable")
        locs, w = locs[order], w[order]
        uniq, inv = np.unique(locs, return_inverse=True)
        w = np.bincount(inv, weights=w)
        self.locations = uniq
        self.masses = w / w.sum()
        self._cum = np.cumsum(self.masses)
        self._cum[-1] = 1.0
        self.atoms = tuple((float(a), float(b)) for a, b in zip(self.locations, self.masses))
        self.support = (float(uniq[0]), float(uniq[-1]))
        self.name = name or f"discrete({len(uniq)} atoms)"

    def _cdf(self, x):
        idx = np.searchsorted(self.locations, x, side="right")
        cum = np.concatenate([[0.0], self._cum])
        return cum[idx]

    def _cdf_left(self, x):
        idx = np.searchsorted(self.locations, x, side="left")
        cum = np.concatenate([[0.0], self._cum])
        return cum[idx]

    def _sf(self, x):
        idx = np.searchsorted(self.locations, x, side="right")
        tail = np.concatenate([np.cumsum(self.masses[::-1])[::-1], [0.0]])
        return tail[idx]

    def _quantile(self, p):
        idx = np.searchsorted(self._cum, p, side="left")
        return self.locations[np.minimum(idx, self.locations.size - 1)]

    def _isf(self, q):
        tail = np.cumsum(self.masses[::-1])[::-1]   # P(X >= loc_i)
        # X quantile at 1-q: first loc with P(X > loc) <= q
        over = np.concatenate([tail[1:], [0.0]])    # P(X > loc_i)
        idx = np.searchsorted(-over, -q, side="left")
        return self.locations[np.minimum(idx, self.locations.size - 1)]

    def flats(self):
        return [(float(a), float(b)) for a, b in zip(self.locations[:-1], self.locations[1:])]


class PointMass(Discrete):
    def __init__(self, k: float):
        super().__init__([k], [1.0], name=f"pointmass({k})")
        self.k = float(k)


def two_point(x1: float, x2: float, p1: float) -> Discrete:
    """Law with mass ``p1`` at ``x1`` and ``1 - p1`` at ``x2``."""
    if not 0 < p1 < 1:
        raise InvalidParameter("two-point: p1 must lie in (0, 1)")
    if x1 == x2:
        raise InvalidParameter("two-point: locations must differ")
    return Discrete([x1, x2], [p1, 1.0 - p1], name=f"two-point({x1}, {x2}, {p1})")


class EmpiricalGrid(Distribution):
    """Law given by ``(x_i, F(x_i))`` pairs with piecewise-linear cdf.

    ``F(x_0) > 0`` places an atom at ``x_0``; equal consecutive ``F`` values
    give flats. The last value must be 1.
    """

    def __init__(self, x: Sequence[float], F: Sequence[float], name: str = "empirical-grid"):
        x = np.asarray(x, dtype=float)
        F = np.asarray(F, dtype=float)
        if x.ndim != 1 or x.size < 2 or x.shape != F.shape:
            raise InvalidParameter("empirical-grid needs >= 2 matching (x, F) pairs")
        if np.any(np.diff(x) <= 0):
            raise InvalidParameter("empirical-grid x values must be strictly increasing")
        if np.any(np.diff(F) < 0) or F[0] < 0 or abs(F[-1] - 1.0) > 1e-12:
            raise InvalidParameter("empirical-grid F must be non-decreasing from >= 0 to 1")
        # trim leading zeros so the support starts at the last F=0 point
        start = int(np.max(np.nonzero(F == 0.0)[0])) if np.any(F == 0.0) else 0
        x, F = x[start:], F[start:]
        end = int(np.min(np.nonzero(F >= 1.0)[0]))
        x, F = x[: end + 1], F[: end + 1]
        F[-1] = 1.0
        self.x, self.F = x, F
        self.atoms = ((float(x[0]), float(F[0])),) if F[0] > 0 else ()
        self.kind = MIXED if self.atoms else CONTINUOUS
        self.support = (float(x[0]), float(x[-1]))
        self.name = name

    def _cdf(self, x):
        return np.interp(x, self.x, self.F, left=0.0, right=1.0)

    def _cdf_left(self, x):
        out = self._cdf(x)
        return np.where(x == self.x[0], 0.0, out)

    def _quantile(self, p):
        i = np.searchsorted(self.F, p, side="left")
        i = np.clip(i, 0, self.F.size - 1)
        out = np.empty_like(p)
        first = i == 0
        out[first] = self.x[0]
        j = i[~first]
        F0, F1 = self.F[j - 1], self.F[j]
        x0, x1 = self.x[j - 1], self.x[j]
        w = (p[~first] - F0) / (F1 - F0)
        out[~first] = x0 + w * (x1 - x0)
        return out

    def _pdf(self, x):
        slopes = np.diff(self.F) / np.diff(self.x)
        i = np.searchsorted(self.x, x, side="right") - 1
        inside = (i >= 0) & (i < slopes.size)
        return np.where(inside, slopes[np.clip(i, 0, slopes.size - 1)], 0.0)

    def flats(self):
        out = []
        for k in range(self.F.size - 1):
            if self.F[k + 1] == self.F[k]:
                out.append((float(self.x[k]), float(self.x[k + 1])))
        return _merge(out)

    @classmethod
    def from_csv(cls, path: str) -> "EmpiricalGrid":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows or "x" not in rows[0] or "F" not in rows[0]:
            raise InvalidParameter(f"{path}: expected CSV columns x,F")
        return cls([float(r["x"]) for r in rows], [float(r["F"]) for r in rows],
                   name=f"empirical-grid({path})")


def _merge(intervals):
    out: list[tuple[float, float]] = []
    for a, b in intervals:
        if out and out[-1][1] == a:
            out[-1] = (out[-1][0], b)
        else:
            out.append((a, b))
    return out


class Truncated(Distribution):
    """Continuous law conditioned on ``X >= lower``."""

    kind = CONTINUOUS

    def __init__(self, base: Distribution, lower: float):
        if base.atoms:
            raise InvalidParameter("truncation needs a continuous base law")
        self.base = base
        self.lower_bound = float(lower)
        self._mass = float(base.sf(lower))
        if not self._mass > 0:
            raise InvalidParameter("truncation point leaves no mass")
        self._below = float(base.cdf(lower))
        self.support = (max(self.lower_bound, base.support[0]), base.support[1])
        self.name = f"truncated({base.name}, >= {lower})"

    def _sf(self, x):
        return np.where(x < self.lower_bound, 1.0, self.base._sf(np.maximum(x, self.lower_bound)) / self._mass)

    def _cdf(self, x):
        return 1.0 - self._sf(x)

    def _quantile(self, p):
        return np.maximum(self.base._isf((1.0 - p) * self._mass), self.lower_bound)

    def _isf(self, q):
        return np.maximum(self.base._isf(q * self._mass), self.lower_bound)

    def _pdf(self, x):
        return np.where(x < self.lower_bound, 0.0, self.base._pdf(x) / self._mass)


class Mixture(Distribution):
    """``p * discrete_part + (1 - p) * continuous_part``."""

    def __init__(self, discrete_part: Distribution, continuous_part: Distribution, p: float):
        self.D, self.C, self.p = discrete_part, continuous_part, float(p)
        atoms: dict[float, float] = {}
        for comp, w in ((discrete_part, self.p), (continuous_part, 1.0 - self.p)):
            if w > 0:
                for loc, mass in comp.atoms:
                    atoms[loc] = atoms.get(loc, 0.0) + w * mass
        self.atoms = tuple(sorted(atoms.items()))
        if self.p == 0.0:
            self.kind = continuous_part.kind
        elif self.p == 1.0:
            self.kind = discrete_part.kind
        else:
            self.kind = MIXED
        parts = [c for c, w in ((discrete_part, self.p), (continuous_part, 1.0 - self.p)) if w > 0]
        self.support = (min(c.support[0] for c in parts), max(c.support[1] for c in parts))
        self.name = f"mixture({discrete_part.name}, {continuous_part.name}, p={p})"

    def _cdf(self, x):
        return self.p * self.D._cdf(x) + (1.0 - self.p) * self.C._cdf(x)

    def _sf(self, x):
        return self.p * self.D._sf(x) + (1.0 - self.p) * self.C._sf(x)

    def _cdf_left(self, x):
        return self.p * self.D._cdf_left(x) + (1.0 - self.p) * self.C._cdf_left(x)

    def _pdf(self, x):
        if self.p == 1.0:
            return self.D._pdf(x)
        return (1.0 - self.p) * self.C._pdf(x)

    @property
    def has_density(self) -> bool:
        return self.p < 1.0 and self.C.has_density

    def _component_quantiles(self, p):
        qs = []
        for comp, w in ((self.D, self.p), (self.C, 1.0 - self.p)):
            if w > 0:
                qs.append(comp._quantile(p))
        return np.min(qs, axis=0), np.max(qs, axis=0)

    def _quantile(self, p):
        if self.p == 0.0:
            return self.C._quantile(p)
        if self.p == 1.0:
            return self.D._quantile(p)
        out = np.full(p.shape, np.nan)
        done = np.zeros(p.shape, dtype=bool)
        for loc, _ in self.atoms:
            lo_mass = float(self._cdf_left(np.array([loc]))[0])
            hi_mass = float(self._cdf(np.array([loc]))[0])
            hit = (~done) & (p > lo_mass) & (p <= hi_mass)
            out[hit] = loc
            done |= hit
        rest = ~done
        if np.any(rest):
            pr = p[rest]
            lo, hi = self._component_quantiles(pr)
            lo = np.nextafter(lo, -np.inf)
            out[rest] = bisect_first_true(lambda x, idx: self._cdf(x) >= pr[idx], lo, hi)
        return out

    def _isf(self, q):
        return self._quantile(1.0 - q)

    def flats(self):
        if self.p in (0.0, 1.0):
            return (self.C if self.p == 0.0 else self.D).flats()
        out = []
        for a, b in self.D.flats():
            lo, hi = self.C.support
            if b <= lo:
                out.append((a, min(b, lo)))
            elif a >= hi:
                out.append((max(a, hi), b))
        return out


def mix(discrete_part: Distribution, continuous_part: Distribution, p: float) -> Distribution:
    """Mixture ``p * F_D + (1 - p) * F_C`` with atoms inherited at scaled mass."""
    if not 0.0 <= p <= 1.0:
        raise InvalidParameter(f"mixture weight p={p} outside [0, 1]")
    return Mixture(discrete_part, continuous_part, p)


def capital_guarantee(G: float, M: float, s: float) -> Distribution:
    """Law of ``max(G, S)`` with ``log S ~ N(M, s**2)``: an atom at ``G``."""
    if not (G > 0 and s > 0):
        raise InvalidParameter("capital-guarantee: G and s must be > 0")
    p = float(stats.norm.cdf((math.log(G) - M) / s))
    dist = mix(PointMass(G), Truncated(LogNormal(M, s), G), p)
    dist.name = f"capital-guarantee(G={G}, M={M}, s={s})"
    return dist


def hazard(d: Distribution, x):
    """Hazard rate ``f(x) / (1 - F(x))``."""
    arr, scalar = as_array(x)
    if not d.has_density:
        raise UndefinedHazard(f"{d.name} has no density")
    if np.any(d.atom_mass(arr) > 0):
        raise UndefinedHazard("hazard is undefined at an atom")
    s = d.sf(arr)
    if np.any(s <= 0):
        raise UndefinedHazard("hazard is undefined where F(x) = 1")
    return restore(d.pdf(arr) / s, scalar)


def ks_distance(d1: Distribution, d2: Distribution, grid) -> float:
    """Largest cdf gap over the grid points."""
    pts = np.asarray(grid.points if hasattr(grid, "points") else grid, dtype=float)
    return float(np.max(np.abs(d1.cdf(pts) - d2.cdf(pts))))


@dataclass(frozen=True)
class NamedLaw:
    """A family name plus its parameters, as read from JSON."""

    family: str
    params: Mapping[str, Any] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "NamedLaw":
        if "family" not in data:
            raise InvalidParameter("law spec needs a 'family' field")
        return cls(str(data["family"]), dict(data.get("params", {})))

    def to_dict(self) -> dict:
        return {"family": self.family, "params": dict(self.params)}


_REQUIRED = {
    "normal": ("M", "Sigma"),
    "lognormal": ("M", "Sigma"),
    "exponential": ("lam",),
    "pareto": ("m", "alpha"),
    "uniform": ("lo", "hi"),
    "pointmass": ("k",),
    "two-point": ("x1", "x2", "p1"),
    "discrete": ("locations", "masses"),
    "empirical-grid": (),
    "capital-guarantee": ("G", "M", "s"),
}


def make(law: NamedLaw | Mapping[str, Any]) -> Distribution:
    """Build a ``Distribution`` from a named family."""
    if not isinstance(law, NamedLaw):
        law = NamedLaw.from_dict(law)
    fam, p = law.family, law.params
    if fam not in _REQUIRED:
        raise InvalidParameter(f"unknown family {fam!r}; valid families: {', '.join(FAMILIES)}")
    missing = [k for k in _REQUIRED[fam] if k not in p]
    if missing:
        raise InvalidParameter(f"{fam}: missing parameter(s) {', '.join(missing)}")
    try:
        if fam == "normal":
            return Normal(float(p["M"]), float(p["Sigma"]))
        if fam == "lognormal":
            return LogNormal(float(p["M"]), float(p["Sigma"]))
        if fam == "exponential":
            return Exponential(float(p["lam"]))
        if fam == "pareto":
            return Pareto(float(p["m"]), float(p["alpha"]))
        if fam == "uniform":
            return Uniform(float(p["lo"]), float(p["hi"]))
        if fam == "pointmass":
            return PointMass(float(p["k"]))
        if fam == "two-point":
            return two_point(float(p["x1"]), float(p["x2"]), float(p["p1"]))
        if fam == "discrete":
            return Discrete(p["locations"], p["masses"])
        if fam == "capital-guarantee":
            return capital_guarantee(float(p["G"]), float(p["M"]), float(p["s"]))
        if "csv" in p:
            return EmpiricalGrid.from_csv(str(p["csv"]))
        if "x" in p and "F" in p:
            return EmpiricalGrid(p["x"], p["F"])
        raise InvalidParameter("empirical-grid needs either 'csv' or 'x' and 'F'")
    except (TypeError, ValueError) as exc:
        if isinstance(exc, InvalidParameter):
            raise
        raise InvalidParameter(f"{fam}: {exc}") from exc


def quantile_grid(d: Distribution, lo: float = 0.005, hi: float = 0.995, n: int = 201) -> np.ndarray:
    """Wealth levels at evenly spaced quantile levels, de-duplicated."""
    levels = np.linspace(lo, hi, int(n))
    return np.unique(d.quantile(levels))


def check_grid_inside(d: Distribution, grid) -> np.ndarray:
    pts = as_points(grid)
    lo, hi = d.support
    if np.any(pts < lo) or np.any(pts > hi):
        raise UndefinedAt(f"grid leaves the support [{lo}, {hi}] of {d.name}")
    return pts
