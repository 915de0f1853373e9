"""Numerical kernels shared by the engines.

Everything here is a pure function of its inputs. Integrands and predicates
are expected to be numpy-vectorized: they receive a 1-d float array and must
return an array of the same shape.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import optimize

from .errors import InvalidParameter, NoBracket, NonConvergence, NonFinite

ArrayFn = Callable[[np.ndarray], np.ndarray]

EPS = np.finfo(float).eps


@dataclass(frozen=True)
class Tolerance:
    """Error targets for quadrature and root finding.

    Attributes:
        abs_tol: absolute error target.
        rel_tol: relative error target.
        max_iter: maximum number of refinement rounds (quadrature) or
            iterations (root finding).
    """

    abs_tol: float = 1e-10
    rel_tol: float = 1e-8
    max_iter: int = 60

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise InvalidParameter("abs_tol and rel_tol must be positive")
        if int(self.max_iter) < 1:
            raise InvalidParameter("max_iter must be >= 1")

    def scaled(self, factor: float) -> "Tolerance":
        return Tolerance(self.abs_tol * factor, self.rel_tol * factor, self.max_iter)

    @classmethod
    def from_string(cls, text: str) -> "Tolerance":
        """Parse ``"1e-9"`` (sets both targets) or ``"abs_tol=..,rel_tol=..,max_iter=.."``."""
        text = text.strip()
        if "=" not in text:
            v = float(text)
            return cls(abs_tol=v, rel_tol=v)
        kwargs: dict = {}
        for part in text.split(","):
            key, _, val = part.partition("=")
            key = key.strip()
            if key not in ("abs_tol", "rel_tol", "max_iter"):
                raise InvalidParameter(f"unknown tolerance field {key!r}")
            kwargs[key] = int(val) if key == "max_iter" else float(val)
        return cls(**kwargs)


DEFAULT_TOL = Tolerance()


def default_tolerance() -> Tolerance:
    """Default tolerance, honouring the ``UTILITYFORGE_TOL`` environment variable."""
    env = os.environ.get("UTILITYFORGE_TOL")
    if env:
        return Tolerance.from_string(env)
    return DEFAULT_TOL


@dataclass(frozen=True)
class Grid:
    """Strictly increasing finite sequence of at least two reals."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).ravel()
        if pts.size < 2:
            raise InvalidParameter("a grid needs at least two points")
        if not np.all(np.isfinite(pts)):
            raise InvalidParameter("grid points must be finite")
        if np.any(np.diff(pts) <= 0):
            raise InvalidParameter("grid points must be strictly increasing")
        object.__setattr__(self, "points", pts)

    @classmethod
    def uniform(cls, lo: float, hi: float, n: int) -> "Grid":
        return cls(np.linspace(lo, hi, int(n)))

    def __len__(self) -> int:
        return self.points.size

    def __iter__(self):
        return iter(self.points)


def as_points(grid) -> np.ndarray:
    if isinstance(grid, Grid):
        return grid.points
    return Grid(np.asarray(grid, dtype=float)).points


# ---------------------------------------------------------------------------
# Quadrature: adaptive Gauss-Kronrod (7, 15) on smoothed / compactified maps

_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])            # 15 nodes, ascending
_WK = np.concatenate([_WGK[:-1], _WGK[::-1]])
_WG15 = np.zeros(15)
_WG15[[1, 3, 5]] = _WG[:3]
_WG15[7] = _WG[3]
_WG15[[9, 11, 13]] = _WG[2::-1]

_MAX_INTERVALS = 200_000


def _segment_map(kind: int, lo: float, hi: float, t: np.ndarray):
    """Map t in (0,1) onto a segment; returns (x, dx/dt).

    A cubic smoothstep is applied first so that integrable power-law
    singularities at either end are damped by the Jacobian.
    """
    s = t * t * (3.0 - 2.0 * t)
    oms = (1.0 - t) ** 2 * (1.0 + 2.0 * t)
    ds = 6.0 * t * (1.0 - t)
    if kind == 0:
        x = lo + (hi - lo) * s
        jac = (hi - lo) * ds
        x = np.clip(x, np.nextafter(lo, hi), np.nextafter(hi, lo))
    elif kind == 1:  # [lo, +inf)
        x = lo + s / oms
        jac = ds / oms ** 2
        x = np.maximum(x, np.nextafter(lo, np.inf))
    else:  # (-inf, hi]
        x = hi - oms / s
        jac = ds / s ** 2
        x = np.minimum(x, np.nextafter(hi, -np.inf))
    return x, jac


def integrate(
    f: ArrayFn,
    lo: float,
    hi: float,
    tol: Tolerance | None = None,
    points: Iterable[float] = (),
) -> float:
    """Integrate a vectorized function over ``(lo, hi)``.

    Infinite endpoints are compactified by a rational substitution, finite
    endpoints are smoothed so that integrable endpoint singularities (e.g.
    ``x**-0.5`` at 0) converge quickly. ``points`` are known interior
    discontinuities or kinks; the range is split there.

    Raises:
        NonConvergence: error target not met within ``tol.max_iter`` rounds.
        NonFinite: the integrand returned inf/nan at an interior node.
    """
    tol = tol or default_tolerance()
    lo = float(lo)
    hi = float(hi)
    if math.isnan(lo) or math.isnan(hi):
        raise InvalidParameter("integration limits must not be nan")
    if lo == hi:
        return 0.0
    if lo > hi:
        return -integrate(f, hi, lo, tol, points)

    cuts = sorted({float(p) for p in points if lo < p < hi and math.isfinite(p)})
    if not cuts and math.isinf(lo) and math.isinf(hi):
        cuts = [0.0]
    edges = [lo, *cuts, hi]
    segs = []
    for a, b in zip(edges[:-1], edges[1:]):
        if math.isinf(a):
            segs.append((2, a, b))
        elif math.isinf(b):
            segs.append((1, a, b))
        else:
            segs.append((0, a, b))

    n0 = 2
    seg_id = np.repeat(np.arange(len(segs)), n0)
    ta = np.tile(np.arange(n0) / n0, len(segs))
    tb = ta + 1.0 / n0
    for _ in range(int(tol.max_iter)):
        K, err = _gk_eval(f, segs, seg_id, ta, tb)
        total = float(np.sum(K))
        total_err = float(np.sum(err))
        target = max(tol.abs_tol, tol.rel_tol * abs(total))
        if total_err <= target:
            return total
        splittable = (tb - ta) > 1e-15
        pick = (err > target / err.size) & splittable
        if not np.any(pick):
            if np.any(splittable):
                pick = (err == err[splittable].max()) & splittable
            else:
                raise NonConvergence(
                    f"quadrature stalled: estimated error {total_err:.3e} > {target:.3e}")
        keep = ~pick
        mid = 0.5 * (ta[pick] + tb[pick])
        seg_id = np.concatenate([seg_id[keep], seg_id[pick], seg_id[pick]])
        ta, tb = (np.concatenate([ta[keep], ta[pick], mid]),
                  np.concatenate([tb[keep], mid, tb[pick]]))
        if seg_id.size > _MAX_INTERVALS:
            raise NonConvergence(
                f"quadrature needed more than {_MAX_INTERVALS} intervals "
                f"(error {total_err:.3e} > {target:.3e})")
    raise NonConvergence(
        f"quadrature did not reach target within {tol.max_iter} rounds "
        f"(error {total_err:.3e} > {target:.3e})")


def _gk_eval(f, segs, seg_id, ta, tb):
    half = 0.5 * (tb - ta)
    center = 0.5 * (tb + ta)
    t = center[:, None] + half[:, None] * _NODES[None, :]
    x = np.empty_like(t)
    jac = np.empty_like(t)
    for k, (kind, a, b) in enumerate(segs):
        rows = seg_id == k
        if np.any(rows):
            x[rows], jac[rows] = _segment_map(kind, a, b, t[rows])
    fx = np.asarray(f(x.ravel()), dtype=float)
    if fx.shape != (x.size,):
        fx = np.broadcast_to(fx, (x.size,)).astype(float)
    fx = fx.reshape(x.shape)
    if not np.all(np.isfinite(fx)):
        bad = x[~np.isfinite(fx)][0]
        raise NonFinite(f"integrand is not finite at x={bad!r}")
    v = fx * jac
    K = half * (v @ _WK)
    G = half * (v @ _WG15)
    return K, np.abs(K - G)


# ---------------------------------------------------------------------------
# Root finding


def find_root(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    tol: Tolerance | None = None,
) -> float:
    """Root of a continuous scalar function inside the bracket ``[lo, hi]``.

    Uses Brent's method (inverse-quadratic / secant steps with a bisection
    fallback), so the returned point always stays inside the bracket.
    """
    tol = tol or default_tolerance()
    lo, hi = float(lo), float(hi)
    if lo > hi:
        lo, hi = hi, lo
    flo, fhi = float(f(lo)), float(f(hi))
    if not (math.isfinite(flo) and math.isfinite(fhi)):
        raise NonFinite("root function is not finite at the bracket ends")
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if flo * fhi > 0:
        raise NoBracket(f"f({lo})={flo:.6g} and f({hi})={fhi:.6g} have the same sign")
    root, info = optimize.brentq(
        f, lo, hi, xtol=tol.abs_tol, rtol=4 * EPS,
        maxiter=max(int(tol.max_iter), 1), full_output=True, disp=False)
    if not info.converged:
        raise NonConvergence(f"root finder stopped after {info.iterations} iterations")
    return float(min(max(root, lo), hi))


def bisect_first_true(
    pred: Callable[[np.ndarray, np.ndarray], np.ndarray],
    lo: np.ndarray,
    hi: np.ndarray,
    max_iter: int = 1100,
) -> np.ndarray:
    """Smallest point of ``[lo, hi]`` where a monotone predicate turns true.

    ``pred(x, idx)`` receives trial points for the still-active coordinates
    ``idx``; it must be False-then-True along each coordinate and is assumed
    true at ``hi``. Iterates until the brackets collapse to adjacent floats.
    """
    lo = np.array(lo, dtype=float, copy=True)
    hi = np.array(hi, dtype=float, copy=True)
    lo, hi = np.broadcast_arrays(lo, hi)
    lo, hi = lo.copy(), hi.copy()
    active = hi > lo
    for _ in range(max_iter):
        if not np.any(active):
            break
        idx = np.nonzero(active)[0]
        mid = 0.5 * (lo[idx] + hi[idx])
        same = (mid <= lo[idx]) | (mid >= hi[idx])
        ok = np.asarray(pred(mid, idx), dtype=bool)
        hi[idx[ok & ~same]] = mid[ok & ~same]
        lo[idx[~ok & ~same]] = mid[~ok & ~same]
        active[idx[same]] = False
    return hi


# ---------------------------------------------------------------------------
# Finite differences


def second_differences(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Three-point second divided differences (exact for quadratics)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    h0 = x[1:-1] - x[:-2]
    h1 = x[2:] - x[1:-1]
    return 2.0 * ((y[2:] - y[1:-1]) / h1 - (y[1:-1] - y[:-2]) / h0) / (h0 + h1)


def second_difference_min(f: ArrayFn, grid) -> float:
    """Minimum second difference of ``f`` over the interior of ``grid``.

    On a uniform grid this is ``min (f(x-h) - 2 f(x) + f(x+h)) / h**2``.
    A positive value means ``f`` is numerically convex on the grid.
    """
    pts = as_points(grid)
    if pts.size < 3:
        raise InvalidParameter("need at least three grid points")
    vals = np.asarray(f(pts), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise NonFinite("function is not finite on the grid")
    return float(np.min(second_differences(pts, vals)))


def derivative(f: ArrayFn, x, rel_step: float = EPS ** (1 / 3)) -> np.ndarray:
    """Centered first derivative with a step scaled to ``|x|``."""
    x = np.asarray(x, dtype=float)
    h = rel_step * np.maximum(1.0, np.abs(x))
    return (np.asarray(f(x + h)) - np.asarray(f(x - h))) / (2.0 * h)


def as_array(x) -> tuple[np.ndarray, bool]:
    """Return ``(1-d float array, was_scalar)``."""
    arr = np.asarray(x, dtype=float)
    return np.atleast_1d(arr).astype(float), arr.ndim == 0


def restore(values: np.ndarray, scalar: bool):
    return float(values[0]) if scalar else values


__all__: Sequence[str] = [
    "Tolerance", "Grid", "DEFAULT_TOL", "default_tolerance", "integrate",
    "find_root", "bisect_first_true", "second_difference_min",
    "second_differences", "derivative",
]
