"""Pricing kernels: a general positive continuous state-price density and its
Black-Scholes closed form, together with the log-kernel ``H = -log(xi)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable, Mapping, Optional

import numpy as np

from . import distributions as dist
from .errors import DegenerateKernel, InvalidParameter
from .numerics import Tolerance, as_array, integrate, restore


@dataclass(frozen=True)
class BsParams:
    """Black-Scholes market: drift, volatility, rate, horizon, spot."""

    mu: float
    sigma: float
    r: float
    T: float
    S0: float = 1.0

    def __post_init__(self):
        for name in ("mu", "sigma", "r", "T", "S0"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or not math.isfinite(v):
                raise InvalidParameter(f"{name} must be a finite number", )
        if self.sigma <= 0:
            raise InvalidParameter("sigma must be > 0")
        if self.T <= 0:
            raise InvalidParameter("T must be > 0")
        if self.S0 <= 0:
            raise InvalidParameter("S0 must be > 0")

    @property
    def theta(self) -> float:
        """Market price of risk (instantaneous Sharpe ratio)."""
        return (self.mu - self.r) / self.sigma

    @property
    def beta(self) -> float:
        return self.theta / self.sigma

    @property
    def alpha(self) -> float:
        th = self.theta
        return math.exp(th / self.sigma * (self.mu - self.sigma ** 2 / 2) * self.T
                        - (self.r + th ** 2 / 2) * self.T)

    @property
    def discount(self) -> float:
        return math.exp(-self.r * self.T)

    def to_dict(self) -> dict:
        return {"model": "black-scholes", "mu": self.mu, "sigma": self.sigma,
                "r": self.r, "T": self.T, "S0": self.S0}


class NegLogLaw(dist.Distribution):
    """Law of ``-log(X)`` for a positive continuous law ``X``."""

    kind = dist.CONTINUOUS

    def __init__(self, base: dist.Distribution):
        self.base = base
        self.support = (-math.inf, math.inf)
        self.name = f"-log({base.name})"

    def _cdf(self, y):
        return self.base._sf(np.exp(-y))

    def _sf(self, y):
        return self.base._cdf(np.exp(-y))

    def _quantile(self, p):
        return -np.log(self.base._isf(p))

    def _isf(self, q):
        return -np.log(self.base._quantile(q))

    def _pdf(self, y):
        x = np.exp(-y)
        return self.base._pdf(x) * x


@dataclass(frozen=True)
class PricingKernel:
    """State-price density ``xi_T``.

    Attributes:
        law: distribution of ``xi_T`` (continuous, positive density on (0, inf)).
        h_law: distribution of ``H_T = -log(xi_T)``.
        from_stock: optional map ``S_T -> xi_T`` (Black-Scholes only).
        to_stock: optional inverse map ``xi_T -> S_T``.
        params: the Black-Scholes parameters, when applicable.
    """

    law: dist.Distribution
    h_law: dist.Distribution
    from_stock: Optional[Callable[[Any], Any]] = None
    to_stock: Optional[Callable[[Any], Any]] = None
    params: Optional[BsParams] = None

    def quantile(self, p):
        """Kernel quantile on ``[0, 1]`` with ``q(0) = 0`` and ``q(1) = +inf``."""
        return kernel_quantile(self, p)

    def mean(self, tol: Tolerance | None = None) -> float:
        """``E[xi_T]``, the price of one unit paid at the horizon."""
        if self.params is not None:
            return self.params.discount
        return integrate(lambda u: self.law._quantile(u), 0.0, 1.0, tol)

    @property
    def theta(self) -> float:
        if self.params is None:
            raise InvalidParameter("theta is only defined for a Black-Scholes kernel")
        return self.params.theta

    def to_dict(self) -> dict:
        if self.params is not None:
            return self.params.to_dict()
        return {"model": "custom-kernel", "law": getattr(self.law, "name", "custom")}


def bs_kernel(p: BsParams) -> PricingKernel:
    """Black-Scholes kernel ``xi_T = alpha (S_T/S0)^-beta``, lognormal in law."""
    th = p.theta
    if th == 0:
        raise DegenerateKernel("theta = 0 makes the kernel a.s. constant")
    m = -p.r * p.T - th ** 2 * p.T / 2
    s = abs(th) * math.sqrt(p.T)
    law = dist.LogNormal(m, s)
    h_law = dist.Normal(-m, s)
    alpha, beta, S0 = p.alpha, p.beta, p.S0

    def from_stock(S):
        arr, scalar = as_array(S)
        return restore(alpha * (arr / S0) ** (-beta), scalar)

    def to_stock(xi):
        arr, scalar = as_array(xi)
        return restore(S0 * (arr / alpha) ** (-1.0 / beta), scalar)

    return PricingKernel(law=law, h_law=h_law, from_stock=from_stock,
                         to_stock=to_stock, params=p)


def custom_kernel(law: dist.Distribution) -> PricingKernel:
    """Kernel from an arbitrary continuous law on ``(0, inf)``."""
    if law.atoms or not law.has_density:
        raise InvalidParameter("kernel law must be continuous with a density")
    lo, hi = law.support
    if lo != 0.0 or hi != math.inf:
        raise InvalidParameter(f"kernel law must be supported on (0, inf), got {law.support}")
    return PricingKernel(law=law, h_law=NegLogLaw(law))


def kernel_quantile(k: PricingKernel, p):
    """Quantile of ``xi_T`` extended to ``p = 0`` (value 0) and ``p = 1`` (value inf)."""
    arr, scalar = as_array(p)
    if np.any((arr < 0) | (arr > 1) | np.isnan(arr)):
        raise InvalidParameter("kernel quantile level must lie in [0, 1]")
    out = np.empty_like(arr)
    out[arr == 0] = 0.0
    out[arr == 1] = math.inf
    inner = (arr > 0) & (arr < 1)
    out[inner] = k.law._quantile(arr[inner])
    return restore(out, scalar)


def kernel_from_dict(data: Mapping[str, Any]) -> PricingKernel:
    """Build a kernel from ``{"model": "black-scholes", ...}`` or ``{"model": "custom-kernel", "law": ...}``."""
    model = data.get("model", "black-scholes")
    if model == "black-scholes":
        missing = [k for k in ("mu", "sigma", "r", "T") if k not in data]
        if missing:
            raise InvalidParameter(f"black-scholes market missing {', '.join(missing)}")
        vals = {k: float(data[k]) for k in ("mu", "sigma", "r", "T")}
        vals["S0"] = float(data.get("S0", 1.0))
        return bs_kernel(BsParams(**vals))
    if model == "custom-kernel":
        if "law" not in data:
            raise InvalidParameter("custom-kernel needs a 'law'")
        return custom_kernel(dist.make(data["law"]))
    raise InvalidParameter(f"unknown market model {model!r}; expected black-scholes or custom-kernel")
