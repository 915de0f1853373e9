"""Closed-form laws, utilities and payoffs in the Black-Scholes market.

These are analytic references used by the tests and by the CLI to report
discrepancies; the engines never rely on them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import distributions as dist
from .errors import InvalidParameter
from .market import BsParams


def crra_gamma_for_lognormal(p: BsParams, Sigma: float) -> float:
    """Relative risk aversion that makes ``LN(M, Sigma^2)`` optimal."""
    return p.theta * math.sqrt(p.T) / Sigma


def cara_gamma_for_normal(p: BsParams, Sigma: float) -> float:
    """Absolute risk aversion that makes ``N(M, Sigma^2)`` optimal."""
    return p.theta * math.sqrt(p.T) / Sigma


def lognormal_payoff_constant(p: BsParams, M: float, Sigma: float) -> float:
    """``K`` in the efficient payoff ``K * xi^(-Sigma/(theta sqrt T))`` for a lognormal target."""
    s = p.theta * math.sqrt(p.T)
    return math.exp(M - Sigma / s * (p.r * p.T + p.theta ** 2 * p.T / 2))


def normal_price(p: BsParams, M: float, Sigma: float) -> float:
    """Cheapest price of a ``N(M, Sigma^2)`` payoff: ``(M - Sigma theta sqrt T) e^{-rT}``."""
    return (M - Sigma * p.theta * math.sqrt(p.T)) * p.discount


def cara_optimal_law(p: BsParams, gamma: float, X0: float) -> dist.Distribution:
    """Law of the CARA(gamma) optimum with budget ``X0``."""
    th = p.theta
    mean = X0 * math.exp(p.r * p.T) + th / (gamma * p.sigma) * (p.mu - p.r) * p.T
    return dist.Normal(mean, th / gamma * math.sqrt(p.T))


def cara_optimal_payoff_of_stock(p: BsParams, gamma: float, X0: float, S):
    th = p.theta
    return (X0 * math.exp(p.r * p.T) - th / (gamma * p.sigma) * (p.r - p.sigma ** 2 / 2) * p.T
            + th / (gamma * p.sigma) * np.log(np.asarray(S) / p.S0))


@dataclass(frozen=True)
class HaraSolution:
    """Optimum of ``U(x) = (1-g)/g (a x/(1-g) + b)^g`` with budget ``X0``."""

    C: float
    shift: float
    exponent: float
    law: dist.Distribution

    def payoff_of_stock(self, p: BsParams, S):
        return self.C * np.power(np.asarray(S) / p.S0, self.exponent) - self.shift


class ShiftedLogNormal(dist.ScipyLaw):
    """``C * exp(N(m, s^2)) - shift``."""

    def __init__(self, C: float, m: float, s: float, shift: float):
        super().__init__(stats.lognorm(s=s, scale=C * math.exp(m), loc=-shift),
                         "shifted-lognormal", {"C": C, "m": m, "s": s, "shift": shift})
        self.support = (-shift, math.inf)


def hara_solution(p: BsParams, a: float, b: float, gamma: float, X0: float) -> HaraSolution:
    """HARA optimum: ``C (S_T/S0)^(theta/(sigma(1-g))) - b(1-g)/a``.

    ``C`` follows the budget identity. The law is a shifted lognormal whose
    log-scale is ``|theta/(1-g)| sqrt T``.
    """
    if gamma >= 1:
        raise InvalidParameter("closed-form HARA law needs gamma < 1")
    th, s, T = p.theta, p.sigma, p.T
    kappa = th / (s * (1 - gamma))
    shift = b * (1 - gamma) / a
    C = (X0 * math.exp(p.r * T) + shift) / math.exp(
        kappa * (p.r - s ** 2 / 2) * T + (th / (1 - gamma)) ** 2 * T / 2)
    m = kappa * (p.mu - s ** 2 / 2) * T
    sd = abs(kappa) * s * math.sqrt(T)
    return HaraSolution(C=C, shift=shift, exponent=kappa, law=ShiftedLogNormal(C, m, sd, shift))


def hara_ara(a: float, b: float, gamma: float, x):
    return a / (a * np.asarray(x) / (1 - gamma) + b)


def guarantee_scale(p: BsParams, M: float) -> float:
    """Scale ``a`` of the capital-guarantee utility: ``exp(M theta/sigma - rT - theta^2 T/2)``."""
    th = p.theta
    return math.exp(M * th / p.sigma - p.r * p.T - th ** 2 * p.T / 2)


@dataclass(frozen=True)
class YaariFixture:
    c: float
    B: float
    B_printed: float
    F0: float
    law: dist.Distribution


def yaari_fixture(p: BsParams, c: float, X0: float) -> YaariFixture:
    """Binary optimum ``B 1{xi <= c}`` for a given threshold ``c``.

    ``B`` solves the budget identity ``B e^{-rT} Phi(d) = X0`` with
    ``d = (ln c + rT - theta^2 T/2)/(theta sqrt T)``; ``B_printed`` is the
    alternative closed form ``X0 e^{rT} Phi(d)`` kept for comparison.
    """
    th, T = abs(p.theta), p.T
    d = (math.log(c) + p.r * T - th ** 2 * T / 2) / (th * math.sqrt(T))
    Phi = float(stats.norm.cdf(d))
    B = X0 * math.exp(p.r * T) / Phi
    F0 = float(stats.norm.cdf((-p.r * T - th ** 2 * T / 2 - math.log(c)) / (th * math.sqrt(T))))
    return YaariFixture(c=c, B=B, B_printed=X0 * math.exp(p.r * T) * Phi, F0=F0,
                        law=dist.two_point(0.0, B, F0))


def exponential_ara(p: BsParams, lam: float, x):
    x = np.asarray(x, dtype=float)
    th, T = p.theta, p.T
    z = stats.norm.ppf(np.exp(-lam * x))
    return th * lam * math.sqrt(2 * math.pi * T) * np.exp(-lam * x + 0.5 * z ** 2)


def pareto_ara(p: BsParams, m: float, alpha: float, x):
    x = np.asarray(x, dtype=float)
    th, T = p.theta, p.T
    z = stats.norm.ppf((m / x) ** alpha)
    return th * alpha * m ** alpha * math.sqrt(2 * math.pi * T) / x ** (alpha + 1) * np.exp(0.5 * z ** 2)
