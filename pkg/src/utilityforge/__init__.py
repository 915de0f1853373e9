"""Utility inference from target wealth distributions under a pricing kernel.

Modules:
    numerics: quadrature, root finding, finite differences.
    distributions: continuous, discrete and mixed scalar laws.
    market: pricing kernels (general and Black-Scholes).
    efficiency: cost-efficient payoffs, pricing and audits.
    utility: inferred and parametric utilities, optimal payoffs.
    risk_aversion: Arrow-Pratt profiles and DARA tests.
    discrete: finite-state rationalization.
"""

__version__ = "0.1.0"

from .distributions import Distribution, NamedLaw, hazard, ks_distance, make, mix
from .efficiency import Payoff, audit, cost, distributional_price, efficient_payoff
from .market import BsParams, PricingKernel, bs_kernel, custom_kernel, kernel_quantile
from .numerics import Grid, Tolerance, find_root, integrate, second_difference_min
from .risk_aversion import ara, dara_bs, dara_general, dara_hazard_sufficient, rra
from .utility import (
    GeneralizedUtility,
    ParametricFamily,
    UtilityCurve,
    affine_match,
    infer_generalized_utility,
    infer_utility,
    optimal_payoff,
)

__all__ = [
    "BsParams", "Distribution", "GeneralizedUtility", "Grid", "NamedLaw", "ParametricFamily",
    "Payoff", "PricingKernel", "Tolerance", "UtilityCurve", "affine_match", "ara", "audit",
    "bs_kernel", "cost", "custom_kernel", "dara_bs", "dara_general", "dara_hazard_sufficient",
    "distributional_price", "efficient_payoff", "find_root", "hazard", "infer_generalized_utility",
    "infer_utility", "integrate", "kernel_quantile", "ks_distance", "make", "mix", "optimal_payoff",
    "rra", "second_difference_min",
]
