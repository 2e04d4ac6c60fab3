"""Simulation laboratory for sparse additive models in cosine-basis RKHSs.

Modules
-------
eigenbasis   eigenfunctions, kernel and norms of one component space
additive     additive functions in coefficient form
synthgen     ground-truth functions and regression datasets
lowerbound   packing constructions, separation and Fano bounds
complexity   Monte-Carlo local Rademacher and Gaussian complexities
estimators   l_q-constrained, mixed-penalty and oracle fits
ratelab      rates, regime labels, sweeps and the phase diagram
cli          command-line entry point
"""

__version__ = "0.1.0"

from .additive import AdditiveFunction, lq_mass
from .eigenbasis import DomainError, EigenSystem
from .estimators import FitConfig, FitResult, fit_lq_constrained, fit_mixed_penalty
from .synthgen import Dataset, GenConfig, generate

__all__ = [
    "AdditiveFunction",
    "Dataset",
    "DomainError",
    "EigenSystem",
    "FitConfig",
    "FitResult",
    "GenConfig",
    "fit_lq_constrained",
    "fit_mixed_penalty",
    "generate",
    "lq_mass",
]
