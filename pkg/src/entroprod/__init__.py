"""Entropy production in stochastic mechanical systems.

Library + CLI for simulating SDE ensembles and Fokker-Planck densities on
Euclidean space, the circle, SE(2) and SO(3), and for numerically
certifying entropy / Fisher-information / entropy-rate identities and
bounds.
"""

from .grids import (
    DomainSpec,
    GridDensity,
    MomentSummary,
    convolve,
    entropy,
    fisher_information,
    gaussian_density,
    gaussian_entropy_closed_form,
    jensen_lower_bound,
    l2_norm_sq,
    max_entropy_bound,
    moments,
    normalize,
)

__all__ = [
    "DomainSpec",
    "GridDensity",
    "MomentSummary",
    "convolve",
    "entropy",
    "fisher_information",
    "gaussian_density",
    "gaussian_entropy_closed_form",
    "jensen_lower_bound",
    "l2_norm_sq",
    "max_entropy_bound",
    "moments",
    "normalize",
]

__version__ = "0.1.0"
