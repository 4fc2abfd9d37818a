"""Bound-side quantities and design-regularity diagnostics.

Everything the oracle-inequality checks need: Sobolev-type norms and
complexity aggregates, interpolation exponents, geometric tail sums, the
penalized-block-sum bound, certified compatibility coefficients, Gram
concentration, and the right-hand sides of the prediction and adaptive-rate
bounds.
"""

from .complexity import (
    ExponentBundle,
    adaptive_rate_bound,
    empirical_complexity,
    empirical_sobolev,
    geometric_tail_sum,
    interpolation_exponents,
    penalized_block_sum_bound,
    prediction_error_bounds,
    tail_complexity_budget,
    Theorem1Bounds,
)
from .compat import (
    CertifiedValue,
    ConeSpec,
    compatibility_bruteforce,
    compatibility_search,
    gram_concentration,
    gram_concentration_bound,
    norm_equivalence_events,
    population_gram,
    prediction_factor_bruteforce,
)

__all__ = [
    "ExponentBundle",
    "Theorem1Bounds",
    "adaptive_rate_bound",
    "empirical_complexity",
    "empirical_sobolev",
    "geometric_tail_sum",
    "interpolation_exponents",
    "penalized_block_sum_bound",
    "prediction_error_bounds",
    "tail_complexity_budget",
    "CertifiedValue",
    "ConeSpec",
    "compatibility_bruteforce",
    "compatibility_search",
    "gram_concentration",
    "gram_concentration_bound",
    "norm_equivalence_events",
    "population_gram",
    "prediction_factor_bruteforce",
]
