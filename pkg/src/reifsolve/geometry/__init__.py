from .domains import DomainError, DomainOracle, make_domain, split_rng  # noqa: F401
from .distance import RegularizedDistance, measure_bounds, regularized_distance  # noqa: F401
from .flatness import (CorkscrewParams, ReifenbergReport, corkscrew_check,  # noqa: F401
                       reifenberg_estimate)
from .measure import fit_measure_exponent, gmt_measure_ratio  # noqa: F401
