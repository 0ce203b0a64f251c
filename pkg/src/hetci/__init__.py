"""Confidence intervals for quantiles of independent, grouped heterogeneous data.

The pooled empirical quantile of independent but non-identically distributed
observations targets the quantile of their average distribution.  When the
data carry a group structure (identical distributions within groups), the
variance of the empirical CDF at that quantile can be estimated from
within-group counts; it is never larger than the i.i.d. worst case, so the
resulting confidence intervals are tighter while remaining asymptotically
correct.  This package provides the estimator, the intervals, the mixture
models of the bundled simulation study, and a seeded Monte Carlo engine
that reproduces the study's coverage and variance-reduction results.
"""

__version__ = "0.1.0"

from .errors import (
    AssumptionViolationError,
    BracketingError,
    DataFormatError,
    DesignError,
    DomainError,
    HetciError,
    NumericalError,
)
from .numerics import (
    RandomStream,
    derive_stream,
    find_root_increasing,
    normal_cdf,
    normal_quantile,
)
from .quantile import (
    GroupedSample,
    QuantileCI,
    VarianceEstimate,
    confidence_interval,
    empirical_cdf,
    empirical_quantile,
    half_width,
    iid_confidence_interval,
    iid_variance,
    variance_estimator,
)
from .models import (
    ComponentDistribution,
    Exponential,
    GroupDesign,
    MixtureModel,
    NormalUnitVar,
    UniformInterval,
    make_design,
    make_dgm,
    mixture_cdf,
    mixture_quantile,
    population_variance,
    sample_heterogeneous,
    sample_iid_average,
)
from .harness import (
    CoverageReport,
    ErrorSummary,
    ReplicationRecord,
    SimulationConfig,
    binomial_product_variance_bruteforce,
    binomial_product_variance_closed_form,
    coverage_table,
    error_samples,
    error_summary,
    oracle_variance_estimator,
    rate_check,
    run_replication,
)

__all__ = [
    "__version__",
    # errors
    "HetciError", "DomainError", "AssumptionViolationError", "DesignError",
    "DataFormatError", "NumericalError", "BracketingError",
    # numerics
    "RandomStream", "derive_stream", "normal_cdf", "normal_quantile",
    "find_root_increasing",
    # quantile inference
    "GroupedSample", "VarianceEstimate", "QuantileCI", "empirical_cdf",
    "empirical_quantile", "variance_estimator", "iid_variance", "half_width",
    "confidence_interval", "iid_confidence_interval",
    # models
    "NormalUnitVar", "Exponential", "UniformInterval", "ComponentDistribution",
    "GroupDesign", "MixtureModel", "make_design", "make_dgm", "mixture_cdf",
    "mixture_quantile", "population_variance", "sample_heterogeneous",
    "sample_iid_average",
    # harness
    "SimulationConfig", "ReplicationRecord", "CoverageReport", "ErrorSummary",
    "run_replication", "oracle_variance_estimator",
    "binomial_product_variance_closed_form",
    "binomial_product_variance_bruteforce", "coverage_table", "error_samples",
    "error_summary", "rate_check",
]
