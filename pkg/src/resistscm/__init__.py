"""Causal model of electrical-resistance degradation in electronic devices.

Synthetic data generation under normal and accelerated stress, Bayesian
posterior inference with a built-in sampler, interventional and
back-door-adjusted estimands, reliability and failure-time prediction,
and counterfactuals for observed devices.
"""

from .scm_core import (
    CardinalityError,
    Configuration,
    DataError,
    DeviceRecord,
    DomainError,
    FixedConstants,
    ModelError,
    ModelParams,
    Regime,
    cubic_sum,
    diff_mean,
    humidity_class,
    humidity_level,
    mean_y0,
    mean_yt,
    slope_sum,
    time_transform,
)
from .datagen import (
    FullFactorial,
    GeneratorSpec,
    Observational,
    generate_dataset,
    generate_device,
    read_dataset_csv,
    sample_config_observational,
    sample_measurement_time,
    write_dataset_csv,
)
from .posterior import (
    CompiledDataset,
    FitSpec,
    ParameterLayout,
    PosteriorTarget,
    PriorSpec,
    log_likelihood,
    log_posterior,
    log_prior,
    make_target,
    params_view,
)
from .sampler import (
    DiagnosticsReport,
    PosteriorDraws,
    SamplerConfig,
    SamplerError,
    diagnostics,
    effective_sample_size,
    hdi,
    read_draws_csv,
    run,
    split_rhat,
    summarize,
    summary_stats,
    write_draws_csv,
)
from .queries import (
    EstimandResult,
    Exact,
    FailureTimeSample,
    IntervalCensored,
    Intervention,
    QueryError,
    RightCensored,
    adjusted_outcome_density,
    censor_classify,
    delta1,
    delta_contrast,
    delta_contrast_posterior,
    predictive_failure_time,
    reliability_known_y0,
    reliability_unknown_y0,
)
from .counterfactual import (
    CounterfactualQuery,
    CounterfactualResult,
    cf_failure_time,
    cf_outcome_at_time,
    cf_outcome_humidity,
    cf_posterior,
    recover_residual,
)
from .defaults import default_constants, ns_constants, reference_truth

__version__ = "0.1.0"
