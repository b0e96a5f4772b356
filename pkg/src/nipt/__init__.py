"""Quickest change detection over sensor networks with unknown post-change
distributions: a windowed scan plus an information-projection confirmation
stage, with theoretical bounds and a Monte Carlo harness."""

from ._engine import active_engine, compiled_available, make_kernel
from .analysis import (
    BoundReport,
    StepDistribution,
    arl_lower_bound,
    bound_report,
    log_mgf,
    log_mgf_root,
    step_distribution,
    wadd_bounds,
)
from .detector import (
    ALARM_CONFIRMED,
    ALARM_SUPPRESSED,
    QUIET,
    DecisionEvent,
    Detector,
    RunRecord,
    ScheduleError,
    SumScan,
    ThresholdSchedule,
    glrt_statistic,
    min_kl_to_superlevel,
    scan_reference,
)
from .distributions import (
    Alphabet,
    JointSample,
    Pmf,
    ProductAlphabet,
    WindowCounts,
    discrete_gaussian_pmf,
    empirical_pmfs,
    kl_divergence,
    l1_distance,
    marginal,
    product_pmf,
)
from .harness import (
    ArlEstimate,
    EstimationError,
    SamplerError,
    ScenarioConfig,
    WaddEstimate,
    build_model,
    estimate_arl,
    estimate_wadd,
    generate_stream,
    load_config,
    operating_curve,
    reference_scenario,
    sample_post_change,
    save_config,
    write_curve_csv,
)
from .projection import (
    STATUS_BOUNDARY,
    STATUS_INFEASIBLE,
    STATUS_REFERENCE,
    STATUS_SOLVED,
    ProjectionError,
    ProjectionResult,
    ProjectionTable,
    brute_force_project,
    build_table,
    max_achievable_q,
    project,
)
from .statistics import (
    LocalStatistic,
    NetworkModel,
    Sensor,
    make_mean_statistic,
    make_variance_statistic,
)

__version__ = "0.1.0"

__all__ = [
    "ALARM_CONFIRMED",
    "ALARM_SUPPRESSED",
    "QUIET",
    "Alphabet",
    "ArlEstimate",
    "BoundReport",
    "DecisionEvent",
    "Detector",
    "EstimationError",
    "JointSample",
    "LocalStatistic",
    "NetworkModel",
    "Pmf",
    "ProductAlphabet",
    "ProjectionError",
    "ProjectionResult",
    "ProjectionTable",
    "RunRecord",
    "SamplerError",
    "ScenarioConfig",
    "ScheduleError",
    "Sensor",
    "StepDistribution",
    "SumScan",
    "ThresholdSchedule",
    "WaddEstimate",
    "WindowCounts",
    "STATUS_BOUNDARY",
    "STATUS_INFEASIBLE",
    "STATUS_REFERENCE",
    "STATUS_SOLVED",
    "active_engine",
    "arl_lower_bound",
    "bound_report",
    "brute_force_project",
    "build_model",
    "build_table",
    "compiled_available",
    "discrete_gaussian_pmf",
    "empirical_pmfs",
    "estimate_arl",
    "estimate_wadd",
    "generate_stream",
    "glrt_statistic",
    "kl_divergence",
    "l1_distance",
    "load_config",
    "log_mgf",
    "log_mgf_root",
    "make_kernel",
    "make_mean_statistic",
    "make_variance_statistic",
    "marginal",
    "max_achievable_q",
    "min_kl_to_superlevel",
    "operating_curve",
    "product_pmf",
    "project",
    "reference_scenario",
    "sample_post_change",
    "save_config",
    "scan_reference",
    "step_distribution",
    "wadd_bounds",
    "write_curve_csv",
]
