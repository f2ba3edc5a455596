"""Frame-level congestion control for real-time video.

The compiled extension provides the estimator, detector and burst-length
primitives plus the deterministic simulator.
"""

from ._camel import (
    BurstConfig,
    BurstLengthState,
    CamelError,
    IntervalLossStats,
    analytic_rtt,
    bdp,
    congestion_threshold,
    detect,
    fairness_index,
    frame_bandwidth,
    frame_delay,
    ols_slope,
    parse_trace,
    percentile,
    run_scenario,
    run_scenario_text,
    signal_experiment,
    update_gamma,
    update_m,
)

__all__ = [
    "BurstConfig",
    "BurstLengthState",
    "CamelError",
    "IntervalLossStats",
    "analytic_rtt",
    "bdp",
    "congestion_threshold",
    "detect",
    "fairness_index",
    "frame_bandwidth",
    "frame_delay",
    "ols_slope",
    "parse_trace",
    "percentile",
    "run_scenario",
    "run_scenario_text",
    "signal_experiment",
    "update_gamma",
    "update_m",
]
