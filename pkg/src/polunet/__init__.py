"""Power-linear-unit activations, response-region analysis, and a CPU training harness."""

from .activations import (
    ActivationSpec,
    negative_fixed_point,
    parse_activation_spec,
    polu_derivative,
    polu_forward,
    sample_curve,
    saturation_value,
)
from .netcore import NetworkSpec, forward, backward, grad_check, init_parameters, sgd_step
from .regions import (
    RegionReport,
    TroughFunction,
    TroughSum,
    build_equal_minima_sum,
    count_identified_intervals,
    count_monotonic_regions,
    deep_region_bound,
    identified_regions_per_layer,
    mirror_sum,
    network_line_regions,
    single_layer_region_bound,
    solve_trough,
)
from .harness import ExperimentConfig, aggregate, parse_stack_notation, preset, run

__version__ = "0.1.0"

__all__ = [
    "ActivationSpec",
    "ExperimentConfig",
    "NetworkSpec",
    "RegionReport",
    "TroughFunction",
    "TroughSum",
    "aggregate",
    "backward",
    "build_equal_minima_sum",
    "count_identified_intervals",
    "count_monotonic_regions",
    "deep_region_bound",
    "forward",
    "grad_check",
    "identified_regions_per_layer",
    "init_parameters",
    "mirror_sum",
    "negative_fixed_point",
    "network_line_regions",
    "parse_activation_spec",
    "parse_stack_notation",
    "polu_derivative",
    "polu_forward",
    "preset",
    "run",
    "sample_curve",
    "saturation_value",
    "sgd_step",
    "single_layer_region_bound",
    "solve_trough",
]
