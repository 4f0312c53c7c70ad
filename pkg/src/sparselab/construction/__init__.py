"""Exact memorization constructions on the delta-grid and their softmax
approximations: position embeddings, quantization layers, contextual-id
accumulation, and value lookup."""

from .config import (
    ConstructionConfig,
    build_config,
    positional_embedding,
    positional_embedding_units,
    u_vector,
)
from .exact import (
    ConstructionReport,
    ContextualMapResult,
    all_max_shift,
    apply_gq,
    build_gq_layers,
    column_ids,
    contextual_map,
    end_to_end,
    enumerate_h,
    phi_quantize,
    quantize_oracle,
    selective_shift,
    snap_floor,
    to_units,
    units_to_float,
    value_map_apply,
    value_map_build,
    verify_contextual_map,
)
from .gridfn import GridFunction, dp_distance, piecewise_constant_approx
from .soft import (
    ApproximationBudget,
    SoftContextualResult,
    approximation_budget,
    eval_relu_combination,
    phi_prime_relu_approx,
    phi_relu_approx,
    soft_contextual_map,
    verify_soft_contextual_map,
)

__all__ = [
    "ConstructionConfig",
    "build_config",
    "positional_embedding",
    "positional_embedding_units",
    "u_vector",
    "ConstructionReport",
    "ContextualMapResult",
    "all_max_shift",
    "apply_gq",
    "build_gq_layers",
    "column_ids",
    "contextual_map",
    "end_to_end",
    "enumerate_h",
    "phi_quantize",
    "quantize_oracle",
    "selective_shift",
    "snap_floor",
    "to_units",
    "units_to_float",
    "value_map_apply",
    "value_map_build",
    "verify_contextual_map",
    "GridFunction",
    "dp_distance",
    "piecewise_constant_approx",
    "ApproximationBudget",
    "SoftContextualResult",
    "approximation_budget",
    "eval_relu_combination",
    "phi_prime_relu_approx",
    "phi_relu_approx",
    "soft_contextual_map",
    "verify_soft_contextual_map",
]
