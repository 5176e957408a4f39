"""Sampling-based solvers for structured matrices accessed through matvecs.

Regression (l2 and lp), low-rank approximation, autoregression, and kernel
autoregression, all running on operators that are only touched through
counted matrix-vector products. Dense reference implementations live in
``levsamp.oracle``; the command line lives in ``levsamp.cli``.
"""

from .config import DEFAULTS, Params, load_config, parse_config_text
from .kernel_ar import (
    KERNELS,
    BandTable,
    DotProductKernel,
    KernelARProblem,
    KernelSolution,
    LiftedSeriesTarget,
    Poly2RowSample,
    Poly2Sampler,
    Poly2Solution,
    Poly2VectorTarget,
    band_pair_count,
    banded_inner_products,
    build_poly2_sampler,
    general_kernel_solve,
    get_kernel,
    gram_via_bands,
    poly2_sample_size,
    sample_poly2_row,
    solve_poly2,
)
from .leverage import (
    LeverageEstimates,
    SamplingMatrix,
    base_case_rows,
    generalized_leverage_scores,
    identity_sampling,
    repeated_halving,
    sample_rows,
)
from .lowrank import LowRankResult, lowrank_approx, lowrank_sample_size, ridge_leverage_scores
from .lpreg import (
    FAILURE_FLAGS,
    LewisState,
    LpSolution,
    approx_lewis_form,
    lewis_sample,
    lewis_weights_fixed_point,
    lp_sample_size,
    solve_lp,
)
from .lsq import (
    L2Solution,
    l2_sample_size,
    sketch_solve_l2,
    solve_autoregression,
    solve_dynamical,
    solve_l2,
)
from .operators import (
    AugmentedOperator,
    ColumnSubsetOperator,
    ComposedOperator,
    DenseOperator,
    DiagonalOperator,
    DifferenceOperator,
    LinearOperator,
    RowSubsetOperator,
    ToeplitzOperator,
    ar_design_operator,
    circulant_multiply,
    compose,
    dense_rows,
    dynamical_design_operator,
    log_materializations,
)
from .sketch import CountSketch, GaussianSketch, TensorSketch, median_norm_estimate

__version__ = "0.1.0"

__all__ = [
    "AugmentedOperator",
    "BandTable",
    "ColumnSubsetOperator",
    "ComposedOperator",
    "CountSketch",
    "DEFAULTS",
    "DenseOperator",
    "DiagonalOperator",
    "DifferenceOperator",
    "DotProductKernel",
    "FAILURE_FLAGS",
    "GaussianSketch",
    "KERNELS",
    "KernelARProblem",
    "KernelSolution",
    "L2Solution",
    "LeverageEstimates",
    "LewisState",
    "LiftedSeriesTarget",
    "LinearOperator",
    "LowRankResult",
    "LpSolution",
    "Params",
    "Poly2RowSample",
    "Poly2Sampler",
    "Poly2Solution",
    "Poly2VectorTarget",
    "RowSubsetOperator",
    "SamplingMatrix",
    "TensorSketch",
    "ToeplitzOperator",
    "approx_lewis_form",
    "ar_design_operator",
    "band_pair_count",
    "banded_inner_products",
    "base_case_rows",
    "build_poly2_sampler",
    "circulant_multiply",
    "compose",
    "dense_rows",
    "dynamical_design_operator",
    "general_kernel_solve",
    "generalized_leverage_scores",
    "get_kernel",
    "gram_via_bands",
    "identity_sampling",
    "l2_sample_size",
    "lewis_sample",
    "lewis_weights_fixed_point",
    "load_config",
    "log_materializations",
    "lowrank_approx",
    "lowrank_sample_size",
    "lp_sample_size",
    "median_norm_estimate",
    "parse_config_text",
    "poly2_sample_size",
    "repeated_halving",
    "ridge_leverage_scores",
    "sample_poly2_row",
    "sample_rows",
    "sketch_solve_l2",
    "solve_autoregression",
    "solve_dynamical",
    "solve_l2",
    "solve_lp",
    "solve_poly2",
]
