"""Expected exposure of European options and netting sets by optimal quantization."""
from .exposure import (
    DJS,
    PDS,
    ConfigurationError,
    ErrorMetrics,
    ExposureProfile,
    ExposureTask,
    NotApplicableError,
    ee_analytic,
    ee_mc,
    ee_numerical,
    ee_quantized_djs,
    ee_quantized_pds,
    ee_quantized_tree,
    ee_sobol,
    error_metrics,
    pfe,
)
from .market import BucketGrid, MarketParams, OptionSpec, bs_price, netting10, standard_buckets, portfolio_mtm
from .quantizer import (
    QuantizerGrid,
    TransitionMatrix,
    build_grid,
    chapman_check,
    load_grid,
    product_grid,
    save_grid,
    transition_matrix,
    tree_transitions,
)
from .sampling import NormalStream, draw_normals

__version__ = "0.1.0"
