"""2d change point estimation, inference, and grid segmentation."""

from .grid import (
    ChangePoint,
    DataGrid,
    QuadrantEstimate,
    QuadrantPartition,
    bin_scatter_to_grid,
    center_grid,
    quadrant_means,
    quadrant_partition,
    squared_loss,
)
from .estimator import (
    EstimationTrace,
    ThresholdConfig,
    argmin_height,
    argmin_width,
    bic_select_lambda,
    boundary_gamma,
    coarse_init,
    detect_change_point,
    estimate_change_point,
    regularized_means,
    soft_threshold,
)
from .inference import (
    AsymptoticVariances,
    BoundaryChangePointError,
    ConfidenceIntervals,
    JumpProfile,
    asymptotic_variances,
    brownian_argmax_quantile,
    confidence_intervals,
    jump_profile,
    random_walk_argmax_quantile,
    refit_means,
    sample_covariance,
)
from .segtree import (
    SegTree,
    build_segmentation_tree,
    child_domains,
    node_digits,
    node_rank,
    reconstruct_means,
    tree_report,
)
from .sim import (
    ReplicationMetrics,
    SimDesign,
    generate_grid,
    run_replications,
    toeplitz_covariance,
)

__version__ = "0.1.0"

__all__ = [
    "AsymptoticVariances",
    "BoundaryChangePointError",
    "ChangePoint",
    "ConfidenceIntervals",
    "DataGrid",
    "EstimationTrace",
    "JumpProfile",
    "QuadrantEstimate",
    "QuadrantPartition",
    "ReplicationMetrics",
    "SegTree",
    "SimDesign",
    "ThresholdConfig",
    "argmin_height",
    "argmin_width",
    "asymptotic_variances",
    "bic_select_lambda",
    "bin_scatter_to_grid",
    "boundary_gamma",
    "brownian_argmax_quantile",
    "build_segmentation_tree",
    "center_grid",
    "child_domains",
    "coarse_init",
    "confidence_intervals",
    "detect_change_point",
    "estimate_change_point",
    "generate_grid",
    "jump_profile",
    "node_digits",
    "node_rank",
    "quadrant_means",
    "quadrant_partition",
    "random_walk_argmax_quantile",
    "reconstruct_means",
    "refit_means",
    "regularized_means",
    "run_replications",
    "sample_covariance",
    "soft_threshold",
    "squared_loss",
    "toeplitz_covariance",
    "tree_report",
]
