"""WT recursions, spectral densities, and Lyapunov statistics on random metric trees."""

from .errors import (
    AddressRangeError,
    BoundaryPointError,
    BudgetExceededError,
    InsufficientSamplesError,
    MoebiusPoleError,
    NumericalDegeneracyError,
    SelectionFailureError,
    SingularMergeError,
    SingularTransformError,
    ValidationError,
    WtreeError,
)
from .graphmodel import (
    DisorderModel,
    EdgeAddress,
    ROOT_EDGE,
    TreeSpec,
    VertexBC,
    edge_length,
    resample_omega,
)
from .engine import (
    DEFAULT_ETA_LADDER,
    HalfPlanePoint,
    VISIT_BUDGET,
    WT_INFINITY,
    as_point,
    boundary_extrapolate,
    edge_step_R,
    edge_step_m,
    m_from_r,
    r_from_m,
    solve_R_minus,
    solve_edge_R,
    solve_root_R,
    solve_root_R_batch,
    sqrt_upper,
    symmetric_tilde,
    symmetric_tilde_inverse,
    vertex_merge_m,
)
from .regular import (
    BandList,
    FixedPoint,
    ac_bands,
    band_theta,
    cut_seed_disk,
    fixed_point_R,
    fixed_point_batch,
    gamma_clean,
    iterate_m_map,
    stationary_disk,
)
from .observables import (
    GREEN_POLE,
    Current,
    DensityPoint,
    band_support,
    current,
    current_profile,
    edge_psi_ratio,
    green_diag,
    green_root,
    reflection_coeff,
    spectral_density,
    tree_profile,
    vertex_current_mismatch,
    wt_bound,
)
from .ensemble import (
    FluctuationReport,
    JensenReport,
    LyapunovEstimate,
    SamplePool,
    ScanCell,
    WidthStats,
    check_jensen,
    estimate_gamma,
    estimate_gamma_tilde,
    fluctuation_report,
    pool_init,
    pool_step,
    quantile_width,
    stability_scan,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # errors
    "WtreeError",
    "ValidationError",
    "AddressRangeError",
    "BoundaryPointError",
    "BudgetExceededError",
    "InsufficientSamplesError",
    "NumericalDegeneracyError",
    "SingularMergeError",
    "SingularTransformError",
    "MoebiusPoleError",
    "SelectionFailureError",
    # graph model
    "TreeSpec",
    "DisorderModel",
    "VertexBC",
    "EdgeAddress",
    "ROOT_EDGE",
    "edge_length",
    "resample_omega",
    # engine
    "HalfPlanePoint",
    "as_point",
    "sqrt_upper",
    "m_from_r",
    "r_from_m",
    "edge_step_m",
    "edge_step_R",
    "vertex_merge_m",
    "symmetric_tilde",
    "symmetric_tilde_inverse",
    "solve_root_R",
    "solve_edge_R",
    "solve_root_R_batch",
    "solve_R_minus",
    "boundary_extrapolate",
    "WT_INFINITY",
    "VISIT_BUDGET",
    "DEFAULT_ETA_LADDER",
    # clean tree
    "BandList",
    "ac_bands",
    "band_theta",
    "FixedPoint",
    "fixed_point_R",
    "fixed_point_batch",
    "gamma_clean",
    "stationary_disk",
    "cut_seed_disk",
    "iterate_m_map",
    # observables
    "GREEN_POLE",
    "green_diag",
    "green_root",
    "reflection_coeff",
    "edge_psi_ratio",
    "wt_bound",
    "Current",
    "current",
    "current_profile",
    "DensityPoint",
    "spectral_density",
    "band_support",
    "tree_profile",
    "vertex_current_mismatch",
    # ensemble
    "SamplePool",
    "pool_init",
    "pool_step",
    "LyapunovEstimate",
    "estimate_gamma",
    "estimate_gamma_tilde",
    "WidthStats",
    "quantile_width",
    "JensenReport",
    "check_jensen",
    "FluctuationReport",
    "fluctuation_report",
    "ScanCell",
    "stability_scan",
]
