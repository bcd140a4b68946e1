"""Random-channel opinion dynamics: simulation and convergence certificates."""

from .diagnostics import (
    Gamma_exact,
    Gamma_mc,
    Gamma_of_diameter,
    bound_curve,
    edge_distance_to_full,
    gamma,
    gamma_pivot_lower_bound,
    pair_bound_curve,
    pivot_lemma_scan,
    verify_ensemble,
    verify_trajectory,
)
from .dynamics import WeightMatrix, consensus_projection, diameter, edge_gap, step, transition_matrix
from .engine import RunConfig, TrajectoryRecord, run, run_ensemble, run_pair_chain, run_sparse
from .graph import (
    EdgeConfig,
    SparseEdgeConfig,
    in_neighborhood,
    iterated_out_neighborhood,
    open_edges,
    out_neighborhood,
    pivots,
    support_components,
)
from .noise import (
    ConfidenceFunction,
    EdgeKernel,
    RngStream,
    config_probability,
    diameter_kernel_probability,
    edge_open_probability,
    sample_edge_config,
)

__version__ = "0.1.0"
