"""Approximate tensor network contraction on arbitrary graphs.

Contraction is driven by an ordered tree of pairwise merges with
interleaved tree-gauge bond compressions; trees come from tunable
heuristic generators whose parameters are searched by a gradient-free
optimizer against symbolic cost models.
"""

from .engine import (
    CompressionConfig,
    ScaleTracker,
    compress_tree_gauge,
    contract_approx,
    contract_exact,
    contract_value,
    exact_value,
    insert_projectors,
    sign_log,
)
from .tensor_ops import (
    DenseTensor,
    Matricization,
    ProjectorPair,
    compute_projectors,
    contract_pair,
    qr_reduced,
    svd_truncated,
)
from .tngraph import SpanningTree, TensorNetwork, centrality, local_spanning_tree

__version__ = "0.1.0"
