"""Fill-reducing sparse matrix orderings.

Classical graph heuristics (RCM, exact minimum degree, nested dissection,
spectral) next to a self-supervised model trained so that scored elimination
orders break fill paths, plus an exact symbolic-factorization evaluator and
the fill-path oracle it is verified against.

The symbolic hot loops run on a compiled extension when it is available and
on a pure-Python fallback otherwise; see ``cfporder.kernel_backend``.
"""

from ._backend import backend_name as kernel_backend
from .graph import AdjacencyGraph, Ordering, build_adjacency_graph
from .hierarchy import CoarseningHierarchy, coarsen, prolong, restrict
from .mmio import (
    ParseError,
    SparseSymmetricPattern,
    parse_matrix_market,
    parse_permutation,
    write_permutation,
)
from .model import (
    CfpModel,
    Triplet,
    bce_with_logits,
    end_max_chain_loss,
    end_max_margin,
    load_checkpoint,
    reorder_cfp,
    sample_triplets,
    save_checkpoint,
    spectral_embed,
    train_cfp,
    train_spectral,
    vertex_scores,
)
from .orderings import (
    cuthill_mckee,
    fiedler_ordering,
    fiedler_vector,
    minimum_degree,
    natural_ordering,
    nested_dissection,
    ordering_from_scores,
    reverse_cuthill_mckee,
)
from .symbolic import (
    FillReport,
    NotPositiveDefiniteError,
    bandwidth,
    cholesky_flops,
    eliminate,
    fill_in_ratio,
    fill_path_exists,
    fill_set_via_paths,
    laplacian_plus_identity,
    numeric_cholesky,
)

__version__ = "0.1.0"

__all__ = [
    "AdjacencyGraph",
    "CfpModel",
    "CoarseningHierarchy",
    "FillReport",
    "NotPositiveDefiniteError",
    "Ordering",
    "ParseError",
    "SparseSymmetricPattern",
    "Triplet",
    "bandwidth",
    "bce_with_logits",
    "build_adjacency_graph",
    "cholesky_flops",
    "coarsen",
    "cuthill_mckee",
    "eliminate",
    "end_max_chain_loss",
    "end_max_margin",
    "fiedler_ordering",
    "fiedler_vector",
    "fill_in_ratio",
    "fill_path_exists",
    "fill_set_via_paths",
    "kernel_backend",
    "laplacian_plus_identity",
    "load_checkpoint",
    "minimum_degree",
    "natural_ordering",
    "nested_dissection",
    "numeric_cholesky",
    "ordering_from_scores",
    "parse_matrix_market",
    "parse_permutation",
    "prolong",
    "reorder_cfp",
    "restrict",
    "reverse_cuthill_mckee",
    "sample_triplets",
    "save_checkpoint",
    "spectral_embed",
    "train_cfp",
    "train_spectral",
    "vertex_scores",
    "write_permutation",
]
