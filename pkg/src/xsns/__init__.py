"""Cross-lingual sub-network similarity toolkit.

Predicts which source language will transfer best to a target by comparing
language-specific sub-networks: per-parameter importance is estimated from
squared per-example gradients, the top share of parameters per language
forms a binary mask, and language pairs are scored by mask overlap.
Includes comparison baselines, a ranking evaluation harness and regression
from similarity to observed transfer scores.
"""
from .errors import LayoutMismatchError, ValidationError, XsnsError
from .fisher import FisherAccumulator, accumulate_gradients, merge, merge_all
from .subnet import DEFAULT_P, SubNetwork, build_mask, jaccard, similarity_matrix
from .tensorstore import (
    FisherDump,
    LayoutManifest,
    MaskFile,
    SimilarityMatrix,
    load_dump,
    load_mask,
    load_matrix,
    save_dump,
    save_mask,
    save_matrix,
)

__version__ = "1.0.0"

__all__ = [
    "DEFAULT_P",
    "FisherAccumulator",
    "FisherDump",
    "LayoutManifest",
    "LayoutMismatchError",
    "MaskFile",
    "SimilarityMatrix",
    "SubNetwork",
    "ValidationError",
    "XsnsError",
    "accumulate_gradients",
    "build_mask",
    "jaccard",
    "load_dump",
    "load_mask",
    "load_matrix",
    "merge",
    "merge_all",
    "save_dump",
    "save_mask",
    "save_matrix",
    "similarity_matrix",
    "__version__",
]
