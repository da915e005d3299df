"""Gradient-statistics and embedding extraction from transformer checkpoints.

Produces the binary gradient dumps and plain-text language-vector files
consumed by the sub-network overlap toolkit; the two packages share file
formats, not code.
"""

from .checkpoint import build_checkpoint, synth_corpus
from .extract import (
    FisherResult,
    derived_model_id,
    extract_embeddings,
    extract_fisher,
    load_model,
    partition_parameters,
    run_fisher_job,
)
from .formats import write_fisher_dump, write_language_vectors
from .jobs import AdapterError, ExtractionJob

__all__ = [
    "AdapterError",
    "ExtractionJob",
    "FisherResult",
    "build_checkpoint",
    "derived_model_id",
    "extract_embeddings",
    "extract_fisher",
    "load_model",
    "partition_parameters",
    "run_fisher_job",
    "synth_corpus",
    "write_fisher_dump",
    "write_language_vectors",
]
