"""Diagonal empirical Fisher information from per-example gradients.

The estimate for parameter i over a corpus of size n is the mean of the
squared per-example log-likelihood gradients:

    f[i] = (1/n) * sum_j g_j[i]^2

Squaring happens per example, before any averaging; feeding batch-mean
gradients here computes a different (wrong) quantity. Accumulation runs in
float64 regardless of the 32-bit storage precision of dumps.
"""
from __future__ import annotations

from typing import BinaryIO, Iterable, Sequence

import numpy as np

from .errors import LayoutMismatchError, ValidationError
from . import tensorstore
from .tensorstore import FisherDump, LayoutManifest


class FisherAccumulator:
    """Running sum of squared per-example gradients plus the example count.

    Single-writer: shard a corpus across independent accumulators and
    `merge` them instead of sharing one.
    """

    def __init__(
        self,
        manifest: LayoutManifest,
        language: str,
        objective: str,
        corpus_tag: str,
        seed: int,
        flags: int = 0,
    ):
        self.manifest = manifest
        self.language = language
        self.objective = objective
        self.corpus_tag = corpus_tag
        self.seed = seed
        self.flags = flags
        self.sum_sq = np.zeros(manifest.total_params, dtype=np.float64)
        self.n = 0

    def absorb(self, grad: np.ndarray) -> "FisherAccumulator":
        """Add one example's gradient; returns self for chaining."""
        grad = np.asarray(grad, dtype=np.float64)
        if grad.ndim != 1 or len(grad) != self.manifest.total_params:
            raise ValidationError(
                f"gradient length {grad.shape} != total_params "
                f"{self.manifest.total_params}"
            )
        finite = np.isfinite(grad)
        if not finite.all():
            idx = int(np.argmax(~finite))
            raise ValidationError(
                f"non-finite gradient entry {grad[idx]!r} at index {idx}"
            )
        with np.errstate(over="ignore"):
            # overflow parks an inf in the running sum; finalize reports it
            self.sum_sq += np.square(grad)
        self.n += 1
        return self

    def finalize(self) -> FisherDump:
        """Average, downcast to storage precision and stamp the metadata."""
        if self.n == 0:
            raise ValidationError("no examples absorbed")
        with np.errstate(over="ignore"):
            # downcast overflow produces inf, rejected just below
            values = (self.sum_sq / self.n).astype(np.float32)
        if not np.isfinite(values).all():
            idx = int(np.argmax(~np.isfinite(values)))
            raise ValidationError(
                f"finalized value at index {idx} is not finite in storage precision"
            )
        dump = FisherDump(
            manifest=self.manifest,
            values=values,
            example_count=self.n,
            objective=self.objective,
            corpus_tag=self.corpus_tag,
            language=self.language,
            seed=self.seed,
            flags=self.flags,
        )
        dump.validate()
        return dump

    def _metadata(self):
        return (self.language, self.objective, self.corpus_tag, self.seed, self.flags)


def absorb(acc: FisherAccumulator, grad: np.ndarray) -> FisherAccumulator:
    return acc.absorb(grad)


def finalize(acc: FisherAccumulator) -> FisherDump:
    return acc.finalize()


def merge(a: FisherAccumulator, b: FisherAccumulator) -> FisherAccumulator:
    """Combine two shards: elementwise sum_sq addition, counts added."""
    if a.manifest.layout_hash != b.manifest.layout_hash:
        raise LayoutMismatchError(
            f"cannot merge accumulators with layout hashes "
            f"0x{a.manifest.layout_hash:016x} and 0x{b.manifest.layout_hash:016x}"
        )
    if a._metadata() != b._metadata():
        raise ValidationError(
            f"cannot merge accumulators with different metadata: "
            f"{a._metadata()} vs {b._metadata()}"
        )
    out = FisherAccumulator(a.manifest, a.language, a.objective, a.corpus_tag,
                            a.seed, a.flags)
    out.sum_sq = a.sum_sq + b.sum_sq
    out.n = a.n + b.n
    return out


def merge_all(shards: Sequence[FisherAccumulator]) -> FisherAccumulator:
    """Pairwise tree reduction in input order.

    The reduction order is fixed (adjacent pairs, repeated) so parallel shard
    runs reproduce the same float64 sums; reordering the *inputs* is only
    guaranteed equivalent to ~1e-12 relative.
    """
    if not shards:
        raise ValidationError("merge_all needs at least one shard")
    level = list(shards)
    while len(level) > 1:
        nxt = [merge(level[i], level[i + 1]) for i in range(0, len(level) - 1, 2)]
        if len(level) % 2:
            nxt.append(level[-1])
        level = nxt
    return level[0]


def accumulate_stream(source: BinaryIO) -> FisherAccumulator:
    """Absorb every record of an FGRS per-example gradient stream."""
    header, records = tensorstore.read_gradient_stream(source)
    acc = FisherAccumulator(header.manifest, header.language, header.objective,
                            header.corpus_tag, header.seed, header.flags)
    for grad in records:
        acc.absorb(grad)
    return acc


def accumulate_gradients(
    manifest: LayoutManifest,
    grads: Iterable[np.ndarray],
    *,
    language: str,
    objective: str,
    corpus_tag: str,
    seed: int,
    flags: int = 0,
) -> FisherAccumulator:
    acc = FisherAccumulator(manifest, language, objective, corpus_tag, seed, flags)
    for grad in grads:
        acc.absorb(grad)
    return acc
