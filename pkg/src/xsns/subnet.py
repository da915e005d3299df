"""Top-p%% sub-network masks and Jaccard overlap between them.

A language's sub-network is the set of parameters whose importance scores
land in the top p percent of its Fisher dump; two languages are scored by
the intersection-over-union of those sets. A degenerate all-zero dump still
produces a mask (the k lowest-index parameters) but carries a warning flag.
"""
from __future__ import annotations

import warnings
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import LayoutMismatchError, ValidationError
from .tensorstore import (
    FLAG_DEGENERATE_SELECTION,
    FisherDump,
    MaskFile,
    SimilarityMatrix,
    expected_k,
    pack_bits,
    popcount,
)

DEFAULT_P = 0.15


@dataclass(eq=False)
class SubNetwork:
    """A language's binary parameter-membership vector."""

    mask: MaskFile
    language: str

    @property
    def bits(self) -> np.ndarray:
        return self.mask.bits

    def __eq__(self, other) -> bool:
        if not isinstance(other, SubNetwork):
            return NotImplemented
        return self.language == other.language and self.mask == other.mask


def top_k_indices(values: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest values; threshold ties resolved by ascending
    index. Equivalent to the first k entries of a stable sort by
    (value descending, index ascending)."""
    n = len(values)
    if k >= n:
        return np.arange(n)
    threshold = np.partition(values, n - k)[n - k]
    strictly_above = np.flatnonzero(values > threshold)
    need = k - len(strictly_above)
    at_threshold = np.flatnonzero(values == threshold)[:need]
    return np.sort(np.concatenate([strictly_above, at_threshold]))


def build_mask(dump: FisherDump, p: float = DEFAULT_P) -> SubNetwork:
    """Binarize a dump: exactly ceil(p * total_params) bits set.

    A bit is set iff its value is strictly above the selection threshold,
    plus enough threshold-equal entries (lowest parameter index first) to
    reach the exact count.
    """
    if not (0.0 < p <= 1.0):
        raise ValidationError(f"p={p} outside (0, 1]")
    dump.validate()
    n = dump.manifest.total_params
    k = expected_k(p, n)
    selected = top_k_indices(dump.values, k)
    bits = np.zeros(n, dtype=bool)
    bits[selected] = True

    flags = dump.flags
    if not dump.values.any():
        flags |= FLAG_DEGENERATE_SELECTION
        warnings.warn(
            f"dump for {dump.language!r} (seed {dump.seed}) is all-zero; "
            "mask falls back to the lowest-index parameters",
            stacklevel=2,
        )
    mask = MaskFile(
        manifest_hash=dump.manifest.layout_hash,
        total_params=n,
        p=float(p),
        k_selected=k,
        bits=pack_bits(bits),
        language=dump.language,
        seed=dump.seed,
        objective=dump.objective,
        corpus_tag=dump.corpus_tag,
        flags=flags,
    )
    mask.validate()
    return SubNetwork(mask=mask, language=dump.language)


def jaccard(a: SubNetwork, b: SubNetwork) -> float:
    """popcount(a AND b) / popcount(a OR b) over the packed words."""
    ma, mb = a.mask, b.mask
    if ma.manifest_hash != mb.manifest_hash or ma.total_params != mb.total_params:
        raise LayoutMismatchError(
            f"masks for {a.language!r} and {b.language!r} have different layouts"
        )
    if ma.p != mb.p:
        raise LayoutMismatchError(
            f"masks built with different p: {ma.p} vs {mb.p}"
        )
    intersection = popcount(ma.bits & mb.bits)
    union = popcount(ma.bits | mb.bits)
    if union == 0:
        return 1.0
    return intersection / union


def similarity_matrix(subnets: Iterable[SubNetwork]) -> SimilarityMatrix:
    """Seed-averaged pairwise Jaccard matrix.

    Input covers every (language, seed) combination; every language must
    bring the same seed set, every mask the same layout and p. Averaging
    happens on the per-seed similarity values, not on the masks.
    """
    by_lang: dict[str, dict[int, SubNetwork]] = defaultdict(dict)
    for net in subnets:
        seed = net.mask.seed
        if seed in by_lang[net.language]:
            raise ValidationError(
                f"duplicate sub-network for ({net.language!r}, seed {seed})"
            )
        by_lang[net.language][seed] = net
    if not by_lang:
        raise ValidationError("no sub-networks given")

    languages = tuple(sorted(by_lang))
    seed_sets = {lang: tuple(sorted(nets)) for lang, nets in by_lang.items()}
    seeds = seed_sets[languages[0]]
    ragged = {lang: s for lang, s in seed_sets.items() if s != seeds}
    if ragged:
        raise ValidationError(
            f"ragged seed sets: {languages[0]!r} has {seeds}, "
            + ", ".join(f"{lang!r} has {s}" for lang, s in sorted(ragged.items()))
        )

    reference = by_lang[languages[0]][seeds[0]].mask
    for lang in languages:
        for seed in seeds:
            m = by_lang[lang][seed].mask
            if m.manifest_hash != reference.manifest_hash:
                raise LayoutMismatchError(
                    f"mask ({lang!r}, seed {seed}) has a different layout hash"
                )
            if m.p != reference.p:
                raise ValidationError(
                    f"mixed p: ({lang!r}, seed {seed}) has p={m.p}, "
                    f"expected {reference.p}"
                )

    n = len(languages)
    values = np.zeros((n, n), dtype=np.float64)
    for i in range(n):
        values[i, i] = 1.0
        for j in range(i + 1, n):
            sims = [
                jaccard(by_lang[languages[i]][seed], by_lang[languages[j]][seed])
                for seed in seeds
            ]
            values[i, j] = values[j, i] = float(np.mean(sims))

    matrix = SimilarityMatrix(
        languages=languages,
        values=values,
        method="xsns",
        seeds_averaged=len(seeds),
    )
    matrix.validate()
    return matrix
