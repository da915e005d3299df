"""Comparison methods: typological cosine (l2v), lexical divergence (lex),
subword evenness (sue) and embedding similarity (emb).

Ranking polarity differs per method. Raw JSD and raw SuE angles rank lower
as better, so the matrix builders here store them *negated*; every stored
SimilarityMatrix is uniformly higher-is-better.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ValidationError
from .tensorstore import SimilarityMatrix, fnv1a_64

WORD_MARKER = "▁"  # marks word-initial subword tokens, sentencepiece-style


# ---------------------------------------------------------------------------
# vocabulary and tokenization


class Vocabulary:
    """Subword vocabulary with greedy longest-match tokenization.

    A word w is tokenized by matching the longest vocabulary entry at each
    position of WORD_MARKER + w. Single characters act as the fallback unit;
    a position not covered by any entry is an error.
    """

    def __init__(self, tokens: Sequence[str]):
        if not tokens:
            raise ValidationError("empty vocabulary")
        if len(set(tokens)) != len(tokens):
            raise ValidationError("vocabulary contains duplicate tokens")
        self.tokens = list(tokens)
        self.ids = {tok: i for i, tok in enumerate(self.tokens)}
        self.max_len = max(len(t) for t in self.tokens)
        digest_src = "\n".join(self.tokens).encode("utf-8")
        self.vocab_id = fnv1a_64(digest_src)

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, "r", encoding="utf-8") as fh:
            tokens = [line.rstrip("\n") for line in fh]
        while tokens and tokens[-1] == "":
            tokens.pop()
        return cls(tokens)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(self.tokens) + "\n")

    def tokenize_word(self, word: str) -> list[str]:
        if not word:
            raise ValidationError("cannot tokenize an empty word")
        text = WORD_MARKER + word
        pieces = []
        pos = 0
        while pos < len(text):
            match = None
            limit = min(self.max_len, len(text) - pos)
            for length in range(limit, 0, -1):
                candidate = text[pos : pos + length]
                if candidate in self.ids:
                    match = candidate
                    break
            if match is None:
                raise ValidationError(
                    f"no vocabulary entry covers {text[pos]!r} in word {word!r} "
                    "and no fallback unit is available"
                )
            pieces.append(match)
            pos += len(match)
        return pieces

    def tokenize_line(self, line: str) -> list[int]:
        ids = []
        for word in line.split():
            ids.extend(self.ids[p] for p in self.tokenize_word(word))
        return ids


# ---------------------------------------------------------------------------
# lexical divergence (lex)


@dataclass(eq=False)
class UnigramDistribution:
    """Normalized subword frequency distribution of one language's corpus."""

    language: str
    probs: dict[int, float]
    vocab_id: int

    def validate(self) -> None:
        total = math.fsum(self.probs.values())
        if abs(total - 1.0) > 1e-9:
            raise ValidationError(f"probabilities sum to {total}, not 1")
        if any(p <= 0 for p in self.probs.values()):
            raise ValidationError("only observed tokens may carry mass")


def unigram_distribution(
    corpus: Iterable,
    vocab: Vocabulary | None = None,
    *,
    language: str,
    vocab_id: int | None = None,
) -> UnigramDistribution:
    """Count subword unigrams over a corpus and normalize.

    With `vocab`, corpus lines are strings tokenized by greedy longest
    match. Without it the corpus must be pre-tokenized (iterables of token
    ids) and `vocab_id` names the tokenizer the ids came from.
    """
    counts: dict[int, int] = {}
    total = 0
    if vocab is not None:
        vocab_id = vocab.vocab_id
        for line in corpus:
            for tid in vocab.tokenize_line(line):
                counts[tid] = counts.get(tid, 0) + 1
                total += 1
    else:
        if vocab_id is None:
            raise ValidationError("pre-tokenized input requires an explicit vocab_id")
        for sentence in corpus:
            for tid in sentence:
                tid = int(tid)
                counts[tid] = counts.get(tid, 0) + 1
                total += 1
    if total == 0:
        raise ValidationError(f"empty corpus for language {language!r}")
    dist = UnigramDistribution(
        language=language,
        probs={tid: c / total for tid, c in sorted(counts.items())},
        vocab_id=vocab_id,
    )
    dist.validate()
    return dist


def jsd(p: UnigramDistribution, q: UnigramDistribution) -> float:
    """Jensen-Shannon divergence, base-2 logs: bounded in [0, 1], symmetric,
    zero iff the distributions match."""
    if p.vocab_id != q.vocab_id:
        raise ValidationError(
            f"distributions come from different vocabularies "
            f"(0x{p.vocab_id:016x} vs 0x{q.vocab_id:016x})"
        )
    terms = []
    for tid in p.probs.keys() | q.probs.keys():
        pi = p.probs.get(tid, 0.0)
        qi = q.probs.get(tid, 0.0)
        m = 0.5 * (pi + qi)
        if pi > 0:
            terms.append(0.5 * pi * math.log2(pi / m))
        if qi > 0:
            terms.append(0.5 * qi * math.log2(qi / m))
    return min(1.0, max(0.0, math.fsum(terms)))


def lex_matrix(dists: Sequence[UnigramDistribution]) -> SimilarityMatrix:
    """Pairwise negated JSD; diagonal 0 (a language has zero self-divergence)."""
    langs = tuple(sorted(d.language for d in dists))
    if len(set(langs)) != len(dists):
        raise ValidationError("duplicate language in distributions")
    by_lang = {d.language: d for d in dists}
    n = len(langs)
    values = np.zeros((n, n), dtype=np.float64)
    for i in range(n):
        for j in range(i + 1, n):
            values[i, j] = values[j, i] = -jsd(by_lang[langs[i]], by_lang[langs[j]])
    matrix = SimilarityMatrix(languages=langs, values=values, method="lex")
    matrix.validate()
    return matrix


# ---------------------------------------------------------------------------
# subword evenness (sue)


@dataclass(eq=False)
class SuEPointCloud:
    """(word length, unevenness) points, one per distinct word in a corpus."""

    points: list[tuple[int, float]]

    def validate(self) -> None:
        if not self.points:
            raise ValidationError("empty point cloud")
        if any(length < 1 for length, _ in self.points):
            raise ValidationError("word lengths must be >= 1")


def unevenness(word: str, subwords: Sequence[str]) -> float:
    """How lopsided a word's segmentation is: max piece share minus the even
    share 1/m. Zero exactly when all m pieces have equal length."""
    if not word:
        raise ValidationError("empty word")
    stripped = [s.replace(WORD_MARKER, "") for s in subwords]
    if "".join(stripped) != word:
        raise ValidationError(
            f"segmentation {subwords!r} does not concatenate to {word!r}"
        )
    m = len(subwords)
    if m == 0:
        raise ValidationError("empty segmentation")
    return max(len(s) for s in stripped) / len(word) - 1.0 / m


def sue_point_cloud(corpus: Iterable[str], vocab: Vocabulary) -> SuEPointCloud:
    """One point per distinct word type, in first-seen order."""
    seen: dict[str, None] = {}
    for line in corpus:
        for word in line.split():
            seen.setdefault(word, None)
    if not seen:
        raise ValidationError("corpus contains no words")
    points = [
        (len(word), unevenness(word, vocab.tokenize_word(word))) for word in seen
    ]
    cloud = SuEPointCloud(points=points)
    cloud.validate()
    return cloud


def lower_envelope(cloud: SuEPointCloud) -> list[tuple[int, float]]:
    """Minimum unevenness per integer word length, ascending by length."""
    best: dict[int, float] = {}
    for length, score in cloud.points:
        if length not in best or score < best[length]:
            best[length] = score
    return sorted(best.items())


def sue_score(cloud: SuEPointCloud) -> float:
    """Corpus-level evenness angle in degrees: 180 - 45 - |atan(k)|, where k
    is the least-squares slope through the lower envelope after min-max
    normalizing both axes to [0, 1]. Lowest score = most uneven = ranked
    best."""
    cloud.validate()
    envelope = lower_envelope(cloud)
    if len(envelope) < 2:
        raise ValidationError(
            "degenerate envelope: need >= 2 distinct word lengths, got "
            f"{len(envelope)}"
        )
    x = np.array([length for length, _ in envelope], dtype=np.float64)
    y = np.array([score for _, score in envelope], dtype=np.float64)
    x = (x - x.min()) / (x.max() - x.min())
    yspan = y.max() - y.min()
    y = (y - y.min()) / yspan if yspan > 0 else np.zeros_like(y)
    k = float(np.cov(x, y, bias=True)[0, 1] / np.var(x))
    return 180.0 - 45.0 - abs(math.degrees(math.atan(k)))


def sue_matrix(scores: Mapping[str, float]) -> SimilarityMatrix:
    """Per-source negated SuE angles broadcast across targets.

    SuE scores a source language on its own, so every column carries the
    same ranking; the matrix is intentionally not symmetric.
    """
    if not scores:
        raise ValidationError("no SuE scores given")
    langs = tuple(sorted(scores))
    column = -np.array([scores[code] for code in langs], dtype=np.float64)
    values = np.repeat(column[:, None], len(langs), axis=1)
    matrix = SimilarityMatrix(languages=langs, values=values, method="sue")
    matrix.validate()
    return matrix


# ---------------------------------------------------------------------------
# vector methods (l2v, emb)

VECTOR_KINDS = ("typological", "embedding")


@dataclass(eq=False)
class LanguageVector:
    """A language's representative vector (typological features or pooled
    embeddings)."""

    language: str
    vector: np.ndarray
    kind: str

    @property
    def dim(self) -> int:
        return len(self.vector)

    def validate(self) -> None:
        if self.kind not in VECTOR_KINDS:
            raise ValidationError(f"unknown vector kind {self.kind!r}")
        if self.vector.ndim != 1 or len(self.vector) == 0:
            raise ValidationError("vector must be a nonempty flat array")
        if not np.isfinite(self.vector).all():
            raise ValidationError(f"vector for {self.language!r} has non-finite entries")


def cosine(a: LanguageVector, b: LanguageVector) -> float:
    if a.kind != b.kind:
        raise ValidationError(f"vector kind mismatch: {a.kind!r} vs {b.kind!r}")
    if a.dim != b.dim:
        raise ValidationError(f"vector dim mismatch: {a.dim} vs {b.dim}")
    na = float(np.linalg.norm(a.vector))
    nb = float(np.linalg.norm(b.vector))
    if na == 0.0 or nb == 0.0:
        zero = a.language if na == 0.0 else b.language
        raise ValidationError(f"zero vector for language {zero!r}")
    return float(np.dot(a.vector, b.vector) / (na * nb))


def mean_pool_embeddings(
    per_sentence_vectors: Sequence[np.ndarray], language: str
) -> LanguageVector:
    """Arithmetic mean of per-sentence vectors (float64 accumulation)."""
    if len(per_sentence_vectors) == 0:
        raise ValidationError("no sentence vectors to pool")
    dims = {len(np.atleast_1d(v)) for v in per_sentence_vectors}
    if len(dims) != 1:
        raise ValidationError(f"ragged sentence vector dims: {sorted(dims)}")
    stacked = np.asarray(per_sentence_vectors, dtype=np.float64)
    vec = LanguageVector(language=language, vector=stacked.mean(axis=0),
                         kind="embedding")
    vec.validate()
    return vec


def cosine_matrix(
    vectors: Sequence[LanguageVector], method: str
) -> SimilarityMatrix:
    """Pairwise cosine; used for both l2v (typological) and emb vectors."""
    if method not in ("l2v", "emb"):
        raise ValidationError(f"cosine_matrix only serves l2v/emb, not {method!r}")
    expected_kind = "typological" if method == "l2v" else "embedding"
    langs = tuple(sorted(v.language for v in vectors))
    if len(set(langs)) != len(vectors):
        raise ValidationError("duplicate language in vectors")
    by_lang = {v.language: v for v in vectors}
    for v in vectors:
        v.validate()
        if v.kind != expected_kind:
            raise ValidationError(
                f"{method} needs {expected_kind} vectors, got {v.kind!r} "
                f"for {v.language!r}"
            )
    n = len(langs)
    values = np.eye(n, dtype=np.float64)
    for i in range(n):
        for j in range(i + 1, n):
            values[i, j] = values[j, i] = cosine(by_lang[langs[i]], by_lang[langs[j]])
    matrix = SimilarityMatrix(languages=langs, values=values, method=method)
    matrix.validate()
    return matrix


# ---------------------------------------------------------------------------
# language-vector files: `code v1 v2 ...` per line, '#' comments allowed


def read_language_vectors(path, kind: str) -> list[LanguageVector]:
    vectors = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split()
            if len(fields) < 2:
                raise ValidationError(
                    f"{path}:{lineno}: expected 'code v1 v2 ...'"
                )
            vec = LanguageVector(
                language=fields[0],
                vector=np.array([float(v) for v in fields[1:]], dtype=np.float64),
                kind=kind,
            )
            vec.validate()
            vectors.append(vec)
    if not vectors:
        raise ValidationError(f"no language vectors in {path}")
    dims = {v.dim for v in vectors}
    if len(dims) != 1:
        raise ValidationError(f"ragged vector dims in {path}: {sorted(dims)}")
    return vectors


def write_language_vectors(path, vectors: Sequence[LanguageVector],
                           metadata: Sequence[str] = ()) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for item in metadata:
            fh.write(f"# {item}\n")
        for v in vectors:
            coords = " ".join(f"{x:.12g}" for x in v.vector)
            fh.write(f"{v.language} {coords}\n")
