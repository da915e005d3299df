"""Deterministic toy masked-token model with manual backprop, plus a
synthetic-language generator. Together they exercise the full pipeline
(gradients -> importance scores -> masks -> similarity) without any
external model dependency.

Architecture: mean-pooled bag of token embeddings -> affine -> tanh ->
affine -> softmax. The embedding table and the frozen random classifier
head sit outside the scored parameter space; only W1, b1, W2, b2 are in
the manifest, in that order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .baselines import LanguageVector, mean_pool_embeddings
from .errors import ValidationError
from .fisher import FisherAccumulator
from .tensorstore import FisherDump, LayoutManifest

MASK_RATIO = 0.15
DEFAULT_NUM_LABELS = 4

EXCLUDED_GROUPS = ("embedding", "task_head")

THETA_TENSORS = ("W1", "b1", "W2", "b2")


def sentence_rng(seed: int, index: int) -> np.random.Generator:
    """Counter-style stream: (seed, sentence index) fully determines the
    draw, so sharded and serial extraction agree bit for bit."""
    return np.random.default_rng([np.uint64(seed & 0xFFFFFFFFFFFFFFFF),
                                  np.uint64(index)])


class ToyModel:
    """Tiny MLP over mean-pooled embeddings; all arrays are float64."""

    def __init__(self, vocab_size: int = 64, embed_dim: int = 16,
                 hidden_dim: int = 32, rng_seed: int = 0, *,
                 zero_theta: bool = False):
        if min(vocab_size, embed_dim, hidden_dim) < 1:
            raise ValidationError("model dimensions must be positive")
        self.vocab_size = vocab_size
        self.embed_dim = embed_dim
        self.hidden_dim = hidden_dim
        self.rng_seed = rng_seed
        rng = np.random.default_rng(rng_seed)
        self.embeddings = rng.normal(0.0, 1.0, (vocab_size, embed_dim))
        self.mask_embedding = rng.normal(0.0, 1.0, embed_dim)
        if zero_theta:
            self.W1 = np.zeros((embed_dim, hidden_dim))
            self.b1 = np.zeros(hidden_dim)
            self.W2 = np.zeros((hidden_dim, vocab_size))
            self.b2 = np.zeros(vocab_size)
        else:
            self.W1 = rng.normal(0.0, 1.0 / math.sqrt(embed_dim),
                                 (embed_dim, hidden_dim))
            self.b1 = rng.normal(0.0, 0.1, hidden_dim)
            self.W2 = rng.normal(0.0, 1.0 / math.sqrt(hidden_dim),
                                 (hidden_dim, vocab_size))
            self.b2 = rng.normal(0.0, 0.1, vocab_size)

    # -- the scored parameter space -------------------------------------

    @property
    def manifest(self) -> LayoutManifest:
        return LayoutManifest.build(
            model_id=(
                f"toy-mlp-v{self.vocab_size}-e{self.embed_dim}"
                f"-h{self.hidden_dim}-init{self.rng_seed}"
            ),
            tensors=[
                ("W1", (self.embed_dim, self.hidden_dim)),
                ("b1", (self.hidden_dim,)),
                ("W2", (self.hidden_dim, self.vocab_size)),
                ("b2", (self.vocab_size,)),
            ],
            excluded_groups=EXCLUDED_GROUPS,
        )

    def get_theta(self) -> np.ndarray:
        return np.concatenate(
            [self.W1.ravel(), self.b1, self.W2.ravel(), self.b2]
        )

    def set_theta(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        expected = self.manifest.total_params
        if flat.shape != (expected,):
            raise ValidationError(f"theta must have shape ({expected},)")
        e, h, v = self.embed_dim, self.hidden_dim, self.vocab_size
        pos = 0
        self.W1 = flat[pos : pos + e * h].reshape(e, h).copy(); pos += e * h
        self.b1 = flat[pos : pos + h].copy(); pos += h
        self.W2 = flat[pos : pos + h * v].reshape(h, v).copy(); pos += h * v
        self.b2 = flat[pos:].copy()

    def _check_sentence(self, sentence: Sequence[int]) -> np.ndarray:
        tokens = np.asarray(sentence, dtype=np.int64)
        if tokens.ndim != 1 or len(tokens) == 0:
            raise ValidationError("sentence must be a nonempty token list")
        if tokens.min() < 0 or tokens.max() >= self.vocab_size:
            bad = int(tokens[(tokens < 0) | (tokens >= self.vocab_size)][0])
            raise ValidationError(
                f"token {bad} outside vocabulary of size {self.vocab_size}"
            )
        return tokens

    def _trunk(self, pooled: np.ndarray):
        """pooled context -> (hidden activation, output logits)."""
        z = np.tanh(pooled @ self.W1 + self.b1)
        return z, z @ self.W2 + self.b2

    def _backprop(self, pooled: np.ndarray, z: np.ndarray,
                  g_logits: np.ndarray) -> np.ndarray:
        """Given d(logprob)/d(logits), produce the flat theta gradient."""
        gW2 = np.outer(z, g_logits)
        gb2 = g_logits
        gz = self.W2 @ g_logits
        ga = gz * (1.0 - z * z)
        gW1 = np.outer(pooled, ga)
        gb1 = ga
        return np.concatenate([gW1.ravel(), gb1, gW2.ravel(), gb2])


def mask_count(length: int) -> int:
    """Positions to mask: ceil(0.15 * length), at least one."""
    return max(1, math.ceil(MASK_RATIO * length))


def mlm_logprob_and_grad(
    model: ToyModel, sentence: Sequence[int], mask_seed: int
) -> tuple[float, np.ndarray]:
    """Masked-token log-likelihood and its exact gradient over theta.

    Masked positions are chosen without replacement from mask_seed; their
    embeddings are replaced by the model's mask embedding and all positions
    are mean-pooled into a single shared context, so every masked position
    is predicted from the same softmax.
    """
    tokens = model._check_sentence(sentence)
    n = len(tokens)
    rng = np.random.default_rng(mask_seed)
    masked = np.sort(rng.choice(n, size=mask_count(n), replace=False))

    embedded = model.embeddings[tokens].copy()
    embedded[masked] = model.mask_embedding
    pooled = embedded.mean(axis=0)
    z, logits = model._trunk(pooled)

    shifted = logits - logits.max()
    log_norm = math.log(np.exp(shifted).sum()) + logits.max()
    targets = tokens[masked]
    logprob = float((logits[targets] - log_norm).sum())

    probs = np.exp(logits - log_norm)
    g_logits = -len(masked) * probs
    np.add.at(g_logits, targets, 1.0)
    return logprob, model._backprop(pooled, z, g_logits)


def task_head(model: ToyModel, head_seed: int,
              num_labels: int = DEFAULT_NUM_LABELS) -> np.ndarray:
    """Frozen random classifier over the model's output logits; not in theta."""
    if num_labels < 2:
        raise ValidationError("need >= 2 labels")
    rng = np.random.default_rng(head_seed)
    return rng.normal(0.0, 1.0 / math.sqrt(model.vocab_size),
                      (num_labels, model.vocab_size))


def taskhead_logprob_and_grad(
    model: ToyModel,
    sentence: Sequence[int],
    label: int,
    head_seed: int,
    num_labels: int = DEFAULT_NUM_LABELS,
) -> tuple[float, np.ndarray]:
    """Cross-entropy log-likelihood under a frozen random classification
    head; gradients flow only to theta, never into the head."""
    tokens = model._check_sentence(sentence)
    if not (0 <= label < num_labels):
        raise ValidationError(f"label {label} outside [0, {num_labels})")
    head = task_head(model, head_seed, num_labels)

    pooled = model.embeddings[tokens].mean(axis=0)
    z, logits = model._trunk(pooled)
    scores = head @ logits
    shifted = scores - scores.max()
    log_norm = math.log(np.exp(shifted).sum()) + scores.max()
    logprob = float(scores[label] - log_norm)

    g_scores = -np.exp(scores - log_norm)
    g_scores[label] += 1.0
    g_logits = head.T @ g_scores
    return logprob, model._backprop(pooled, z, g_logits)


# ---------------------------------------------------------------------------
# synthetic languages


@dataclass(frozen=True)
class SyntheticLanguage:
    """A language is just a unigram token distribution plus its corpus seed."""

    code: str
    family: int
    token_distribution: np.ndarray
    corpus_seed: int

    def __post_init__(self):
        dist = self.token_distribution
        if dist.ndim != 1 or len(dist) < 2:
            raise ValidationError("token distribution must be a vector of >= 2 probs")
        if (dist < 0).any() or abs(float(dist.sum()) - 1.0) > 1e-9:
            raise ValidationError(f"{self.code!r}: probabilities must sum to 1")


def affinity(a: SyntheticLanguage, b: SyntheticLanguage) -> float:
    """Ground-truth closeness: total-variation overlap of the two
    distributions, 1 for identical and 0 for disjoint."""
    if len(a.token_distribution) != len(b.token_distribution):
        raise ValidationError("distributions cover different vocabularies")
    l1 = float(np.abs(a.token_distribution - b.token_distribution).sum())
    return 1.0 - 0.5 * l1


def make_families(
    num_families: int,
    per_family: int,
    noise: float,
    seed: int,
    *,
    vocab_size: int = 64,
) -> list[SyntheticLanguage]:
    """Family base distributions drawn independently; members multiply the
    base by lognormal noise and renormalize, so noise -> 0 collapses a
    family onto its base."""
    if num_families < 1 or per_family < 1:
        raise ValidationError("need >= 1 family and >= 1 member")
    if not (0.0 < noise < 1.0):
        raise ValidationError(f"noise {noise} outside (0, 1)")
    rng = np.random.default_rng(seed)
    languages = []
    for fam in range(num_families):
        base = rng.dirichlet(np.ones(vocab_size))
        for member in range(per_family):
            perturbed = base * np.exp(noise * rng.normal(0.0, 1.0, vocab_size))
            perturbed /= perturbed.sum()
            languages.append(
                SyntheticLanguage(
                    code=f"f{fam}l{member}",
                    family=fam,
                    token_distribution=perturbed,
                    corpus_seed=seed * 1_000_003 + fam * 1_009 + member,
                )
            )
    return languages


def generate_corpus(
    lang: SyntheticLanguage, n: int, len_range: tuple[int, int] = (6, 12)
) -> list[list[int]]:
    """n sentences of i.i.d. tokens from the language's distribution,
    lengths uniform over the inclusive range; deterministic per
    (corpus_seed, n, len_range)."""
    lo, hi = len_range
    if n < 1:
        raise ValidationError("need n >= 1 sentences")
    if lo < 1 or hi < lo:
        raise ValidationError(f"invalid length range ({lo}, {hi})")
    rng = np.random.default_rng(lang.corpus_seed)
    vocab = len(lang.token_distribution)
    lengths = rng.integers(lo, hi + 1, size=n)
    return [
        rng.choice(vocab, size=int(length), p=lang.token_distribution).tolist()
        for length in lengths
    ]


# ---------------------------------------------------------------------------
# pipeline plumbing: corpora -> dumps / embedding vectors


def sentence_label(sentence: Sequence[int],
                   num_labels: int = DEFAULT_NUM_LABELS) -> int:
    """Deterministic pseudo-label for the classifier objective."""
    return int(sentence[0]) % num_labels


def compute_fisher_dump(
    model: ToyModel,
    language: str,
    sentences: Sequence[Sequence[int]],
    *,
    objective: str = "lm_masked",
    corpus_tag: str = "task_corpus",
    seed: int = 0,
    flags: int = 0,
) -> FisherDump:
    """Square-then-average per-example gradients over the given sentences."""
    acc = FisherAccumulator(
        model.manifest, language, objective, corpus_tag, seed, flags
    )
    for index, sentence in enumerate(sentences):
        local = sentence_rng(seed, index)
        per_sentence_seed = int(local.integers(0, 2**31 - 1))
        if objective == "lm_masked":
            _, grad = mlm_logprob_and_grad(model, sentence, per_sentence_seed)
        elif objective == "task_head_random":
            _, grad = taskhead_logprob_and_grad(
                model, sentence, sentence_label(sentence), head_seed=seed
            )
        else:
            raise ValidationError(f"unknown objective {objective!r}")
        acc.absorb(grad)
    return acc.finalize()


def write_token_corpus(path, sentences: Sequence[Sequence[int]]) -> None:
    """One sentence per line, token ids separated by single spaces."""
    if not sentences:
        raise ValidationError("refusing to write an empty corpus")
    with open(path, "w", encoding="utf-8") as fh:
        for sentence in sentences:
            fh.write(" ".join(str(int(t)) for t in sentence) + "\n")


def read_token_corpus(path) -> list[list[int]]:
    sentences = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                sentences.append([int(tok) for tok in line.split()])
            except ValueError:
                raise ValidationError(
                    f"{path}:{lineno}: token ids must be integers"
                ) from None
    if not sentences:
        raise ValidationError(f"no sentences in {path}")
    return sentences


def sentence_embedding(model: ToyModel, sentence: Sequence[int]) -> np.ndarray:
    tokens = model._check_sentence(sentence)
    return model.embeddings[tokens].mean(axis=0)


def embedding_vector(
    model: ToyModel, language: str, sentences: Sequence[Sequence[int]]
) -> LanguageVector:
    """Mean of per-sentence mean-pooled embeddings (the emb baseline input)."""
    vectors = [sentence_embedding(model, s) for s in sentences]
    return mean_pool_embeddings(vectors, language)
