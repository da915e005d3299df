"""Per-parameter gradient statistics and language embeddings from a
transformer checkpoint.

The scored objective is the per-sentence log-probability of a masked-LM
reconstruction (`lm_masked`) or of a frozen random classification head over
the pooled final hidden state (`task_head_random`). For each sampled
sentence the gradient of that scalar is taken with respect to the encoder
trunk only, squared, and averaged over sentences: square first, then
average. Embedding tables and every head stay out of the scored set;
gradients still flow through them, they are just not recorded.

Both a one-sentence-at-a-time loop and a padded-batch mode are provided.
The batch mode runs one forward per chunk and one backward per sentence,
so it returns per-sentence gradients, not a batch mean. Padding changes
nothing mathematically (attention masks zero it out); the two modes differ
only in float summation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch

from . import formats
from .jobs import (
    AdapterError,
    ExtractionJob,
    load_corpus,
    sample_sentences,
)

MASK_RATIO = 0.15
NUM_LABELS = 4
# first name component marks a head module; never scored
_HEAD_PREFIXES = ("cls", "lm_head", "classifier", "score", "qa_outputs")

POOLING_NOTE = (
    "mean over non-padding token states of the final hidden layer, "
    "then mean over sentences"
)


def load_model(path_or_id: str):
    """(model, tokenizer) in eval mode; stochastic layers disabled."""
    from transformers import AutoModelForMaskedLM, AutoTokenizer
    from transformers.utils import logging as hf_logging

    hf_logging.disable_progress_bar()
    tokenizer = AutoTokenizer.from_pretrained(path_or_id)
    model = AutoModelForMaskedLM.from_pretrained(path_or_id)
    model.eval()
    return model, tokenizer


def _check_tokenizer(model, tokenizer) -> None:
    """The tokenizer must not emit ids beyond the embedding table."""
    rows = model.get_input_embeddings().num_embeddings
    needed = max(tokenizer.get_vocab().values()) + 1
    if needed > rows:
        raise AdapterError(
            f"tokenizer does not match model: vocabulary needs {needed} "
            f"embedding rows, model has {rows}"
        )


def _forward(model, **kwargs):
    try:
        return model(**kwargs)
    except torch.OutOfMemoryError as exc:
        raise AdapterError(
            "out of memory during extraction; reduce max_length or batch_size"
        ) from exc


def _group_label(name: str) -> str:
    parts = name.split(".")
    for marker in ("embeddings", "pooler"):
        if marker in parts:
            return ".".join(parts[: parts.index(marker) + 1])
    return parts[0]


def partition_parameters(model):
    """Split named parameters into (scored, excluded group labels).

    Scored parameters are the encoder trunk. Anything under an embeddings
    block, a pooler, or a head module is excluded, and the exclusion is
    reported as a sorted tuple of module-path labels for the manifest.
    """
    included = []
    excluded: set[str] = set()
    for name, param in model.named_parameters():
        if "embedding" in name.lower() or ".pooler." in f".{name}.":
            excluded.add(_group_label(name))
            continue
        if name.split(".", 1)[0] in _HEAD_PREFIXES:
            excluded.add(_group_label(name))
            continue
        included.append((name, param))
    if not included:
        raise AdapterError("no scoreable parameters left after exclusions")
    return included, tuple(sorted(excluded))


def derived_model_id(config, max_length: int, label: str | None = None) -> str:
    """Stable identity string recorded in dump manifests.

    Truncation length is part of the identity: the flags field is a closed
    set, so runs with different caps must not share a layout hash. Pass
    `label` to pin a specific revision name instead of the derived one.
    """
    base = label or (
        f"{config.model_type}-l{config.num_hidden_layers}"
        f"-h{config.hidden_size}-v{config.vocab_size}"
    )
    return f"{base}+len{max_length}"


@dataclass
class _Example:
    ids: list[int]
    positions: list[int]  # masked slots to score; empty for the head objective
    originals: list[int]  # pre-mask token ids at those slots
    label: int  # frozen-head target, -1 when unused


def _prepare(tokenizer, sentences, objective, seed, max_length) -> list[_Example]:
    encoded = tokenizer(
        list(sentences),
        truncation=True,
        max_length=max_length,
        return_special_tokens_mask=True,
    )
    mask_id = tokenizer.mask_token_id
    if objective == "lm_masked" and mask_id is None:
        raise AdapterError("tokenizer has no mask token")
    examples = []
    pairs = zip(encoded["input_ids"], encoded["special_tokens_mask"])
    for index, (ids, special) in enumerate(pairs):
        # one RNG stream per sentence position in the sampled order
        rng = np.random.default_rng([seed, index])
        if objective == "lm_masked":
            maskable = [i for i, s in enumerate(special) if s == 0]
            if not maskable:
                raise AdapterError(
                    f"sentence {index} yields no maskable tokens"
                )
            count = max(1, math.ceil(MASK_RATIO * len(maskable)))
            chosen = rng.choice(len(maskable), size=count, replace=False)
            positions = sorted(maskable[int(i)] for i in chosen)
            originals = [ids[p] for p in positions]
            masked = list(ids)
            for p in positions:
                masked[p] = mask_id
            examples.append(_Example(masked, positions, originals, -1))
        else:
            label = int(rng.integers(NUM_LABELS))
            examples.append(_Example(list(ids), [], [], label))
    return examples


def _frozen_head(hidden_size: int, seed: int) -> torch.Tensor:
    rng = np.random.default_rng(seed)
    weights = rng.normal(0.0, 1.0 / math.sqrt(hidden_size), (NUM_LABELS, hidden_size))
    return torch.tensor(weights, dtype=torch.float32)


def _pad_batch(group: Sequence[_Example], pad_id: int):
    width = max(len(ex.ids) for ex in group)
    ids = torch.tensor(
        [ex.ids + [pad_id] * (width - len(ex.ids)) for ex in group],
        dtype=torch.long,
    )
    attention = torch.tensor(
        [[1] * len(ex.ids) + [0] * (width - len(ex.ids)) for ex in group],
        dtype=torch.long,
    )
    return ids, attention


def _example_score(logits_row, hidden_row, attention_row, example, head):
    if example.label < 0:
        rows = torch.log_softmax(logits_row[example.positions], dim=-1)
        targets = torch.tensor(example.originals, dtype=torch.long)
        return rows[torch.arange(len(example.positions)), targets].sum()
    mask = attention_row.unsqueeze(-1).to(hidden_row.dtype)
    pooled = (hidden_row * mask).sum(0) / attention_row.sum()
    return torch.log_softmax(head @ pooled, dim=-1)[example.label]


@dataclass(frozen=True)
class FisherResult:
    values: np.ndarray  # float32 averages, tensor-table order
    tensors: tuple[tuple[str, tuple[int, ...]], ...]
    excluded_groups: tuple[str, ...]
    example_count: int


def extract_fisher(
    model,
    tokenizer,
    sentences: Sequence[str],
    *,
    objective: str = "lm_masked",
    seed: int = 0,
    max_length: int = 256,
    method: str = "batched",
    batch_size: int = 16,
) -> FisherResult:
    """Average squared per-sentence gradient for every scored parameter."""
    if objective not in formats.OBJECTIVES:
        raise AdapterError(f"unknown objective {objective!r}")
    if method not in ("loop", "batched"):
        raise AdapterError(f"unknown method {method!r}")
    sentences = list(sentences)
    if not sentences:
        raise AdapterError("no sentences to extract from")
    _check_tokenizer(model, tokenizer)

    included, excluded = partition_parameters(model)
    params = [param for _, param in included]
    examples = _prepare(tokenizer, sentences, objective, seed, max_length)
    need_hidden = objective == "task_head_random"
    head = _frozen_head(model.config.hidden_size, seed) if need_hidden else None
    pad_id = tokenizer.pad_token_id
    if pad_id is None:
        pad_id = 0

    # square in f64 before averaging; a batch-mean here would be wrong
    accumulators = [torch.zeros(p.shape, dtype=torch.float64) for p in params]
    chunk = batch_size if method == "batched" else 1
    for start in range(0, len(examples), chunk):
        group = examples[start : start + chunk]
        ids, attention = _pad_batch(group, pad_id)
        out = _forward(
            model,
            input_ids=ids,
            attention_mask=attention,
            output_hidden_states=need_hidden,
        )
        hidden = out.hidden_states[-1] if need_hidden else None
        for row, example in enumerate(group):
            score = _example_score(
                out.logits[row],
                hidden[row] if need_hidden else None,
                attention[row],
                example,
                head,
            )
            grads = torch.autograd.grad(
                score,
                params,
                retain_graph=row < len(group) - 1,
                allow_unused=True,
            )
            for acc, grad in zip(accumulators, grads):
                if grad is not None:
                    acc += grad.detach().double().square()

    n = len(examples)
    values = np.concatenate(
        [(acc / n).to(torch.float32).reshape(-1).numpy() for acc in accumulators]
    )
    tensors = tuple((name, tuple(param.shape)) for name, param in included)
    return FisherResult(values, tensors, excluded, n)


def extract_embeddings(
    model,
    tokenizer,
    sentences: Sequence[str],
    *,
    max_length: int = 256,
    method: str = "batched",
    batch_size: int = 16,
) -> np.ndarray:
    """One f64 vector per corpus: pooled final hidden states, averaged.

    Pooling is the mean over non-padding positions of the last layer,
    per sentence, then the mean over sentences (POOLING_NOTE).
    """
    if method not in ("loop", "batched"):
        raise AdapterError(f"unknown method {method!r}")
    sentences = list(sentences)
    if not sentences:
        raise AdapterError("no sentences to embed")
    _check_tokenizer(model, tokenizer)
    encoded = tokenizer(list(sentences), truncation=True, max_length=max_length)
    examples = [_Example(list(ids), [], [], -1) for ids in encoded["input_ids"]]
    pad_id = tokenizer.pad_token_id
    if pad_id is None:
        pad_id = 0
    total = np.zeros(model.config.hidden_size, dtype=np.float64)
    chunk = batch_size if method == "batched" else 1
    with torch.no_grad():
        for start in range(0, len(examples), chunk):
            group = examples[start : start + chunk]
            ids, attention = _pad_batch(group, pad_id)
            out = _forward(
                model, input_ids=ids, attention_mask=attention,
                output_hidden_states=True,
            )
            states = out.hidden_states[-1]
            mask = attention.unsqueeze(-1).to(states.dtype)
            pooled = (states * mask).sum(1) / attention.sum(1, keepdim=True)
            total += pooled.double().sum(0).numpy()
    return total / len(examples)


def run_fisher_job(
    job: ExtractionJob,
    *,
    method: str = "batched",
    warn: Callable[[str], None] | None = None,
) -> Path:
    """Load, sample, extract, and write one dump; returns the output path."""
    job.validate()
    model, tokenizer = load_model(job.model)
    lines = load_corpus(job.corpus)
    picked = sample_sentences(lines, job.sample_size, job.seed, warn=warn)
    result = extract_fisher(
        model,
        tokenizer,
        picked,
        objective=job.objective,
        seed=job.seed,
        max_length=job.max_length,
        method=method,
        batch_size=job.batch_size,
    )
    return formats.write_fisher_dump(
        job.output,
        model_id=derived_model_id(model.config, job.max_length, job.model_label),
        tensors=result.tensors,
        excluded_groups=result.excluded_groups,
        values=result.values,
        language=job.language,
        objective=job.objective,
        corpus_tag=job.corpus_tag,
        seed=job.seed,
        example_count=result.example_count,
        flags=formats.FLAG_DETERMINISTIC,
    )
