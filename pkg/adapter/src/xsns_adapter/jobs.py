"""Extraction job descriptions, corpus handling, and config files."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import formats


class AdapterError(Exception):
    """Domain error: bad configuration, bad corpus, bad job parameters."""


@dataclass(frozen=True)
class ExtractionJob:
    """Everything needed to turn one corpus into one gradient dump.

    `model` is a checkpoint directory or hub identifier. `corpus` is a
    plain-text file, one sentence per line. `sample_size` sentences are
    drawn from it deterministically before extraction. `max_length` caps
    tokenized sentence length; it is recorded in the dump's model id so
    that differently truncated runs never share a layout identity.
    """

    model: str
    corpus: str
    language: str
    output: str
    objective: str = "lm_masked"
    corpus_tag: str = "task_corpus"
    sample_size: int = 1024
    seed: int = 0
    max_length: int = 256
    batch_size: int = 16
    model_label: str | None = None

    def validate(self) -> None:
        if self.objective not in formats.OBJECTIVES:
            raise AdapterError(f"unknown objective {self.objective!r}")
        if self.corpus_tag not in formats.CORPUS_TAGS:
            raise AdapterError(f"unknown corpus tag {self.corpus_tag!r}")
        try:
            formats._encode_language(self.language)
        except ValueError as exc:
            raise AdapterError(str(exc)) from None
        if self.sample_size < 1:
            raise AdapterError("sample_size must be positive")
        if not -(2**31) <= self.seed < 2**31:
            raise AdapterError("seed out of i32 range")
        # CLS + SEP + at least one content token
        if self.max_length < 4:
            raise AdapterError("max_length must be at least 4")
        if self.batch_size < 1:
            raise AdapterError("batch_size must be positive")
        if self.model_label is not None and not self.model_label:
            raise AdapterError("model_label must be non-empty when given")


def load_corpus(path) -> list[str]:
    """Non-empty stripped lines of a UTF-8 text file."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line.strip() for line in fh]
    lines = [line for line in lines if line]
    if not lines:
        raise AdapterError(f"corpus {path} has no sentences")
    return lines


def sample_sentences(
    sentences: Sequence[str],
    size: int,
    seed: int,
    warn: Callable[[str], None] | None = None,
) -> list[str]:
    """Uniform sample of `size` sentences; falls back to sampling with
    replacement (with a warning) when the corpus is too small."""
    rng = np.random.default_rng([seed, len(sentences)])
    if size <= len(sentences):
        idx = rng.choice(len(sentences), size=size, replace=False)
    else:
        if warn is not None:
            warn(
                f"corpus has {len(sentences)} sentences, fewer than sample "
                f"size {size}; sampling with replacement"
            )
        idx = rng.choice(len(sentences), size=size, replace=True)
    return [sentences[int(i)] for i in idx]


CONFIG_KEYS = frozenset(
    {
        "model",
        "model_label",
        "objective",
        "corpus_tag",
        "sample_size",
        "seeds",
        "max_length",
        "batch_size",
        "out_dir",
    }
)


def read_config(path) -> dict[str, str]:
    """`key=value` lines, '#' comments, keys restricted to CONFIG_KEYS."""
    settings: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise AdapterError(f"{path}:{lineno}: expected key=value")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in CONFIG_KEYS:
                raise AdapterError(f"{path}:{lineno}: unknown config key {key!r}")
            settings[key] = value
    return settings


def parse_seeds(text: str) -> tuple[int, ...]:
    try:
        seeds = tuple(int(part) for part in text.split(","))
    except ValueError:
        raise AdapterError(f"bad seed list {text!r}") from None
    if not seeds:
        raise AdapterError("seed list is empty")
    if len(set(seeds)) != len(seeds):
        raise AdapterError(f"duplicate seeds in {text!r}")
    return seeds


def dump_filename(language: str, objective: str, seed: int) -> str:
    return f"{language}_{objective}_s{seed}.fgrd"


def job_output_path(out_dir, language: str, objective: str, seed: int) -> Path:
    return Path(out_dir) / dump_filename(language, objective, seed)
