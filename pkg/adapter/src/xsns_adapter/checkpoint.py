"""Local fixture checkpoints: a tiny masked-LM saved to disk, no network.

Real deployments point the extractor at a trained multilingual checkpoint.
Tests and demos need something that loads through the same code path but
builds in milliseconds, so this module materializes a randomly initialized
two-layer encoder with a WordPiece vocabulary spanning two scripts.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

SPECIALS = ("[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]")
_LATIN = tuple("abcdefghij")
_CYRILLIC = tuple("абвгдежзик")
SCRIPTS = {"latin": _LATIN, "cyrillic": _CYRILLIC}


def _vocabulary() -> list[str]:
    letters = [*_LATIN, *_CYRILLIC]
    return [*SPECIALS, *letters, *("##" + c for c in letters)]


def build_checkpoint(
    directory,
    *,
    seed: int = 0,
    hidden_size: int = 32,
    num_layers: int = 2,
    num_heads: int = 4,
    intermediate_size: int = 64,
    max_positions: int = 128,
) -> Path:
    """Write tokenizer plus random-weight model files under `directory`.

    Deterministic in `seed`: rebuilding with the same arguments yields
    identical weights. Loadable with the standard auto classes from the
    returned path alone.
    """
    import torch
    from tokenizers import Tokenizer
    from tokenizers.models import WordPiece
    from tokenizers.normalizers import BertNormalizer
    from tokenizers.pre_tokenizers import BertPreTokenizer
    from tokenizers.processors import TemplateProcessing
    from transformers import BertConfig, BertForMaskedLM, BertTokenizerFast
    from transformers.utils import logging as hf_logging

    if hidden_size % num_heads:
        raise ValueError("hidden_size must be divisible by num_heads")
    hf_logging.disable_progress_bar()
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    words = _vocabulary()
    vocab = {word: i for i, word in enumerate(words)}
    backend = Tokenizer(WordPiece(vocab, unk_token="[UNK]", max_input_chars_per_word=100))
    # lowercase/strip-accents off: the two scripts must stay distinguishable
    backend.normalizer = BertNormalizer(lowercase=False, strip_accents=False)
    backend.pre_tokenizer = BertPreTokenizer()
    backend.post_processor = TemplateProcessing(
        single="[CLS] $A [SEP]",
        pair="[CLS] $A [SEP] $B [SEP]",
        special_tokens=[("[CLS]", vocab["[CLS]"]), ("[SEP]", vocab["[SEP]"])],
    )
    tokenizer = BertTokenizerFast(
        tokenizer_object=backend,
        unk_token="[UNK]",
        pad_token="[PAD]",
        cls_token="[CLS]",
        sep_token="[SEP]",
        mask_token="[MASK]",
        do_lower_case=False,
        model_max_length=max_positions,
    )
    tokenizer.save_pretrained(directory)

    torch.manual_seed(seed)
    config = BertConfig(
        vocab_size=len(words),
        hidden_size=hidden_size,
        num_hidden_layers=num_layers,
        num_attention_heads=num_heads,
        intermediate_size=intermediate_size,
        max_position_embeddings=max_positions,
    )
    BertForMaskedLM(config).save_pretrained(directory)
    return directory


def synth_corpus(
    n: int,
    seed: int,
    *,
    script: str = "latin",
    words_per_line: tuple[int, int] = (3, 8),
    chars_per_word: tuple[int, int] = (1, 4),
) -> list[str]:
    """Sentences assembled from one script of the fixture vocabulary."""
    if script not in SCRIPTS:
        raise ValueError(f"unknown script {script!r} (have {sorted(SCRIPTS)})")
    lo_w, hi_w = words_per_line
    lo_c, hi_c = chars_per_word
    if not (1 <= lo_w <= hi_w and 1 <= lo_c <= hi_c):
        raise ValueError("length ranges must be ordered and positive")
    alphabet = SCRIPTS[script]
    rng = np.random.default_rng([seed, n])
    lines = []
    for _ in range(n):
        count = int(rng.integers(lo_w, hi_w + 1))
        words = []
        for _ in range(count):
            length = int(rng.integers(lo_c, hi_c + 1))
            words.append("".join(rng.choice(alphabet, size=length)))
        lines.append(" ".join(words))
    return lines
