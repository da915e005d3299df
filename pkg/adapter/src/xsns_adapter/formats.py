"""Writers for the gradient-dump and language-vector file formats.

This package only ever produces these files; parsing and validation live on
the consumer side. The binary layout is reimplemented here from the format
contract so that the extractor has no install-time dependency on the
consumer package, and the cross-reader tests keep the two in lockstep.

Dump layout, all little-endian:

    magic  b"FGRD"
    u16    format version (1)
    u16    flags
    8 B    language code, ASCII, NUL padded
    u8     objective index        u8 corpus-tag index       i32 seed
    u64    example count          u64 layout hash
    manifest: str model_id, u32 + excluded group strs, u32 + tensor table
    values: one f32 per parameter, tensor-table order

Strings are u32 length prefixed UTF-8. The layout hash is FNV-1a 64 over
(model_id, tensor table) and deliberately skips the excluded groups.
"""

from __future__ import annotations

import math
import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

MAGIC_DUMP = b"FGRD"
FORMAT_VERSION = 1

OBJECTIVES = ("lm_masked", "task_head_random")
CORPUS_TAGS = ("task_corpus", "general_corpus")

# Only these bits may appear in the flags field; readers reject the rest.
FLAG_DETERMINISTIC = 0x0001
FLAG_DEGENERATE_SELECTION = 0x0002
_KNOWN_FLAGS = FLAG_DETERMINISTIC | FLAG_DEGENERATE_SELECTION

_LANG_FIELD_LEN = 8
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_U64 = (1 << 64) - 1

TensorTable = Sequence[tuple[str, tuple[int, ...]]]


def fnv1a_64(data: bytes, h: int = _FNV_OFFSET) -> int:
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & _U64
    return h


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def _pack_tensor_table(tensors: TensorTable) -> bytes:
    parts = [struct.pack("<I", len(tensors))]
    for name, shape in tensors:
        parts.append(_pack_str(name))
        parts.append(struct.pack("<I", len(shape)))
        parts.append(struct.pack(f"<{len(shape)}Q", *shape))
    return b"".join(parts)


def layout_hash(model_id: str, tensors: TensorTable) -> int:
    """Digest over (model_id, ordered tensor table); order-sensitive."""
    return fnv1a_64(_pack_str(model_id) + _pack_tensor_table(tensors))


def _encode_language(code: str) -> bytes:
    try:
        raw = code.encode("ascii")
    except UnicodeEncodeError:
        raise ValueError(f"language code {code!r} is not ASCII") from None
    if not 1 <= len(raw) <= _LANG_FIELD_LEN:
        raise ValueError(
            f"language code {code!r} must be 1..{_LANG_FIELD_LEN} bytes"
        )
    if not all(32 < b < 127 for b in raw):
        raise ValueError(f"language code {code!r} has non-printable bytes")
    return raw + b"\x00" * (_LANG_FIELD_LEN - len(raw))


def _check_tensors(tensors: TensorTable) -> int:
    if not tensors:
        raise ValueError("tensor table is empty")
    seen = set()
    total = 0
    for name, shape in tensors:
        if not name:
            raise ValueError("tensor with empty name")
        if name in seen:
            raise ValueError(f"duplicate tensor name {name!r}")
        seen.add(name)
        if any(int(d) < 1 for d in shape):
            raise ValueError(f"tensor {name!r} has a non-positive dimension")
        total += math.prod(int(d) for d in shape) if shape else 1
    return total


def write_fisher_dump(
    path,
    *,
    model_id: str,
    tensors: TensorTable,
    values: np.ndarray,
    language: str,
    objective: str,
    corpus_tag: str,
    seed: int,
    example_count: int,
    excluded_groups: Sequence[str] = (),
    flags: int = FLAG_DETERMINISTIC,
) -> Path:
    """Serialize one per-parameter statistics vector; returns the path.

    `values` must already be the finalized per-parameter averages, one
    entry per scalar parameter in tensor-table order.
    """
    if not model_id:
        raise ValueError("model_id must be non-empty")
    if objective not in OBJECTIVES:
        raise ValueError(f"unknown objective {objective!r}")
    if corpus_tag not in CORPUS_TAGS:
        raise ValueError(f"unknown corpus tag {corpus_tag!r}")
    if not -(2**31) <= int(seed) < 2**31:
        raise ValueError("seed out of i32 range")
    if example_count < 1:
        raise ValueError("example_count must be positive")
    if flags & ~_KNOWN_FLAGS:
        raise ValueError(f"unknown flag bits 0x{flags & ~_KNOWN_FLAGS:04x}")
    total = _check_tensors(tensors)
    flat = np.asarray(values, dtype="<f4").reshape(-1)
    if flat.size != total:
        raise ValueError(
            f"value count {flat.size} does not match tensor table ({total})"
        )
    if not np.isfinite(flat).all():
        raise ValueError("values must be finite")
    if (flat < 0).any():
        raise ValueError("squared-gradient averages cannot be negative")

    lang8 = _encode_language(language)
    header = (
        MAGIC_DUMP
        + struct.pack("<HH", FORMAT_VERSION, flags)
        + lang8
        + struct.pack(
            "<BBi", OBJECTIVES.index(objective), CORPUS_TAGS.index(corpus_tag),
            int(seed),
        )
    )
    manifest = (
        _pack_str(model_id)
        + struct.pack("<I", len(excluded_groups))
        + b"".join(_pack_str(g) for g in excluded_groups)
        + _pack_tensor_table(tensors)
    )
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(struct.pack("<QQ", example_count, layout_hash(model_id, tensors)))
        fh.write(manifest)
        fh.write(flat.tobytes())
    return path


def write_language_vectors(
    path,
    items: Iterable[tuple[str, np.ndarray]],
    metadata: Sequence[str] = (),
) -> Path:
    """One `code v1 v2 ...` line per language, '#' metadata lines first."""
    rows = []
    dim = None
    for code, vector in items:
        if not code or any(ch.isspace() for ch in code):
            raise ValueError(f"bad language code {code!r}")
        vec = np.asarray(vector, dtype=np.float64).reshape(-1)
        if vec.size == 0 or not np.isfinite(vec).all():
            raise ValueError(f"vector for {code!r} is empty or non-finite")
        if dim is None:
            dim = vec.size
        elif vec.size != dim:
            raise ValueError(
                f"vector for {code!r} has dim {vec.size}, expected {dim}"
            )
        rows.append((code, vec))
    if not rows:
        raise ValueError("no vectors to write")
    if len({code for code, _ in rows}) != len(rows):
        raise ValueError("duplicate language codes")
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for line in metadata:
            fh.write(f"# {line}\n")
        for code, vec in rows:
            coords = " ".join(f"{x:.12g}" for x in vec)
            fh.write(f"{code} {coords}\n")
    return path
