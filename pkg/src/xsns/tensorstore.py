"""Binary interchange formats for gradient statistics and sub-network masks.

Three binary kinds share a common header layout (all little-endian):

  FGRD  per-language Fisher dump: header | manifest block | f32 values
  FGRS  per-example gradient stream: FGRD header minus example_count,
        followed by back-to-back f32 records of total_params entries each
  FMSK  sub-network mask: header | packed bitset (64-bit words, LSB first)

Similarity matrices travel as CSV with a language-code header row/column and
'#'-prefixed metadata lines. The layout hash (FNV-1a 64) over the canonical
manifest serialization is what makes artifacts from different runs
comparable: consumers must refuse inputs whose hashes differ.
"""
from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Iterable, Iterator, Sequence

import numpy as np

from .errors import ValidationError, XsnsError

MAGIC_DUMP = b"FGRD"
MAGIC_MASK = b"FMSK"
MAGIC_STREAM = b"FGRS"
FORMAT_VERSION = 1

OBJECTIVES = ("lm_masked", "task_head_random")
CORPUS_TAGS = ("task_corpus", "general_corpus")
METHODS = ("xsns", "l2v", "lex", "sue", "emb")

# Flag bits shared by FGRD/FGRS/FMSK headers. Unknown bits are rejected so
# that corrupted flag bytes do not pass silently.
FLAG_DETERMINISTIC = 0x0001  # stochastic layers disabled during extraction
FLAG_DEGENERATE_SELECTION = 0x0002  # mask built from an all-zero dump
_KNOWN_FLAGS = FLAG_DETERMINISTIC | FLAG_DEGENERATE_SELECTION

_LANG_FIELD_LEN = 8

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_U64 = 0xFFFFFFFFFFFFFFFF


class FormatError(XsnsError):
    """A byte stream does not conform to the declared format."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class BadMagicError(FormatError):
    pass


class VersionMismatchError(FormatError):
    pass


class TruncatedPayloadError(FormatError):
    pass


class SinkError(FormatError):
    """Writing to the destination failed partway through."""


def fnv1a_64(data: bytes, h: int = _FNV_OFFSET) -> int:
    """FNV-1a 64-bit hash; `h` allows chaining over multiple buffers."""
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & _U64
    return h


# ---------------------------------------------------------------------------
# layout manifests


@dataclass(frozen=True)
class LayoutManifest:
    """Ordered tensor table defining the flat parameter index space.

    `tensors` is a tuple of (name, shape) pairs; flattened values are laid
    out in table order, row-major within each tensor. Groups excluded from
    the space (embeddings, task heads) are recorded by name only.
    """

    model_id: str
    tensors: tuple[tuple[str, tuple[int, ...]], ...]
    total_params: int
    excluded_groups: tuple[str, ...] = ()

    def __post_init__(self):
        names = [name for name, _ in self.tensors]
        if len(set(names)) != len(names):
            raise ValidationError("manifest tensor names are not unique")
        if not self.tensors:
            raise ValidationError("manifest has no tensors")
        computed = 0
        for name, shape in self.tensors:
            if not shape or any(d < 1 for d in shape):
                raise ValidationError(f"tensor {name!r} has non-positive shape {shape}")
            n = 1
            for d in shape:
                n *= d
            computed += n
        if computed != self.total_params:
            raise ValidationError(
                f"total_params {self.total_params} != sum of tensor sizes {computed}"
            )

    @classmethod
    def build(
        cls,
        model_id: str,
        tensors: Sequence[tuple[str, Sequence[int]]],
        excluded_groups: Sequence[str] = (),
    ) -> "LayoutManifest":
        tensors = tuple((name, tuple(int(d) for d in shape)) for name, shape in tensors)
        total = sum(int(np.prod(shape)) for _, shape in tensors)
        return cls(model_id, tensors, total, tuple(excluded_groups))

    @property
    def layout_hash(self) -> int:
        """Digest over (model_id, ordered tensor table); order-sensitive."""
        return manifest_hash(self)


def manifest_hash(manifest: LayoutManifest) -> int:
    """FNV-1a 64 over the canonical (model_id, tensor table) serialization.

    Deliberately excludes `excluded_groups`: two manifests are comparable
    iff they index the same parameters, whatever bookkeeping they carry.
    """
    buf = io.BytesIO()
    _write_str(buf, manifest.model_id)
    buf.write(struct.pack("<I", len(manifest.tensors)))
    for name, shape in manifest.tensors:
        _write_str(buf, name)
        buf.write(struct.pack("<I", len(shape)))
        buf.write(struct.pack(f"<{len(shape)}Q", *shape))
    return fnv1a_64(buf.getvalue())


# ---------------------------------------------------------------------------
# dumps and masks


@dataclass(eq=False)
class FisherDump:
    """Per-parameter importance scores plus the configuration that made them."""

    manifest: LayoutManifest
    values: np.ndarray  # float32, length total_params, nonnegative finite
    example_count: int
    objective: str
    corpus_tag: str
    language: str
    seed: int
    flags: int = 0

    def validate(self) -> None:
        _check_metadata(self.language, self.objective, self.corpus_tag, self.flags)
        if self.example_count < 1:
            raise ValidationError("example_count must be positive")
        if self.values.ndim != 1:
            raise ValidationError("values must be a flat vector")
        if len(self.values) != self.manifest.total_params:
            raise ValidationError(
                f"values length {len(self.values)} != total_params "
                f"{self.manifest.total_params}"
            )
        bad = _first_invalid_value(self.values)
        if bad is not None:
            raise ValidationError(
                f"value at index {bad} is {self.values[bad]!r}; "
                "dump values must be finite and >= 0"
            )

    def __eq__(self, other) -> bool:
        if not isinstance(other, FisherDump):
            return NotImplemented
        return (
            self.manifest == other.manifest
            and self.example_count == other.example_count
            and self.objective == other.objective
            and self.corpus_tag == other.corpus_tag
            and self.language == other.language
            and self.seed == other.seed
            and self.flags == other.flags
            and np.array_equal(self.values, other.values)
        )


@dataclass(eq=False)
class MaskFile:
    """Packed top-p%% membership bitset over a manifest's parameter space."""

    manifest_hash: int
    total_params: int
    p: float
    k_selected: int
    bits: np.ndarray  # uint64 words, LSB-first bit order, zero padding
    language: str
    seed: int
    objective: str
    corpus_tag: str
    flags: int = 0

    def validate(self) -> None:
        _check_metadata(self.language, self.objective, self.corpus_tag, self.flags)
        if not (0.0 < self.p <= 1.0):
            raise ValidationError(f"p={self.p} outside (0, 1]")
        if self.total_params < 1:
            raise ValidationError("total_params must be positive")
        nwords = (self.total_params + 63) // 64
        if self.bits.dtype != np.uint64 or len(self.bits) != nwords:
            raise ValidationError("bits must hold ceil(total_params/64) uint64 words")
        pad = nwords * 64 - self.total_params
        if pad and int(self.bits[-1] >> np.uint64(64 - pad)) != 0:
            raise ValidationError("padding bits beyond total_params must be zero")
        pop = popcount(self.bits)
        if pop != self.k_selected:
            raise ValidationError(
                f"popcount {pop} != k_selected {self.k_selected}"
            )
        if self.k_selected != expected_k(self.p, self.total_params):
            raise ValidationError(
                f"k_selected {self.k_selected} != ceil(p * total_params) "
                f"= {expected_k(self.p, self.total_params)}"
            )

    def __eq__(self, other) -> bool:
        if not isinstance(other, MaskFile):
            return NotImplemented
        return (
            self.manifest_hash == other.manifest_hash
            and self.total_params == other.total_params
            and self.p == other.p
            and self.k_selected == other.k_selected
            and self.language == other.language
            and self.seed == other.seed
            and self.objective == other.objective
            and self.corpus_tag == other.corpus_tag
            and self.flags == other.flags
            and np.array_equal(self.bits, other.bits)
        )


def expected_k(p: float, total_params: int) -> int:
    """Selection size: ceil(p * N), floored at 1 so p > 0 always selects."""
    import math

    return min(total_params, max(1, math.ceil(p * total_params)))


# ---------------------------------------------------------------------------
# packed bitsets


def pack_bits(bits: np.ndarray) -> np.ndarray:
    """Pack a boolean vector into uint64 words, bit i -> word i//64 bit i%64."""
    packed = np.packbits(bits.astype(bool), bitorder="little")
    pad = (-len(packed)) % 8
    if pad:
        packed = np.concatenate([packed, np.zeros(pad, dtype=np.uint8)])
    return packed.view("<u8").copy()

def unpack_bits(words: np.ndarray, n: int) -> np.ndarray:
    """Inverse of pack_bits; returns a boolean vector of length n."""
    return np.unpackbits(words.view(np.uint8), bitorder="little")[:n].astype(bool)


def popcount(words: np.ndarray) -> int:
    return int(np.bitwise_count(words).sum())


# ---------------------------------------------------------------------------
# low-level encoding helpers


def _check_metadata(language: str, objective: str, corpus_tag: str, flags: int) -> None:
    if not language or len(language.encode("ascii", "replace")) > _LANG_FIELD_LEN:
        raise ValidationError(f"language code {language!r} must be 1..8 ASCII chars")
    try:
        language.encode("ascii")
    except UnicodeEncodeError:
        raise ValidationError(f"language code {language!r} is not ASCII") from None
    if objective not in OBJECTIVES:
        raise ValidationError(f"unknown objective {objective!r}")
    if corpus_tag not in CORPUS_TAGS:
        raise ValidationError(f"unknown corpus_tag {corpus_tag!r}")
    if flags & ~_KNOWN_FLAGS:
        raise ValidationError(f"unknown flag bits 0x{flags & ~_KNOWN_FLAGS:04x}")


def _first_invalid_value(values: np.ndarray) -> int | None:
    ok = np.isfinite(values) & (values >= 0)
    if ok.all():
        return None
    return int(np.argmax(~ok))


class _CountingWriter:
    """Wraps a sink so I/O failures report how far the write got."""

    def __init__(self, sink: BinaryIO):
        self._sink = sink
        self.offset = 0

    def write(self, data: bytes) -> None:
        try:
            self._sink.write(data)
        except OSError as exc:
            raise SinkError(f"sink failure: {exc}", offset=self.offset) from exc
        self.offset += len(data)


class _Reader:
    """Bounds-checked reader tracking the current offset for error reports."""

    def __init__(self, source: BinaryIO):
        self._src = source
        self.offset = 0

    def read_exact(self, n: int, what: str) -> bytes:
        data = self._src.read(n)
        if len(data) != n:
            raise TruncatedPayloadError(
                f"truncated payload reading {what}: expected {n} bytes, "
                f"got {len(data)}",
                offset=self.offset,
            )
        self.offset += n
        return data

    def unpack(self, fmt: str, what: str):
        size = struct.calcsize(fmt)
        return struct.unpack(fmt, self.read_exact(size, what))

    def read_rest(self) -> bytes:
        data = self._src.read()
        self.offset += len(data)
        return data


def _write_str(buf, s: str) -> None:
    data = s.encode("utf-8")
    buf.write(struct.pack("<I", len(data)))
    buf.write(data)


def _read_str(r: _Reader, what: str, limit: int = 1 << 20) -> str:
    (n,) = r.unpack("<I", f"{what} length")
    if n > limit:
        raise FormatError(f"{what} length {n} exceeds sanity limit", offset=r.offset)
    return r.read_exact(n, what).decode("utf-8")


def _encode_language(code: str) -> bytes:
    raw = code.encode("ascii")
    return raw + b"\x00" * (_LANG_FIELD_LEN - len(raw))


def _decode_language(raw: bytes, offset: int) -> str:
    cut = raw.find(b"\x00")
    if cut == 0:
        raise FormatError("empty language code", offset=offset)
    if cut == -1:
        cut = len(raw)
    code, pad = raw[:cut], raw[cut:]
    if pad.strip(b"\x00"):
        raise FormatError("language field padding must be NUL bytes", offset=offset)
    if not all(32 < b < 127 for b in code):
        raise FormatError("language code contains non-printable bytes", offset=offset)
    return code.decode("ascii")


def _encode_manifest(manifest: LayoutManifest) -> bytes:
    buf = io.BytesIO()
    _write_str(buf, manifest.model_id)
    buf.write(struct.pack("<I", len(manifest.excluded_groups)))
    for group in manifest.excluded_groups:
        _write_str(buf, group)
    buf.write(struct.pack("<I", len(manifest.tensors)))
    for name, shape in manifest.tensors:
        _write_str(buf, name)
        buf.write(struct.pack("<I", len(shape)))
        buf.write(struct.pack(f"<{len(shape)}Q", *shape))
    return buf.getvalue()


def _read_manifest(r: _Reader) -> LayoutManifest:
    model_id = _read_str(r, "model_id")
    (n_groups,) = r.unpack("<I", "excluded group count")
    if n_groups > 4096:
        raise FormatError(f"excluded group count {n_groups} exceeds sanity limit",
                          offset=r.offset)
    groups = tuple(_read_str(r, "excluded group") for _ in range(n_groups))
    (n_tensors,) = r.unpack("<I", "tensor count")
    if n_tensors > 1 << 20:
        raise FormatError(f"tensor count {n_tensors} exceeds sanity limit",
                          offset=r.offset)
    tensors = []
    for _ in range(n_tensors):
        name = _read_str(r, "tensor name")
        (ndim,) = r.unpack("<I", "tensor ndim")
        if ndim == 0 or ndim > 64:
            raise FormatError(f"tensor {name!r} ndim {ndim} out of range",
                              offset=r.offset)
        dims = r.unpack(f"<{ndim}Q", "tensor dims")
        tensors.append((name, tuple(int(d) for d in dims)))
    try:
        return LayoutManifest.build(model_id, tensors, groups)
    except ValidationError as exc:
        raise FormatError(f"invalid manifest: {exc}", offset=r.offset) from exc


def _header_bytes(
    magic: bytes,
    language: str,
    objective: str,
    corpus_tag: str,
    seed: int,
    flags: int,
) -> bytes:
    return (
        magic
        + struct.pack("<HH", FORMAT_VERSION, flags)
        + _encode_language(language)
        + struct.pack(
            "<BBi", OBJECTIVES.index(objective), CORPUS_TAGS.index(corpus_tag), seed
        )
    )


def _read_header(r: _Reader, magic: bytes, kind: str):
    got = r.read_exact(len(magic), "magic")
    if got != magic:
        raise BadMagicError(f"bad magic for {kind}: {got!r} != {magic!r}", offset=0)
    version, flags = r.unpack("<HH", "version/flags")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(
            f"unsupported {kind} version {version} (expected {FORMAT_VERSION})",
            offset=4,
        )
    if flags & ~_KNOWN_FLAGS:
        raise FormatError(f"unknown flag bits 0x{flags & ~_KNOWN_FLAGS:04x}", offset=6)
    lang_off = r.offset
    language = _decode_language(r.read_exact(_LANG_FIELD_LEN, "language"), lang_off)
    obj_code, tag_code, seed = r.unpack("<BBi", "objective/corpus_tag/seed")
    if obj_code >= len(OBJECTIVES):
        raise FormatError(f"unknown objective code {obj_code}", offset=r.offset)
    if tag_code >= len(CORPUS_TAGS):
        raise FormatError(f"unknown corpus_tag code {tag_code}", offset=r.offset)
    return flags, language, OBJECTIVES[obj_code], CORPUS_TAGS[tag_code], seed


# ---------------------------------------------------------------------------
# FGRD dumps


def write_dump(dump: FisherDump, destination: BinaryIO) -> int:
    """Serialize a validated dump; returns the number of bytes written."""
    dump.validate()
    w = _CountingWriter(destination)
    w.write(_header_bytes(MAGIC_DUMP, dump.language, dump.objective,
                          dump.corpus_tag, dump.seed, dump.flags))
    w.write(struct.pack("<QQ", dump.example_count, dump.manifest.layout_hash))
    w.write(_encode_manifest(dump.manifest))
    w.write(np.ascontiguousarray(dump.values, dtype="<f4").tobytes())
    return w.offset


def read_dump(source: BinaryIO) -> FisherDump:
    """Parse and fully validate an FGRD stream."""
    r = _Reader(source)
    flags, language, objective, corpus_tag, seed = _read_header(r, MAGIC_DUMP, "dump")
    example_count, layout_hash = r.unpack("<QQ", "example_count/layout_hash")
    if example_count < 1:
        raise FormatError("example_count must be positive", offset=r.offset)
    manifest = _read_manifest(r)
    if manifest.layout_hash != layout_hash:
        raise FormatError(
            f"layout_hash 0x{layout_hash:016x} does not match manifest "
            f"(computed 0x{manifest.layout_hash:016x})",
            offset=r.offset,
        )
    values_off = r.offset
    payload = r.read_rest()
    expected = manifest.total_params * 4
    if len(payload) != expected:
        raise TruncatedPayloadError(
            f"values payload: expected {expected} bytes "
            f"({manifest.total_params} f32 entries), got {len(payload)}",
            offset=values_off,
        )
    values = np.frombuffer(payload, dtype="<f4").copy()
    bad = _first_invalid_value(values)
    if bad is not None:
        raise FormatError(
            f"value at index {bad} is {values[bad]!r}; must be finite and >= 0",
            offset=values_off + 4 * bad,
        )
    dump = FisherDump(
        manifest=manifest,
        values=values,
        example_count=int(example_count),
        objective=objective,
        corpus_tag=corpus_tag,
        language=language,
        seed=seed,
        flags=flags,
    )
    dump.validate()
    return dump


def save_dump(dump: FisherDump, path) -> int:
    with open(path, "wb") as fh:
        return write_dump(dump, fh)


def load_dump(path) -> FisherDump:
    with open(path, "rb") as fh:
        return read_dump(fh)


# ---------------------------------------------------------------------------
# FMSK masks


def write_mask(mask: MaskFile, destination: BinaryIO) -> int:
    mask.validate()
    w = _CountingWriter(destination)
    w.write(MAGIC_MASK + struct.pack("<H", FORMAT_VERSION))
    w.write(struct.pack("<dQQ", mask.p, mask.k_selected, mask.manifest_hash))
    w.write(struct.pack("<H", mask.flags))
    w.write(_encode_language(mask.language))
    w.write(struct.pack("<BBi", OBJECTIVES.index(mask.objective),
                        CORPUS_TAGS.index(mask.corpus_tag), mask.seed))
    w.write(struct.pack("<Q", mask.total_params))
    w.write(np.ascontiguousarray(mask.bits, dtype="<u8").tobytes())
    return w.offset


def read_mask(source: BinaryIO) -> MaskFile:
    r = _Reader(source)
    got = r.read_exact(4, "magic")
    if got != MAGIC_MASK:
        raise BadMagicError(f"bad magic for mask: {got!r} != {MAGIC_MASK!r}", offset=0)
    (version,) = r.unpack("<H", "version")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(
            f"unsupported mask version {version} (expected {FORMAT_VERSION})", offset=4
        )
    p, k_selected, manifest_hash_ = r.unpack("<dQQ", "p/k_selected/manifest_hash")
    (flags,) = r.unpack("<H", "flags")
    if flags & ~_KNOWN_FLAGS:
        raise FormatError(f"unknown flag bits 0x{flags & ~_KNOWN_FLAGS:04x}",
                          offset=r.offset)
    lang_off = r.offset
    language = _decode_language(r.read_exact(_LANG_FIELD_LEN, "language"), lang_off)
    obj_code, tag_code, seed = r.unpack("<BBi", "objective/corpus_tag/seed")
    if obj_code >= len(OBJECTIVES) or tag_code >= len(CORPUS_TAGS):
        raise FormatError("unknown objective/corpus_tag code", offset=r.offset)
    (total_params,) = r.unpack("<Q", "total_params")
    if total_params < 1 or total_params > 1 << 40:
        raise FormatError(f"total_params {total_params} out of range", offset=r.offset)
    bits_off = r.offset
    payload = r.read_rest()
    expected = ((total_params + 63) // 64) * 8
    if len(payload) != expected:
        raise TruncatedPayloadError(
            f"bitset payload: expected {expected} bytes, got {len(payload)}",
            offset=bits_off,
        )
    mask = MaskFile(
        manifest_hash=int(manifest_hash_),
        total_params=int(total_params),
        p=float(p),
        k_selected=int(k_selected),
        bits=np.frombuffer(payload, dtype="<u8").copy(),
        language=language,
        seed=seed,
        objective=OBJECTIVES[obj_code],
        corpus_tag=CORPUS_TAGS[tag_code],
        flags=flags,
    )
    try:
        mask.validate()
    except ValidationError as exc:
        raise FormatError(f"invalid mask: {exc}", offset=bits_off) from exc
    return mask


def save_mask(mask: MaskFile, path) -> int:
    with open(path, "wb") as fh:
        return write_mask(mask, fh)


def load_mask(path) -> MaskFile:
    with open(path, "rb") as fh:
        return read_mask(fh)


# ---------------------------------------------------------------------------
# FGRS per-example gradient streams


@dataclass(frozen=True)
class StreamHeader:
    manifest: LayoutManifest
    objective: str
    corpus_tag: str
    language: str
    seed: int
    flags: int = 0


class GradientStreamWriter:
    """Appends per-example gradient records after a one-off header."""

    def __init__(self, destination: BinaryIO, header: StreamHeader):
        _check_metadata(header.language, header.objective, header.corpus_tag,
                        header.flags)
        self.header = header
        self._w = _CountingWriter(destination)
        self._w.write(_header_bytes(MAGIC_STREAM, header.language, header.objective,
                                    header.corpus_tag, header.seed, header.flags))
        self._w.write(struct.pack("<Q", header.manifest.layout_hash))
        self._w.write(_encode_manifest(header.manifest))
        self.records = 0

    def append(self, grad: np.ndarray) -> None:
        grad = np.asarray(grad)
        if grad.ndim != 1 or len(grad) != self.header.manifest.total_params:
            raise ValidationError(
                f"gradient record length {grad.shape} != total_params "
                f"{self.header.manifest.total_params}"
            )
        if not np.isfinite(grad).all():
            idx = int(np.argmax(~np.isfinite(grad)))
            raise ValidationError(f"non-finite gradient entry at index {idx}")
        self._w.write(np.ascontiguousarray(grad, dtype="<f4").tobytes())
        self.records += 1

    @property
    def bytes_written(self) -> int:
        return self._w.offset


def read_gradient_stream(source: BinaryIO) -> tuple[StreamHeader, Iterator[np.ndarray]]:
    """Returns the stream header and a generator over per-example gradients."""
    r = _Reader(source)
    flags, language, objective, corpus_tag, seed = _read_header(
        r, MAGIC_STREAM, "gradient stream"
    )
    (layout_hash,) = r.unpack("<Q", "layout_hash")
    manifest = _read_manifest(r)
    if manifest.layout_hash != layout_hash:
        raise FormatError(
            f"layout_hash 0x{layout_hash:016x} does not match manifest",
            offset=r.offset,
        )
    header = StreamHeader(manifest, objective, corpus_tag, language, seed, flags)
    record_bytes = manifest.total_params * 4

    def records() -> Iterator[np.ndarray]:
        while True:
            chunk = source.read(record_bytes)
            if not chunk:
                return
            if len(chunk) != record_bytes:
                raise TruncatedPayloadError(
                    f"gradient record: expected {record_bytes} bytes, "
                    f"got {len(chunk)}",
                    offset=r.offset,
                )
            r.offset += len(chunk)
            yield np.frombuffer(chunk, dtype="<f4").copy()

    return header, records()


# ---------------------------------------------------------------------------
# similarity matrices (CSV)


@dataclass(eq=False)
class SimilarityMatrix:
    """Square language-by-language score table from one prediction method.

    Scores follow a higher-is-better convention: divergence methods store
    negated divergences. Values[i, j] scores source languages[i] for target
    languages[j]; symmetric for every method except sue, whose per-source
    scores repeat across columns.
    """

    languages: tuple[str, ...]
    values: np.ndarray  # float64, square
    method: str
    seeds_averaged: int = 1

    def validate(self) -> None:
        if self.method not in METHODS:
            raise ValidationError(f"unknown method {self.method!r}")
        n = len(self.languages)
        if len(set(self.languages)) != n or n == 0:
            raise ValidationError("languages must be nonempty and unique")
        if self.values.shape != (n, n):
            raise ValidationError(
                f"values shape {self.values.shape} != ({n}, {n})"
            )
        if not np.isfinite(self.values).all():
            raise ValidationError("matrix contains non-finite entries")
        if self.seeds_averaged < 1:
            raise ValidationError("seeds_averaged must be >= 1")
        if self.method != "sue":
            if not np.allclose(self.values, self.values.T, rtol=0, atol=1e-9):
                raise ValidationError(f"{self.method} matrix must be symmetric")
            diag = 0.0 if self.method == "lex" else 1.0
            if not np.allclose(np.diag(self.values), diag, rtol=0, atol=1e-9):
                raise ValidationError(
                    f"{self.method} matrix diagonal must equal {diag}"
                )

    def score(self, source: str, target: str) -> float:
        i = self.languages.index(source)
        j = self.languages.index(target)
        return float(self.values[i, j])

    def __eq__(self, other) -> bool:
        if not isinstance(other, SimilarityMatrix):
            return NotImplemented
        return (
            self.languages == other.languages
            and self.method == other.method
            and self.seeds_averaged == other.seeds_averaged
            and np.array_equal(self.values, other.values)
        )


def write_matrix(matrix: SimilarityMatrix, destination, extra_metadata=()) -> None:
    """CSV with '#' metadata lines, a header row and a header column.

    Values carry 9 significant digits, enough that write -> read -> write
    reproduces the file byte for byte.
    """
    matrix.validate()
    lines = [f"# method={matrix.method}", f"# seeds_averaged={matrix.seeds_averaged}"]
    lines.extend(f"# {item}" for item in extra_metadata)
    lines.append("lang," + ",".join(matrix.languages))
    for code, row in zip(matrix.languages, matrix.values):
        lines.append(code + "," + ",".join(f"{v:.9g}" for v in row))
    destination.write("\n".join(lines) + "\n")


def read_matrix(source) -> SimilarityMatrix:
    method = None
    seeds_averaged = 1
    header = None
    rows = {}
    order = []
    for lineno, line in enumerate(source, 1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("method="):
                method = body.split("=", 1)[1]
            elif body.startswith("seeds_averaged="):
                seeds_averaged = int(body.split("=", 1)[1])
            continue
        cells = line.split(",")
        if header is None:
            if cells[0] != "lang":
                raise FormatError(f"matrix header must start with 'lang' (line {lineno})")
            header = cells[1:]
            continue
        code, raw = cells[0], cells[1:]
        if len(raw) != len(header):
            raise FormatError(
                f"row {code!r} has {len(raw)} values, expected {len(header)} "
                f"(line {lineno})"
            )
        rows[code] = np.array([float(v) for v in raw], dtype=np.float64)
        order.append(code)
    if header is None or method is None:
        raise FormatError("matrix file missing header or method metadata")
    if order != header:
        raise FormatError("matrix row order does not match header column order")
    matrix = SimilarityMatrix(
        languages=tuple(header),
        values=np.vstack([rows[c] for c in header]),
        method=method,
        seeds_averaged=seeds_averaged,
    )
    matrix.validate()
    return matrix


def save_matrix(matrix: SimilarityMatrix, path, extra_metadata=()) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        write_matrix(matrix, fh, extra_metadata)


def load_matrix(path) -> SimilarityMatrix:
    with open(path, "r", encoding="utf-8") as fh:
        return read_matrix(fh)
