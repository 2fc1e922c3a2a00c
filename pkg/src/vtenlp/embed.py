"""Per-token embedding providers producing fixed-dimension numeric sequences.

Three kinds:
  hashed      - each token string maps to a deterministic unit-norm vector
                derived from hash(token, seed); pads map to zero rows
  precomputed - rows loaded verbatim from a binary file keyed by report id,
                so embeddings exported from any external model drop in
  constant    - every non-pad token maps to the same unit vector; a
                deliberately uninformative baseline for selection sweeps

File format (precomputed): for each record, an ASCII header line
``<id> <rows> <dim>`` followed by rows*dim little-endian float32 values.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import EmbeddingFormatError, EmbeddingLookupError, ValidationError
from .tokenizer import TokenSeq

DEFAULT_DIM = 768

KIND_HASHED = "hashed"
KIND_PRECOMPUTED = "precomputed"
KIND_CONSTANT = "constant"
KINDS = (KIND_HASHED, KIND_PRECOMPUTED, KIND_CONSTANT)


@dataclass(frozen=True)
class EmbeddingProviderSpec:
    kind: str
    dim: int = DEFAULT_DIM
    seed: int = 0
    path: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown embedding kind: {self.kind!r}")
        if self.dim < 1:
            raise ValidationError("embedding dim must be >= 1")
        if self.kind == KIND_PRECOMPUTED and not self.path:
            raise ValidationError("precomputed embeddings need a path")


@dataclass
class EmbeddingMatrix:
    """Per-token embedding rows for one sequence; pads occupy the tail."""

    rows: np.ndarray
    valid_rows: int
    cls_row_index: int = 0

    @property
    def dim(self) -> int:
        return int(self.rows.shape[1])


def _hash_generator(seed: int, key: str) -> np.random.Generator:
    digest = hashlib.blake2b(
        f"{seed}\x1f{key}".encode("utf-8"), digest_size=16
    ).digest()
    return np.random.Generator(np.random.PCG64(int.from_bytes(digest, "little")))


def _unit_vector(seed: int, key: str, dim: int) -> np.ndarray:
    vec = _hash_generator(seed, key).standard_normal(dim)
    norm = np.linalg.norm(vec)
    if norm == 0.0:
        vec[0] = 1.0
        return vec
    return vec / norm


class HashedProvider:
    """Deterministic per-token unit vectors; immutable after construction."""

    def __init__(self, spec: EmbeddingProviderSpec):
        self.spec = spec
        self._cache: dict[str, np.ndarray] = {}

    def token_vector(self, token: str) -> np.ndarray:
        row = self._cache.get(token)
        if row is None:
            row = _unit_vector(self.spec.seed, token, self.spec.dim)
            row.setflags(write=False)
            self._cache[token] = row
        return row

    def embed(self, seq: TokenSeq) -> EmbeddingMatrix:
        rows = np.zeros((len(seq.tokens), self.spec.dim))
        for i in range(seq.n_valid):
            rows[i] = self.token_vector(seq.tokens[i])
        return EmbeddingMatrix(rows=rows, valid_rows=seq.n_valid)


class ConstantProvider:
    """All non-pad tokens share one vector; collapses token identity."""

    def __init__(self, spec: EmbeddingProviderSpec):
        self.spec = spec
        self._vector = _unit_vector(spec.seed, "", spec.dim)

    def embed(self, seq: TokenSeq) -> EmbeddingMatrix:
        rows = np.zeros((len(seq.tokens), self.spec.dim))
        rows[: seq.n_valid] = self._vector
        return EmbeddingMatrix(rows=rows, valid_rows=seq.n_valid)


class PrecomputedProvider:
    """Read-only index over an embedding file, loaded once."""

    def __init__(self, spec: EmbeddingProviderSpec):
        self.spec = spec
        self._index = read_embeddings(spec.path)

    def embed(self, seq: TokenSeq) -> EmbeddingMatrix:
        if seq.source_id is None:
            raise EmbeddingLookupError("token sequence has no source id to look up")
        matrix = self._index.get(seq.source_id)
        if matrix is None:
            raise EmbeddingLookupError(f"no embedding entry for id {seq.source_id!r}")
        if matrix.shape[0] != len(seq.tokens):
            raise EmbeddingFormatError(
                f"entry {seq.source_id!r} has {matrix.shape[0]} rows, "
                f"sequence has {len(seq.tokens)} tokens"
            )
        if matrix.shape[1] != self.spec.dim:
            raise EmbeddingFormatError(
                f"entry {seq.source_id!r} has dim {matrix.shape[1]}, expected {self.spec.dim}"
            )
        return EmbeddingMatrix(rows=np.array(matrix, dtype=float), valid_rows=seq.n_valid)


def make_provider(spec: EmbeddingProviderSpec):
    if spec.kind == KIND_HASHED:
        return HashedProvider(spec)
    if spec.kind == KIND_CONSTANT:
        return ConstantProvider(spec)
    return PrecomputedProvider(spec)


def embed_sequence(seq: TokenSeq, provider) -> EmbeddingMatrix:
    """Embed one token sequence; accepts a provider or a provider spec."""
    if isinstance(provider, EmbeddingProviderSpec):
        provider = make_provider(provider)
    matrix = provider.embed(seq)
    if not np.all(np.isfinite(matrix.rows)):
        raise EmbeddingFormatError("embedding rows contain non-finite values")
    return matrix


def write_embeddings(path, entries) -> None:
    """Write (id, matrix) pairs in the precomputed file format."""
    with open(path, "wb") as handle:
        for rid, matrix in dict(entries).items():
            if any(ch.isspace() for ch in rid):
                raise ValidationError(f"embedding id {rid!r} must not contain whitespace")
            matrix = np.asarray(matrix)
            if matrix.ndim != 2:
                raise ValidationError(f"embedding entry {rid!r} must be 2-D")
            handle.write(f"{rid} {matrix.shape[0]} {matrix.shape[1]}\n".encode("ascii"))
            handle.write(np.ascontiguousarray(matrix, dtype="<f4").tobytes())


def read_embeddings(path) -> dict[str, np.ndarray]:
    """Read a precomputed embedding file into an id -> float32 matrix map."""
    index: dict[str, np.ndarray] = {}
    with open(path, "rb") as handle:
        while True:
            header = handle.readline()
            if not header:
                break
            parts = header.decode("ascii", errors="replace").split()
            if len(parts) != 3:
                raise EmbeddingFormatError(f"bad header line: {header!r}")
            rid = parts[0]
            try:
                rows, dim = int(parts[1]), int(parts[2])
            except ValueError:
                raise EmbeddingFormatError(f"bad header line: {header!r}") from None
            payload = handle.read(rows * dim * 4)
            if len(payload) != rows * dim * 4:
                raise EmbeddingFormatError(f"truncated payload for id {rid!r}")
            index[rid] = np.frombuffer(payload, dtype="<f4").reshape(rows, dim)
    return index
