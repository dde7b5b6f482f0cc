"""Text-to-embedding backends and the shared encode cache.

All backends key on the normalized text form (see core.normalize_text), so
cosmetic variants of a sentence always share one vector. Every backend is
deterministic given its configuration, which makes the cache purely an
optimization: enabling or disabling it never changes a returned vector.
"""

from __future__ import annotations

import hashlib
import json
import threading
from typing import Callable, Iterable, Sequence

import numpy as np

from .core import Vector, normalize_text
from .errors import (
    DimensionMismatchError,
    MissingEmbeddingError,
    ParseError,
    ProofPlanError,
    RemoteFailureError,
    UnknownConceptError,
)
from .projection import ProjectionHead, head_forward
from .remote import DEFAULT_RETRIES, DEFAULT_TIMEOUT, RemoteClient


class EncodeCache:
    """Thread-safe map from normalized text to Vector with hit/miss counters.

    get_or_compute never holds the lock across the compute call, so slow
    backends do not serialize concurrent encodes; when two threads race on
    one key, the first stored vector wins and both callers see it.
    """

    def __init__(self) -> None:
        self._data: dict[str, Vector] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def __len__(self) -> int:
        return len(self._data)

    def peek(self, key: str) -> Vector | None:
        with self._lock:
            return self._data.get(key)

    def get_or_compute(self, key: str, compute: Callable[[], Vector]) -> Vector:
        with self._lock:
            cached = self._data.get(key)
            if cached is not None:
                self.hits += 1
                return cached
        value = compute()
        with self._lock:
            self.misses += 1
            return self._data.setdefault(key, value)


class Encoder:
    """Base class: normalization, caching, dim consistency, batch plumbing."""

    def __init__(self, cache: EncodeCache | bool = True):
        if cache is True:
            self.cache: EncodeCache | None = EncodeCache()
        elif cache is False:
            self.cache = None
        else:
            self.cache = cache
        self._dim: int | None = None
        self._dim_lock = threading.Lock()

    @property
    def dim(self) -> int | None:
        """Embedding width, or None when no encode has fixed it yet."""
        return self._dim

    def encode(self, text: str) -> Vector:
        key = normalize_text(text)
        if not key:
            raise ValueError("cannot encode empty text")
        if self.cache is None:
            return self._checked(key)
        return self.cache.get_or_compute(key, lambda: self._checked(key))

    def encode_batch(self, texts: Sequence[str]) -> list[Vector]:
        """Encode texts in order; the first failing item aborts the batch
        with its index attached to the raised error."""
        out = []
        for i, text in enumerate(texts):
            try:
                out.append(self.encode(text))
            except ProofPlanError as exc:
                exc.index = i
                raise
        return out

    def _checked(self, key: str) -> Vector:
        vector = self._encode_key(key)
        with self._dim_lock:
            if self._dim is None:
                self._dim = vector.dim
            elif vector.dim != self._dim:
                raise DimensionMismatchError(
                    f"backend emitted dim {vector.dim}, expected {self._dim}")
        return vector

    def _encode_key(self, key: str) -> Vector:
        raise NotImplementedError


# ---------------------------------------------------------------------------
# file-backed lookup


def _fallback_vector(key: str, dim: int) -> Vector:
    # deterministic pseudo-embedding derived from the key hash
    seed = int.from_bytes(hashlib.sha256(key.encode("utf-8")).digest()[:8], "big")
    rng = np.random.default_rng(seed)
    return Vector(rng.standard_normal(dim) / np.sqrt(dim))


class FileLookupEncoder(Encoder):
    """Serves precomputed embeddings from a newline-delimited JSON file.

    Each line is an object with fields ``text`` and ``vector``; the width
    is fixed by the first record. In strict mode (the default) a text with
    no record raises MissingEmbeddingError, because silently filling gaps
    corrupts ranking results. With strict=False a missing text gets a
    deterministic hash-derived vector instead, which keeps exploratory runs
    alive on partial dumps.
    """

    def __init__(self, path, *, strict: bool = True, cache: EncodeCache | bool = True):
        super().__init__(cache)
        self.path = path
        self.strict = strict
        self._table: dict[str, Vector] = {}
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ParseError(f"bad JSON: {exc}", path, lineno) from None
                if not isinstance(record, dict) or "text" not in record or "vector" not in record:
                    raise ParseError("record needs 'text' and 'vector' fields", path, lineno)
                key = normalize_text(str(record["text"]))
                if not key:
                    raise ParseError("record text normalizes to empty", path, lineno)
                try:
                    vector = Vector.of(record["vector"])
                except (TypeError, ValueError) as exc:
                    raise ParseError(f"bad vector: {exc}", path, lineno) from None
                if self._dim is None:
                    self._dim = vector.dim
                elif vector.dim != self._dim:
                    raise ParseError(
                        f"mixed dims: {vector.dim} after {self._dim}", path, lineno)
                existing = self._table.get(key)
                if existing is not None and existing != vector:
                    raise ParseError(f"conflicting duplicate for key {key!r}", path, lineno)
                self._table[key] = vector
        if not self._table:
            raise ParseError("embedding file holds no records", path)

    def __contains__(self, text: str) -> bool:
        return normalize_text(text) in self._table

    def _encode_key(self, key: str) -> Vector:
        vector = self._table.get(key)
        if vector is not None:
            return vector
        if self.strict:
            raise MissingEmbeddingError(f"no embedding for {key!r} in {self.path}")
        return _fallback_vector(key, self._dim or 1)


def write_embedding_file(path, records: Iterable[tuple[str, Vector]]) -> int:
    """Write (text, vector) pairs in the lookup file format; returns count.

    Texts are stored normalized. Later duplicates of a key are dropped.
    """
    seen: set[str] = set()
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for text, vector in records:
            key = normalize_text(text)
            if not key or key in seen:
                continue
            seen.add(key)
            fh.write(json.dumps({"text": key, "vector": vector.tolist()}) + "\n")
            count += 1
    return count


# ---------------------------------------------------------------------------
# remote service


class RemoteEncoder(Encoder):
    """Encodes through an HTTP service: POST {"texts": [...]} -> {"vectors": [[...]]}."""

    def __init__(self, url: str, *, timeout: float = DEFAULT_TIMEOUT,
                 retries: int = DEFAULT_RETRIES, backoff: float = 0.25,
                 max_inflight: int = 4, session=None, cache: EncodeCache | bool = True):
        super().__init__(cache)
        self._client = RemoteClient(url, timeout=timeout, retries=retries,
                                    backoff=backoff, max_inflight=max_inflight,
                                    session=session)

    def _fetch(self, keys: list[str]) -> list[Vector]:
        body = self._client.post({"texts": keys})
        vectors = body.get("vectors")
        if not isinstance(vectors, list) or len(vectors) != len(keys):
            raise RemoteFailureError(
                f"{self._client.url}: expected {len(keys)} vectors, "
                f"got {type(vectors).__name__ if not isinstance(vectors, list) else len(vectors)}")
        out = []
        for raw in vectors:
            try:
                out.append(Vector.of(raw))
            except (TypeError, ValueError) as exc:
                raise RemoteFailureError(f"{self._client.url}: bad vector: {exc}") from None
        return out

    def _encode_key(self, key: str) -> Vector:
        return self._fetch([key])[0]

    def encode_batch(self, texts: Sequence[str]) -> list[Vector]:
        """One POST for all cache misses, preserving input order."""
        keys = []
        for text in texts:
            key = normalize_text(text)
            if not key:
                raise ValueError("cannot encode empty text")
            keys.append(key)
        if self.cache is None:
            fetched = self._fetch(keys)
            return [self._remember_dim(v) for v in fetched]
        missing = []
        for key in keys:
            if key not in missing and self.cache.peek(key) is None:
                missing.append(key)
        if missing:
            fetched = self._fetch(missing)
            for key, vector in zip(missing, fetched):
                self.cache.get_or_compute(key, lambda v=vector: self._remember_dim(v))
        return [self.cache.get_or_compute(key, lambda k=key: self._checked(k)) for key in keys]

    def _remember_dim(self, vector: Vector) -> Vector:
        with self._dim_lock:
            if self._dim is None:
                self._dim = vector.dim
            elif vector.dim != self._dim:
                raise DimensionMismatchError(
                    f"backend emitted dim {vector.dim}, expected {self._dim}")
        return vector


# ---------------------------------------------------------------------------
# synthetic additive world


class ConceptLexicon:
    """Ordered concept tokens mapped to one-hot basis vectors.

    The induced encoder satisfies exact additivity over disjoint concept
    sets: encoding the union of two disjoint sets equals the sum of their
    encodings, which is what makes this the oracle world for the additive
    heuristic.
    """

    def __init__(self, tokens: Sequence[str]):
        cleaned = []
        for token in tokens:
            norm = normalize_text(token)
            if not norm or " " in norm:
                raise ValueError(f"lexicon token {token!r} must be a single word")
            cleaned.append(norm)
        if len(set(cleaned)) != len(cleaned):
            raise ValueError("lexicon tokens must be unique")
        if not cleaned:
            raise ValueError("lexicon must not be empty")
        self.tokens = tuple(cleaned)
        self._index = {t: i for i, t in enumerate(self.tokens)}

    @property
    def dim(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def index_of(self, token: str) -> int:
        try:
            return self._index[token]
        except KeyError:
            raise UnknownConceptError(f"token {token!r} not in lexicon") from None

    @classmethod
    def load(cls, path) -> "ConceptLexicon":
        with open(path, "r", encoding="utf-8") as fh:
            tokens = [line.strip() for line in fh if line.strip()]
        return cls(tokens)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(self.tokens) + "\n")


def synthetic_encode(lexicon: ConceptLexicon, concepts: Iterable[str]) -> Vector:
    """Sum of basis vectors for a concept set (duplicates collapse)."""
    values = np.zeros(lexicon.dim)
    concept_set = set(concepts)
    if not concept_set:
        raise ValueError("concept set must be nonempty")
    for token in concept_set:
        values[lexicon.index_of(token)] = 1.0
    return Vector(values)


class SyntheticAdditiveEncoder(Encoder):
    """Treats a text as a bag of lexicon tokens and sums their basis vectors."""

    def __init__(self, lexicon: ConceptLexicon, cache: EncodeCache | bool = True):
        super().__init__(cache)
        self.lexicon = lexicon
        self._dim = lexicon.dim

    def _encode_key(self, key: str) -> Vector:
        return synthetic_encode(self.lexicon, key.split())


# ---------------------------------------------------------------------------
# projected wrapper


class ProjectedEncoder(Encoder):
    """Applies a projection head on top of another encoder.

    Caching is off by default: the head usually changes between epochs
    while the wrapped base encoder keeps its own cache of raw vectors.
    """

    def __init__(self, base: Encoder, head: ProjectionHead,
                 cache: EncodeCache | bool = False):
        super().__init__(cache)
        if base.dim is not None and base.dim != head.dim:
            raise DimensionMismatchError(
                f"head width {head.dim} does not match encoder width {base.dim}")
        self.base = base
        self.head = head

    def _encode_key(self, key: str) -> Vector:
        return head_forward(self.head, self.base.encode(key))
