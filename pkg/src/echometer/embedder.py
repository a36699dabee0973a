"""Pluggable text embedding: a deterministic reference provider, a remote
HTTP provider, and a persistent on-disk vector cache.

The reference provider is a signed hashing projection over stemmed tokens
and token 2-grams. It is not a semantic model; it exists so the whole
pipeline runs deterministically offline. Lexically identical texts map to
identical vectors and disjoint-vocabulary texts are near-orthogonal.
"""

from __future__ import annotations

import hashlib
import logging
import struct
import time
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np
import requests

from .textsim import tokenize_and_stem

logger = logging.getLogger(__name__)

DEFAULT_DIMENSION = 384


class TransportError(Exception):
    """Remote provider unreachable after the configured retries."""


class ProtocolError(Exception):
    """Remote provider answered but violated the wire contract."""


class EmbeddingProvider(Protocol):
    provider_id: str
    model_id: str
    dimension: int

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray: ...


def _hash64(data: str) -> int:
    digest = hashlib.blake2b(data.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big")


class ReferenceEmbedder:
    """Deterministic signed-hash projection embedder."""

    provider_id = "reference"

    def __init__(self, dimension: int = DEFAULT_DIMENSION):
        if dimension < 1:
            raise ValueError("dimension must be positive")
        self.dimension = dimension
        self.model_id = f"signed-hash-v1-d{dimension}"

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dimension, dtype=np.float64)
        stems = tokenize_and_stem(text)
        features = stems + [f"{a}\x1f{b}" for a, b in zip(stems, stems[1:])]
        for feat in features:
            h = _hash64(feat)
            bucket = h % self.dimension
            sign = 1.0 if (h >> 63) & 1 else -1.0
            vec[bucket] += sign
        norm = np.linalg.norm(vec)
        if norm > 0.0:
            vec /= norm
        return vec

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray:
        if not texts:
            return np.zeros((0, self.dimension), dtype=np.float64)
        return np.stack([self.embed(t) for t in texts])


class RemoteEmbedder:
    """Client for the HTTP embedding service protocol.

    POST {endpoint}/embed with {"texts": [...]} and expects
    {"model": str, "dim": int, "embeddings": [[...], ...]}. Transient
    failures are retried with exponential backoff.
    """

    provider_id = "remote"

    def __init__(self, endpoint: str, max_batch: int = 256, max_attempts: int = 3,
                 backoff_seconds: float = 0.5, timeout: float = 60.0,
                 session: requests.Session | None = None):
        self.endpoint = endpoint.rstrip("/")
        self.max_batch = max_batch
        self.max_attempts = max_attempts
        self.backoff_seconds = backoff_seconds
        self.timeout = timeout
        self._session = session or requests.Session()
        info = self._request("get", f"{self.endpoint}/health")
        self.model_id = str(info["model"])
        self.dimension = int(info["dim"])

    def _request(self, method: str, url: str, **kwargs) -> dict:
        last_exc: Exception | None = None
        for attempt in range(self.max_attempts):
            try:
                resp = self._session.request(method, url, timeout=self.timeout, **kwargs)
                if resp.status_code >= 500:
                    raise requests.ConnectionError(f"server error {resp.status_code}")
                if resp.status_code != 200:
                    raise ProtocolError(f"{url} returned status {resp.status_code}: {resp.text[:200]}")
                return resp.json()
            except (requests.ConnectionError, requests.Timeout) as exc:
                last_exc = exc
                if attempt + 1 < self.max_attempts:
                    time.sleep(self.backoff_seconds * (2 ** attempt))
        raise TransportError(
            f"{url} unreachable after {self.max_attempts} attempts: {last_exc}"
        ) from last_exc

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray:
        if not texts:
            return np.zeros((0, self.dimension), dtype=np.float64)
        if len(texts) > self.max_batch:
            raise ValueError(f"batch of {len(texts)} exceeds maximum {self.max_batch}")
        payload = self._request("post", f"{self.endpoint}/embed", json={"texts": list(texts)})
        dim = int(payload.get("dim", -1))
        if dim != self.dimension:
            raise ProtocolError(f"service reported dimension {dim}, expected {self.dimension}")
        embeddings = payload.get("embeddings")
        if not isinstance(embeddings, list) or len(embeddings) != len(texts):
            raise ProtocolError(
                f"service returned {len(embeddings) if isinstance(embeddings, list) else 'no'} "
                f"embeddings for {len(texts)} texts")
        matrix = np.asarray(embeddings, dtype=np.float64)
        if matrix.shape != (len(texts), self.dimension):
            raise ProtocolError(
                f"embedding shape {matrix.shape} does not match ({len(texts)}, {self.dimension})")
        return matrix


def document_embedding(provider: EmbeddingProvider, sentences: Sequence[str]) -> np.ndarray:
    """Arithmetic mean of per-sentence embeddings; not re-normalised."""
    if not sentences:
        raise ValueError("document_embedding requires at least one sentence")
    return mean_embedding(provider.embed_batch(list(sentences)))


def mean_embedding(vectors: np.ndarray) -> np.ndarray:
    if len(vectors) == 0:
        raise ValueError("mean of zero vectors is undefined")
    return np.asarray(vectors, dtype=np.float64).mean(axis=0)


def content_key(provider_id: str, model_id: str, text: str) -> str:
    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
    return f"{provider_id}\x1f{model_id}\x1f{digest}"


@dataclass
class CacheStats:
    hits: int = 0
    misses: int = 0


_RECORD_HEADER = struct.Struct("<HI")  # key length, vector byte length


class EmbeddingCache:
    """Append-only on-disk vector cache keyed by provider, model and content hash.

    Record layout: header (key length, payload length), key bytes, float64
    vector bytes, crc32 of key+vector. A corrupt file is discarded with a
    warning and rebuilt from empty.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._entries: dict[str, np.ndarray] = {}
        if self.path.exists():
            self._load()

    def _load(self) -> None:
        entries: dict[str, np.ndarray] = {}
        try:
            blob = self.path.read_bytes()
            offset = 0
            while offset < len(blob):
                key_len, vec_len = _RECORD_HEADER.unpack_from(blob, offset)
                offset += _RECORD_HEADER.size
                key = blob[offset:offset + key_len].decode("utf-8")
                offset += key_len
                vec_bytes = blob[offset:offset + vec_len]
                offset += vec_len
                (checksum,) = struct.unpack_from("<I", blob, offset)
                offset += 4
                if len(vec_bytes) != vec_len or zlib.crc32(key.encode("utf-8") + vec_bytes) != checksum:
                    raise ValueError("checksum mismatch")
                entries[key] = np.frombuffer(vec_bytes, dtype=np.float64).copy()
        except (struct.error, ValueError, UnicodeDecodeError) as exc:
            logger.warning("embedding cache %s is corrupt (%s); rebuilding from empty",
                           self.path, exc)
            self._entries = {}
            self.path.unlink(missing_ok=True)
            return
        self._entries = entries

    def get(self, key: str) -> np.ndarray | None:
        vec = self._entries.get(key)
        return None if vec is None else vec.copy()

    def put(self, key: str, vector: np.ndarray) -> None:
        vector = np.ascontiguousarray(vector, dtype=np.float64)
        if key in self._entries:
            return
        self._entries[key] = vector.copy()
        key_bytes = key.encode("utf-8")
        vec_bytes = vector.tobytes()
        with open(self.path, "ab") as handle:
            handle.write(_RECORD_HEADER.pack(len(key_bytes), len(vec_bytes)))
            handle.write(key_bytes)
            handle.write(vec_bytes)
            handle.write(struct.pack("<I", zlib.crc32(key_bytes + vec_bytes)))

    def __len__(self) -> int:
        return len(self._entries)


def embed_corpus(
    provider: EmbeddingProvider,
    texts: Sequence[str],
    cache: EmbeddingCache | None = None,
    batch_size: int = 64,
) -> tuple[list[np.ndarray], CacheStats]:
    """Embed texts through the cache, batching the misses.

    Returns vectors aligned with the input order plus hit/miss counts.
    Repeated texts are embedded once.
    """
    stats = CacheStats()
    vectors: list[np.ndarray | None] = [None] * len(texts)
    pending: dict[str, list[int]] = {}
    for i, text in enumerate(texts):
        key = content_key(provider.provider_id, provider.model_id, text)
        cached = cache.get(key) if cache is not None else None
        if cached is not None:
            stats.hits += 1
            vectors[i] = cached
        else:
            stats.misses += 1
            pending.setdefault(text, []).append(i)
    unique_texts = list(pending)
    for start in range(0, len(unique_texts), batch_size):
        batch = unique_texts[start:start + batch_size]
        matrix = provider.embed_batch(batch)
        for text, vec in zip(batch, matrix):
            if cache is not None:
                cache.put(content_key(provider.provider_id, provider.model_id, text), vec)
            for i in pending[text]:
                vectors[i] = np.array(vec, dtype=np.float64)
    return vectors, stats
