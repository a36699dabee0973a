"""Embedding backends.

A backend owns exactly one model: an id, a fixed output dimension, and a
batch embed call that also reports which inputs were truncated to fit the
model's input limit.
"""

from __future__ import annotations

import hashlib
import re
from typing import Protocol, Sequence

import numpy as np

DEFAULT_MODEL = "all-MiniLM-L6-v2"

_WORD_RE = re.compile(r"[^\W_]+")


class Backend(Protocol):
    model_id: str
    dimension: int

    def embed(self, texts: Sequence[str]) -> tuple[np.ndarray, list[bool]]: ...


class HashBackend:
    """Deterministic stand-in model: signed-hash bag of words and bigrams.

    Serves the full wire protocol without any model download, which keeps
    the service testable offline. Not semantically meaningful.
    """

    def __init__(self, dimension: int = 384, max_words: int = 256):
        if dimension < 1:
            raise ValueError("dimension must be positive")
        self.dimension = dimension
        self.max_words = max_words
        self.model_id = f"hash-v1-d{dimension}"

    def _embed_one(self, text: str) -> tuple[np.ndarray, bool]:
        words = _WORD_RE.findall(text.lower())
        truncated = len(words) > self.max_words
        words = words[: self.max_words]
        vec = np.zeros(self.dimension, dtype=np.float64)
        for feat in words + [f"{a} {b}" for a, b in zip(words, words[1:])]:
            digest = hashlib.blake2b(feat.encode("utf-8"), digest_size=8).digest()
            h = int.from_bytes(digest, "big")
            vec[h % self.dimension] += 1.0 if (h >> 63) & 1 else -1.0
        norm = np.linalg.norm(vec)
        if norm > 0.0:
            vec /= norm
        return vec, truncated

    def embed(self, texts: Sequence[str]) -> tuple[np.ndarray, list[bool]]:
        if not texts:
            return np.zeros((0, self.dimension)), []
        pairs = [self._embed_one(t) for t in texts]
        return np.stack([v for v, _ in pairs]), [t for _, t in pairs]


class SentenceTransformerBackend:
    """Pretrained sentence-transformers model, inference in eval mode."""

    def __init__(self, model_name: str = DEFAULT_MODEL):
        from sentence_transformers import SentenceTransformer

        self._model = SentenceTransformer(model_name)
        self._model.eval()
        self.model_id = model_name
        self.dimension = int(self._model.get_sentence_embedding_dimension())

    def embed(self, texts: Sequence[str]) -> tuple[np.ndarray, list[bool]]:
        vectors = self._model.encode(list(texts), convert_to_numpy=True,
                                     show_progress_bar=False)
        limit = int(self._model.get_max_seq_length())
        tokenizer = self._model.tokenizer
        truncated = [len(tokenizer(text)["input_ids"]) > limit for text in texts]
        return np.asarray(vectors, dtype=np.float64), truncated


def load_backend(name: str, model: str = DEFAULT_MODEL,
                 dimension: int = 384) -> Backend:
    if name == "hash":
        return HashBackend(dimension=dimension)
    if name == "sentence-transformers":
        return SentenceTransformerBackend(model)
    raise ValueError(f"unknown backend {name!r}")
