"""Lexical similarity baselines: tokenization, Jaccard, smoothed TF-IDF, cosine.

TF-IDF uses the smoothed logarithmic form idf(t) = ln((1+N)/(1+df(t))) + 1
with L2-normalised vectors, so pairwise similarities can be checked by hand.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from importlib import resources
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .stemmer import stem

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

TokenList = list[str]


def load_stopwords() -> frozenset[str]:
    """The fixed English stop-word list shipped with the package."""
    text = resources.files("echometer.data").joinpath("stopwords_en.txt").read_text("utf-8")
    return frozenset(w for w in text.split() if w)


_DEFAULT_STOPWORDS = None


def default_stopwords() -> frozenset[str]:
    global _DEFAULT_STOPWORDS
    if _DEFAULT_STOPWORDS is None:
        _DEFAULT_STOPWORDS = load_stopwords()
    return _DEFAULT_STOPWORDS


def tokenize_and_stem(text: str, stopwords: frozenset[str] | None = None) -> TokenList:
    """Lowercase, split on non-alphanumeric boundaries, drop stop words, stem."""
    if stopwords is None:
        stopwords = default_stopwords()
    tokens = _TOKEN_RE.findall(text.lower())
    return [stem(t) for t in tokens if t not in stopwords]


def jaccard(a: Iterable[str], b: Iterable[str]) -> float:
    """Intersection-over-union of the two token sets; 0 when both are empty."""
    sa, sb = set(a), set(b)
    union = sa | sb
    if not union:
        return 0.0
    return len(sa & sb) / len(union)


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity of two equal-dimension vectors; 0 if either is zero."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


@dataclass(frozen=True)
class SparseVector:
    """L2-normalised sparse vector with strictly increasing indices."""

    indices: tuple[int, ...]
    weights: tuple[float, ...]
    dimension: int

    def norm(self) -> float:
        return float(np.sqrt(sum(w * w for w in self.weights)))

    def dot(self, other: "SparseVector") -> float:
        if self.dimension != other.dimension:
            raise ValueError("dimension mismatch")
        i = j = 0
        acc = 0.0
        while i < len(self.indices) and j < len(other.indices):
            a, b = self.indices[i], other.indices[j]
            if a == b:
                acc += self.weights[i] * other.weights[j]
                i += 1
                j += 1
            elif a < b:
                i += 1
            else:
                j += 1
        return acc

    def cosine(self, other: "SparseVector") -> float:
        na, nb = self.norm(), other.norm()
        if na == 0.0 or nb == 0.0:
            return 0.0
        return self.dot(other) / (na * nb)


class TfidfModel(BaseEstimator):
    """Smoothed TF-IDF over pre-tokenized texts, sklearn estimator style.

    fit() learns vocabulary and idf weights; transform() maps token lists to
    L2-normalised SparseVectors. Immutable after fitting.
    """

    def fit(self, token_lists: Sequence[TokenList], y=None) -> "TfidfModel":
        token_lists = list(token_lists)
        if not token_lists:
            raise ValueError("cannot fit TF-IDF on an empty corpus")
        df: dict[str, int] = {}
        for tokens in token_lists:
            for t in set(tokens):
                df[t] = df.get(t, 0) + 1
        vocab = sorted(df)
        n = len(token_lists)
        self.vocabulary_ = {t: i for i, t in enumerate(vocab)}
        self.idf_ = np.array(
            [np.log((1.0 + n) / (1.0 + df[t])) + 1.0 for t in vocab], dtype=np.float64
        )
        self.corpus_size_ = n
        return self

    def _check_fitted(self) -> None:
        if not hasattr(self, "vocabulary_"):
            raise NotFittedError("TfidfModel must be fitted before use")

    def vector(self, tokens: TokenList) -> SparseVector:
        """Raw counts x idf, L2-normalised; out-of-vocabulary tokens ignored."""
        self._check_fitted()
        counts: dict[int, int] = {}
        for t in tokens:
            idx = self.vocabulary_.get(t)
            if idx is not None:
                counts[idx] = counts.get(idx, 0) + 1
        if not counts:
            return SparseVector((), (), len(self.vocabulary_))
        indices = sorted(counts)
        weights = np.array([counts[i] * self.idf_[i] for i in indices])
        weights /= np.linalg.norm(weights)
        return SparseVector(tuple(indices), tuple(weights.tolist()), len(self.vocabulary_))

    def transform(self, token_lists: Sequence[TokenList]) -> list[SparseVector]:
        return [self.vector(tokens) for tokens in token_lists]

    def fit_transform(self, token_lists: Sequence[TokenList], y=None) -> list[SparseVector]:
        return self.fit(token_lists).transform(token_lists)

    def similarity(self, a: TokenList, b: TokenList) -> float:
        return self.vector(a).cosine(self.vector(b))

    def dump(self, path) -> None:
        """Audit artifact: one JSON line per vocabulary token with its idf."""
        self._check_fitted()
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(json.dumps({"corpus_size": self.corpus_size_}) + "\n")
            for token, idx in sorted(self.vocabulary_.items(), key=lambda kv: kv[1]):
                handle.write(json.dumps({"token": token, "index": idx,
                                         "idf": self.idf_[idx]}) + "\n")


def fit_tfidf(token_lists: Sequence[TokenList]) -> TfidfModel:
    return TfidfModel().fit(token_lists)


def tfidf_vector(model: TfidfModel, tokens: TokenList) -> SparseVector:
    return model.vector(tokens)


def lexical_doc_similarity(
    method: str,
    sentence_tokens: Sequence[TokenList],
    utterance_tokens: TokenList,
    model: TfidfModel | None = None,
) -> float:
    """Mean over document sentences of similarity(sentence, utterance).

    method is "jaccard" or "tfidf"; the latter requires a fitted model.
    """
    if not sentence_tokens:
        raise ValueError("document has no sentences")
    if method == "jaccard":
        sims = [jaccard(s, utterance_tokens) for s in sentence_tokens]
    elif method == "tfidf":
        if model is None:
            raise ValueError("tfidf similarity requires a fitted model")
        utt_vec = model.vector(utterance_tokens)
        sims = [model.vector(s).cosine(utt_vec) for s in sentence_tokens]
    else:
        raise ValueError(f"unknown method {method!r}")
    return float(np.mean(sims))
