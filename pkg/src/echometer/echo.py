"""Echo metrics: per-day sufficiently-similar counts and the raw /
proportional deltas, plus batch summaries and window-sensitivity views.

delta_raw is the mean daily count of sufficiently similar utterances in
the post-release window minus the same mean over the pre-release window.
delta_prop computes the same difference on per-day fractions |S_i|/T_i,
normalising for background volume.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from datetime import date, timedelta
from typing import Iterable, Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .corpus import Document, UtteranceStore

WINDOW_SIZES = (1, 3, 7)


class CoverageError(Exception):
    """The utterance corpus does not span every day of the window."""

    def __init__(self, document_id: str, missing: Sequence[date]):
        self.document_id = document_id
        self.missing = list(missing)
        days = ", ".join(d.isoformat() for d in self.missing)
        super().__init__(f"document {document_id!r} missing coverage for: {days}")


class UndefinedEchoError(Exception):
    """delta_prop is undefined: a window retained no nonzero-volume day."""

    def __init__(self, document_id: str, window: str):
        self.document_id = document_id
        super().__init__(
            f"document {document_id!r}: every {window}-window day has zero volume")


@dataclass(frozen=True)
class WindowConfig:
    """Threshold and window sizes for one echo computation."""

    threshold: float = 0.7
    pre_days: int = 7
    post_days: int = 3
    include_release_in_post: bool = True

    def __post_init__(self) -> None:
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must lie strictly between 0 and 1")
        if self.pre_days < 1 or self.post_days < 1:
            raise ValueError("window sizes must be at least 1 day")


@dataclass(frozen=True)
class DailySimilarCount:
    day: date
    similar: int
    total: int

    def __post_init__(self) -> None:
        if self.similar > self.total:
            raise ValueError(f"{self.day}: similar count {self.similar} exceeds total {self.total}")


@dataclass
class EchoScore:
    """Per-document echo result."""

    document_id: str
    org: str
    release_date: date
    delta_raw: float
    delta_prop: float
    daily: list[DailySimilarCount]
    config: WindowConfig
    no_similar_tweets: bool
    excluded_zero_volume_days: int


def window_days(release_date: date, config: WindowConfig) -> tuple[list[date], list[date]]:
    """Pre- and post-release day lists; disjoint by construction."""
    pre = [release_date - timedelta(days=d) for d in range(config.pre_days, 0, -1)]
    if config.include_release_in_post:
        post = [release_date + timedelta(days=d) for d in range(config.post_days)]
    else:
        post = [release_date + timedelta(days=d) for d in range(1, config.post_days + 1)]
    return pre, post


def similar_count(doc_embedding: np.ndarray, utterance_embeddings: np.ndarray,
                  threshold: float) -> int:
    """Utterances whose cosine to the document strictly exceeds threshold."""
    doc = np.asarray(doc_embedding, dtype=np.float64)
    if len(utterance_embeddings) == 0:
        return 0
    matrix = np.asarray(utterance_embeddings, dtype=np.float64)
    if matrix.shape[1] != doc.shape[0]:
        raise ValueError(f"dimension mismatch: {matrix.shape[1]} vs {doc.shape[0]}")
    doc_norm = np.linalg.norm(doc)
    if doc_norm == 0.0:
        return 0
    norms = np.linalg.norm(matrix, axis=1)
    sims = np.zeros(len(matrix))
    nonzero = norms > 0.0
    sims[nonzero] = matrix[nonzero] @ doc / (norms[nonzero] * doc_norm)
    return int(np.sum(sims > threshold))


def delta_raw(pre: Sequence[DailySimilarCount], post: Sequence[DailySimilarCount]) -> float:
    """Mean post similar count minus mean pre similar count."""
    if not pre or not post:
        raise ValueError("both windows must contain at least one day")
    return float(np.mean([c.similar for c in post]) - np.mean([c.similar for c in pre]))


def _ratio_mean(counts: Sequence[DailySimilarCount]) -> tuple[float | None, int]:
    ratios = [c.similar / c.total for c in counts if c.total > 0]
    excluded = len(counts) - len(ratios)
    if not ratios:
        return None, excluded
    return float(np.mean(ratios)), excluded


def delta_prop(pre: Sequence[DailySimilarCount], post: Sequence[DailySimilarCount],
               document_id: str = "?") -> float:
    """Difference of mean per-day similar fractions, post minus pre.

    Zero-volume days are excluded from their window's mean; a window left
    with no days raises UndefinedEchoError.
    """
    if not pre or not post:
        raise ValueError("both windows must contain at least one day")
    pre_mean, _ = _ratio_mean(pre)
    post_mean, _ = _ratio_mean(post)
    if pre_mean is None:
        raise UndefinedEchoError(document_id, "pre")
    if post_mean is None:
        raise UndefinedEchoError(document_id, "post")
    return post_mean - pre_mean


@dataclass
class EmbeddingStore:
    """Document and utterance vectors keyed by entity id."""

    document_vectors: Mapping[str, np.ndarray]
    utterance_vectors: Mapping[str, np.ndarray]


def _daily_counts(document: Document, store: UtteranceStore,
                  embeddings: EmbeddingStore, days: Sequence[date],
                  threshold: float) -> list[DailySimilarCount]:
    doc_vec = embeddings.document_vectors[document.id]
    result = []
    for day in days:
        utterances = store.on_day(day)
        if utterances:
            matrix = np.stack([embeddings.utterance_vectors[u.id] for u in utterances])
            similar = similar_count(doc_vec, matrix, threshold)
        else:
            similar = 0
        result.append(DailySimilarCount(day, similar, len(utterances)))
    return result


def compute_echo(document: Document, store: UtteranceStore,
                 embeddings: EmbeddingStore, config: WindowConfig) -> EchoScore:
    """Assemble per-day counts over both windows and both deltas.

    Coverage means the corpus day span includes every window day; days
    inside the span with no utterances are zero-volume, not missing.
    """
    pre_days, post_days = window_days(document.release_date, config)
    covered = store.day_index.days()
    if not covered:
        raise CoverageError(document.id, pre_days + post_days)
    lo, hi = covered[0], covered[-1]
    missing = [d for d in pre_days + post_days if d < lo or d > hi]
    if missing:
        raise CoverageError(document.id, missing)

    pre = _daily_counts(document, store, embeddings, pre_days, config.threshold)
    post = _daily_counts(document, store, embeddings, post_days, config.threshold)
    pre_mean, pre_excluded = _ratio_mean(pre)
    post_mean, post_excluded = _ratio_mean(post)
    if pre_mean is None:
        raise UndefinedEchoError(document.id, "pre")
    if post_mean is None:
        raise UndefinedEchoError(document.id, "post")
    return EchoScore(
        document_id=document.id,
        org=document.org,
        release_date=document.release_date,
        delta_raw=delta_raw(pre, post),
        delta_prop=post_mean - pre_mean,
        daily=pre + post,
        config=config,
        no_similar_tweets=all(c.similar == 0 for c in pre + post),
        excluded_zero_volume_days=pre_excluded + post_excluded,
    )


PERCENTILES = (50, 90, 95, 97)


@dataclass
class BatchSummary:
    """Distribution summary over scored documents."""

    scored: int
    no_similar_count: int
    no_similar_fraction: float
    delta_raw_percentiles: dict[str, float]
    delta_prop_percentiles: dict[str, float]
    pearson_r: float | None
    failures: list[str] = field(default_factory=list)


@dataclass
class BatchResult:
    scores: list[EchoScore]
    summary: BatchSummary


def _percentile_table(values: Sequence[float]) -> dict[str, float]:
    if not values:
        return {}
    arr = np.asarray(values, dtype=np.float64)
    table = {f"p{p}": float(np.percentile(arr, p)) for p in PERCENTILES}
    table["max"] = float(arr.max())
    return table


def batch_echo(documents: Sequence[Document], store: UtteranceStore,
               embeddings: EmbeddingStore, config: WindowConfig) -> BatchResult:
    """Score every document; coverage and undefined-delta failures are
    reported in the summary, never fatal."""
    scores: list[EchoScore] = []
    failures: list[str] = []
    for doc in documents:
        try:
            scores.append(compute_echo(doc, store, embeddings, config))
        except (CoverageError, UndefinedEchoError) as exc:
            failures.append(str(exc))
    with_similar = [s for s in scores if not s.no_similar_tweets]
    no_similar = len(scores) - len(with_similar)
    raws = [s.delta_raw for s in with_similar]
    props = [s.delta_prop for s in with_similar]
    pearson_r = None
    if len(raws) >= 2 and np.std(raws) > 0 and np.std(props) > 0:
        pearson_r = pearson(raws, props)
    summary = BatchSummary(
        scored=len(scores),
        no_similar_count=no_similar,
        no_similar_fraction=no_similar / len(scores) if scores else 0.0,
        delta_raw_percentiles=_percentile_table(raws),
        delta_prop_percentiles=_percentile_table(props),
        pearson_r=pearson_r,
        failures=failures,
    )
    return BatchResult(scores, summary)


def window_sensitivity(document: Document, store: UtteranceStore,
                       embeddings: EmbeddingStore, base_config: WindowConfig,
                       sizes: Sequence[int] = WINDOW_SIZES,
                       ) -> dict[tuple[int, int], tuple[float, float | None]]:
    """(delta_raw, delta_prop) for every pre x post window-size combination.

    Cells where delta_prop is undefined hold None in the second slot.
    """
    result: dict[tuple[int, int], tuple[float, float | None]] = {}
    for pre in sizes:
        for post in sizes:
            config = WindowConfig(threshold=base_config.threshold, pre_days=pre,
                                  post_days=post,
                                  include_release_in_post=base_config.include_release_in_post)
            try:
                score = compute_echo(document, store, embeddings, config)
                result[(pre, post)] = (score.delta_raw, score.delta_prop)
            except UndefinedEchoError:
                pre_w, post_w = window_days(document.release_date, config)
                counts_pre = _daily_counts(document, store, embeddings, pre_w, config.threshold)
                counts_post = _daily_counts(document, store, embeddings, post_w, config.threshold)
                result[(pre, post)] = (delta_raw(counts_pre, counts_post), None)
    return result


def pearson(xs: Sequence[float], ys: Sequence[float],
            permutations: int = 0, seed: int = 0) -> float | tuple[float, float]:
    """Sample Pearson correlation; optional seeded permutation p-value."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if len(xs) != len(ys):
        raise ValueError("length mismatch")
    if len(xs) < 2:
        raise ValueError("pearson requires at least two points")
    if np.std(xs) == 0.0 or np.std(ys) == 0.0:
        raise ValueError("pearson is undefined for zero-variance input")
    r = float(np.corrcoef(xs, ys)[0, 1])
    if permutations <= 0:
        return r
    rng = np.random.default_rng(seed)
    hits = 0
    for _ in range(permutations):
        perm = rng.permutation(ys)
        if np.std(perm) == 0.0:
            continue
        if abs(float(np.corrcoef(xs, perm)[0, 1])) >= abs(r):
            hits += 1
    return r, (hits + 1) / (permutations + 1)


class EchoAnalyzer(BaseEstimator):
    """Estimator-style front door: configure once, fit the utterance
    corpus and embeddings, then transform documents into EchoScores."""

    def __init__(self, threshold: float = 0.7, pre_days: int = 7, post_days: int = 3,
                 include_release_in_post: bool = True):
        self.threshold = threshold
        self.pre_days = pre_days
        self.post_days = post_days
        self.include_release_in_post = include_release_in_post

    def _config(self) -> WindowConfig:
        return WindowConfig(self.threshold, self.pre_days, self.post_days,
                            self.include_release_in_post)

    def fit(self, store: UtteranceStore, embeddings: EmbeddingStore) -> "EchoAnalyzer":
        self._config()  # validates parameters
        self.store_ = store
        self.embeddings_ = embeddings
        return self

    def transform(self, documents: Sequence[Document]) -> BatchResult:
        if not hasattr(self, "store_"):
            raise RuntimeError("EchoAnalyzer must be fitted before transform")
        return batch_echo(documents, self.store_, self.embeddings_, self._config())

    def score_document(self, document: Document) -> EchoScore:
        if not hasattr(self, "store_"):
            raise RuntimeError("EchoAnalyzer must be fitted before scoring")
        return compute_echo(document, self.store_, self.embeddings_, self._config())


def write_echo_report(scores: Sequence[EchoScore], path, header_lines: Sequence[str] = ()) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        for line in header_lines:
            handle.write(f"# {line}\n")
        writer = csv.writer(handle)
        writer.writerow(["document_id", "org", "release_date", "delta_raw", "delta_prop",
                         "no_similar_tweets", "excluded_zero_volume_days"])
        for s in scores:
            writer.writerow([s.document_id, s.org, s.release_date.isoformat(),
                             repr(s.delta_raw), repr(s.delta_prop),
                             str(s.no_similar_tweets).lower(), s.excluded_zero_volume_days])


def write_daily_report(scores: Sequence[EchoScore], path, header_lines: Sequence[str] = ()) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        for line in header_lines:
            handle.write(f"# {line}\n")
        writer = csv.writer(handle)
        writer.writerow(["document_id", "day", "similar_count", "total_count"])
        for s in scores:
            for c in s.daily:
                writer.writerow([s.document_id, c.day.isoformat(), c.similar, c.total])


def write_summary_report(summary: BatchSummary, path, header_lines: Sequence[str] = ()) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for line in header_lines:
            handle.write(f"# {line}\n")
        handle.write(f"scored: {summary.scored}\n")
        handle.write(f"no_similar_count: {summary.no_similar_count}\n")
        handle.write(f"no_similar_fraction: {summary.no_similar_fraction:.6f}\n")
        for name, table in (("delta_raw", summary.delta_raw_percentiles),
                            ("delta_prop", summary.delta_prop_percentiles)):
            for key, value in table.items():
                handle.write(f"{name}_{key}: {value!r}\n")
        handle.write(f"pearson_r: {summary.pearson_r!r}\n")
        for failure in summary.failures:
            handle.write(f"failure: {failure}\n")


def write_sensitivity_report(
    cells: Mapping[str, Mapping[tuple[int, int], tuple[float, float | None]]],
    path, header_lines: Sequence[str] = (),
) -> None:
    """Long-format CSV: one row per document per (pre, post) combination."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        for line in header_lines:
            handle.write(f"# {line}\n")
        writer = csv.writer(handle)
        writer.writerow(["document_id", "pre_days", "post_days", "delta_raw", "delta_prop"])
        for doc_id, matrix in cells.items():
            for (pre, post), (draw, dprop) in sorted(matrix.items()):
                writer.writerow([doc_id, pre, post, repr(draw),
                                 "" if dprop is None else repr(dprop)])
