"""Similarity-threshold calibration: binned pair sampling for human
labelling and threshold sweeps scored by accuracy, F1 and adjusted Rand
index.
"""

from __future__ import annotations

import csv
import random
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

DEFAULT_BIN_EDGES = tuple(0.5 + 0.05 * i for i in range(7))  # 0.5 .. 0.8
DEFAULT_GRID = tuple(np.linspace(0.0, 1.0, 201).tolist())


class CalibrationError(Exception):
    """Sampling precondition failure (insufficient eligible documents, ...)."""


@dataclass(frozen=True)
class PairCandidate:
    """One (document, utterance) pair available for sampling."""

    utterance_id: str
    text: str
    score: float


@dataclass(frozen=True)
class SampledPair:
    pair_id: str
    document_id: str
    utterance_id: str


def bin_counts(pairs: Iterable[PairCandidate],
               edges: Sequence[float] = DEFAULT_BIN_EDGES) -> list[int]:
    """Per-bin counts of unique utterance texts with score in [lo, hi).

    The final bin is closed on the right. Duplicate texts count once.
    """
    if any(b <= a for a, b in zip(edges, edges[1:])):
        raise ValueError("bin edges must be strictly increasing")
    seen: set[str] = set()
    counts = [0] * (len(edges) - 1)
    for pair in pairs:
        if pair.text in seen:
            continue
        seen.add(pair.text)
        idx = _bin_index(pair.score, edges)
        if idx is not None:
            counts[idx] += 1
    return counts


def _bin_index(score: float, edges: Sequence[float]) -> int | None:
    if score < edges[0] or score > edges[-1]:
        return None
    if score == edges[-1]:
        return len(edges) - 2
    for i in range(len(edges) - 1):
        if edges[i] <= score < edges[i + 1]:
            return i
    return None


def eligible_documents(counts_by_doc: Mapping[str, Sequence[int]],
                       min_per_bin: int = 4) -> set[str]:
    """Documents whose every bin holds at least min_per_bin unique texts."""
    return {doc for doc, counts in counts_by_doc.items()
            if counts and all(c >= min_per_bin for c in counts)}


def sample_label_pairs(
    doc_org: Mapping[str, str],
    candidates: Mapping[str, Sequence[PairCandidate]],
    edges: Sequence[float] = DEFAULT_BIN_EDGES,
    per_org: int = 4,
    per_bin: int = 4,
    seed: int = 0,
) -> list[SampledPair]:
    """Sample labelling pairs: per_org eligible documents from every org,
    then per_bin unique utterance texts from each similarity bin.

    Sampling is uniform without replacement and fully determined by the
    seed; the output order is shuffled so coders never see score order.
    """
    counts_by_doc = {doc: bin_counts(cands, edges) for doc, cands in candidates.items()}
    eligible = eligible_documents(counts_by_doc, min_per_bin=per_bin)
    by_org: dict[str, list[str]] = {}
    for doc in sorted(eligible):
        org = doc_org.get(doc)
        if org is None:
            raise CalibrationError(f"document {doc!r} has no organisation")
        by_org.setdefault(org, []).append(doc)

    rng = random.Random(seed)
    pairs: list[tuple[str, str]] = []
    for org in sorted(set(doc_org.values())):
        docs = by_org.get(org, [])
        if len(docs) < per_org:
            raise CalibrationError(
                f"organisation {org!r} has {len(docs)} eligible documents, needs {per_org}")
        for doc in sorted(rng.sample(docs, per_org)):
            binned: dict[int, list[PairCandidate]] = {}
            seen_texts: set[str] = set()
            for cand in candidates[doc]:
                if cand.text in seen_texts:
                    continue
                seen_texts.add(cand.text)
                idx = _bin_index(cand.score, edges)
                if idx is not None:
                    binned.setdefault(idx, []).append(cand)
            for idx in range(len(edges) - 1):
                for cand in rng.sample(binned.get(idx, []), per_bin):
                    pairs.append((doc, cand.utterance_id))
    rng.shuffle(pairs)
    return [SampledPair(f"p{i:05d}", doc, utt) for i, (doc, utt) in enumerate(pairs)]


def _check_lengths(labels: Sequence[int], predictions: Sequence[int], minimum: int = 1) -> None:
    if len(labels) != len(predictions):
        raise ValueError(f"length mismatch: {len(labels)} labels vs {len(predictions)} predictions")
    if len(labels) < minimum:
        raise ValueError(f"need at least {minimum} labelled pairs")


def accuracy(labels: Sequence[int], predictions: Sequence[int]) -> float:
    """Fraction of positions where prediction equals label."""
    _check_lengths(labels, predictions)
    return float(np.mean(np.asarray(labels) == np.asarray(predictions)))


def f1(labels: Sequence[int], predictions: Sequence[int], positive: int = 1) -> float:
    """Harmonic mean of precision and recall; 0 when both are 0."""
    _check_lengths(labels, predictions)
    y = np.asarray(labels) == positive
    p = np.asarray(predictions) == positive
    tp = int(np.sum(y & p))
    fp = int(np.sum(~y & p))
    fn = int(np.sum(y & ~p))
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2.0 * precision * recall / (precision + recall)


def adjusted_rand_index(labels: Sequence[int], predictions: Sequence[int]) -> float:
    """Chance-corrected pair-counting agreement of two binary partitions.

    1 for identical partitions (including a 0/1 relabelling), 0 when the
    maximum index equals its expectation under chance.
    """
    _check_lengths(labels, predictions, minimum=2)
    y = np.asarray(labels)
    p = np.asarray(predictions)
    if np.array_equal(y == 1, p == 1) or np.array_equal(y == 1, p == 0):
        return 1.0

    def comb2(x: np.ndarray) -> float:
        return float(np.sum(x * (x - 1) / 2.0))

    classes_y = np.unique(y)
    classes_p = np.unique(p)
    contingency = np.array([[np.sum((y == cy) & (p == cp)) for cp in classes_p]
                            for cy in classes_y], dtype=np.float64)
    index = comb2(contingency)
    sum_a = comb2(contingency.sum(axis=1))
    sum_b = comb2(contingency.sum(axis=0))
    n = len(y)
    expected = sum_a * sum_b / (n * (n - 1) / 2.0)
    maximum = (sum_a + sum_b) / 2.0
    if maximum == expected:
        return 0.0
    return float((index - expected) / (maximum - expected))


@dataclass
class CalibrationCurve:
    """Metric values across a threshold grid for one similarity method."""

    method: str
    thresholds: list[float]
    accuracy: list[float]
    f1: list[float]
    ari: list[float]
    best_thresholds: dict[str, float] = field(default_factory=dict)

    def rows(self) -> Iterable[tuple]:
        for t, a, f, r in zip(self.thresholds, self.accuracy, self.f1, self.ari):
            yield (t, self.method, a, f, r)


def threshold_sweep(
    scores: Sequence[float],
    labels: Sequence[int],
    method: str = "embedding",
    grid: Sequence[float] = DEFAULT_GRID,
) -> CalibrationCurve:
    """Score every candidate threshold; prediction is (score > threshold)."""
    if len(scores) != len(labels):
        raise ValueError("scores and labels must have equal lengths")
    if not scores:
        raise ValueError("threshold_sweep requires at least one labelled pair")
    scores_arr = np.asarray(scores, dtype=np.float64)
    labels_arr = np.asarray(labels)
    curve = CalibrationCurve(method, list(grid), [], [], [])
    for t in grid:
        preds = (scores_arr > t).astype(int)
        curve.accuracy.append(accuracy(labels_arr, preds))
        curve.f1.append(f1(labels_arr, preds))
        curve.ari.append(adjusted_rand_index(labels_arr, preds) if len(labels_arr) >= 2 else 0.0)
    for name, values in (("accuracy", curve.accuracy), ("f1", curve.f1), ("ari", curve.ari)):
        curve.best_thresholds[name] = curve.thresholds[int(np.argmax(values))]
    return curve


def write_label_export(pairs: Sequence[SampledPair], doc_texts: Mapping[str, str],
                       utt_texts: Mapping[str, str], path,
                       header_lines: Sequence[str] = ()) -> None:
    """Labelling CSV for the coders; similarity scores are withheld."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        for line in header_lines:
            handle.write(f"# {line}\n")
        writer = csv.writer(handle, quoting=csv.QUOTE_ALL)
        writer.writerow(["pair_id", "document_id", "utterance_id",
                         "document_text", "utterance_text"])
        for pair in pairs:
            writer.writerow([pair.pair_id, pair.document_id, pair.utterance_id,
                             doc_texts[pair.document_id], utt_texts[pair.utterance_id]])


def read_labels(path) -> dict[str, int]:
    """Read the adjudicated label file: pair_id, coder1, coder2, final."""
    labels: dict[str, int] = {}
    with open(path, encoding="utf-8", newline="") as handle:
        rows = [line for line in handle if not line.startswith("#")]
        reader = csv.DictReader(rows)
        required = {"pair_id", "coder1", "coder2", "final"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise CalibrationError(f"label file must have columns {sorted(required)}")
        for row in reader:
            final = row["final"].strip()
            if final not in {"0", "1"}:
                raise CalibrationError(f"pair {row['pair_id']!r}: final label must be 0 or 1")
            labels[row["pair_id"]] = int(final)
    return labels


def write_curves(curves: Sequence[CalibrationCurve], path,
                 header_lines: Sequence[str] = ()) -> None:
    """Curve CSV: threshold, method, accuracy, f1, ari."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        for line in header_lines:
            handle.write(f"# {line}\n")
        writer = csv.writer(handle)
        writer.writerow(["threshold", "method", "accuracy", "f1", "ari"])
        for curve in curves:
            for threshold, method, acc, f1_val, ari in curve.rows():
                writer.writerow([repr(threshold), method, repr(acc), repr(f1_val), repr(ari)])
