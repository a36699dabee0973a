"""End-to-end acceptance checks.

Each test prints a single PASS/FAIL line for its criterion. Oracles are
implemented independently of the package code they check: plain-Python
loops and Fraction arithmetic instead of the vectorised production paths.
"""

import functools
import math
import random
import time
from datetime import date, datetime, timedelta, timezone
from fractions import Fraction

import numpy as np
import pytest

from echometer import textsim
from echometer.calibrate import (DEFAULT_BIN_EDGES, PairCandidate, accuracy,
                                 adjusted_rand_index, f1, sample_label_pairs,
                                 threshold_sweep)
from echometer.cli import EXIT_OK, main
from echometer.corpus import Document, Utterance, UtteranceStore
from echometer.echo import (EmbeddingStore, WindowConfig, batch_echo,
                            compute_echo, similar_count, window_sensitivity)
from echometer.embedder import ReferenceEmbedder
from echometer.stemmer import stem

from conftest import WORDS, write_jsonl
from test_stemmer import REFERENCE as STEMMER_REFERENCE

RELEASE = date(2021, 6, 15)
UTC = timezone.utc


def criterion(number: int, name: str):
    def decorate(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            try:
                fn(*args, **kwargs)
            except BaseException:
                print(f"\ncriterion {number} ({name}): FAIL")
                raise
            print(f"\ncriterion {number} ({name}): PASS")
        return wrapper
    return decorate


def make_document(doc_id: str, body: str = "x.", release: date = RELEASE,
                  org: str = "org") -> Document:
    return Document.build(id=doc_id, org=org, url="http://x", release_date=release,
                          title="", body=body)


def build_store(texts_by_day: dict[date, list[str]]) -> tuple[UtteranceStore, list[str]]:
    """One utterance per text, ids in insertion order."""
    store = UtteranceStore()
    ids = []
    n = 0
    for day in sorted(texts_by_day):
        for text in texts_by_day[day]:
            uid = f"u{n:06d}"
            store.add(Utterance.build(uid, text,
                                      datetime(day.year, day.month, day.day,
                                               12, 0, tzinfo=UTC)))
            ids.append(uid)
            n += 1
    return store, ids


# --- criterion 1: brute-force oracle ------------------------------------

def oracle_cosine(a, b):
    dot = sum(x * y for x, y in zip(a, b))
    na = math.sqrt(sum(x * x for x in a))
    nb = math.sqrt(sum(x * x for x in b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return dot / (na * nb)


def oracle_echo(doc_vec, utts_by_day, vectors, release, cfg):
    """Pair-at-a-time recomputation of both deltas and per-day counts."""
    pre_days = [release - timedelta(days=d) for d in range(cfg.pre_days, 0, -1)]
    start = 0 if cfg.include_release_in_post else 1
    post_days = [release + timedelta(days=d)
                 for d in range(start, start + cfg.post_days)]

    def day_count(day):
        ids = utts_by_day.get(day, [])
        similar = sum(1 for uid in ids
                      if oracle_cosine(doc_vec, vectors[uid]) > cfg.threshold)
        return similar, len(ids)

    pre = [day_count(d) for d in pre_days]
    post = [day_count(d) for d in post_days]
    d_raw = sum(s for s, _ in post) / len(post) - sum(s for s, _ in pre) / len(pre)
    pre_ratios = [Fraction(s, t) for s, t in pre if t > 0]
    post_ratios = [Fraction(s, t) for s, t in post if t > 0]
    d_prop = float(sum(post_ratios) / len(post_ratios)
                   - sum(pre_ratios) / len(pre_ratios))
    return d_raw, d_prop, pre + post


@criterion(1, "brute-force oracle equivalence")
def test_oracle_equivalence_on_random_corpora():
    started = time.monotonic()
    rng = random.Random(20210615)
    for trial in range(100):
        dim = rng.randint(3, 8)
        n_docs = rng.randint(3, 20)
        n_utts = rng.randint(60, 1000)
        cfg = WindowConfig(threshold=rng.uniform(0.1, 0.9),
                           pre_days=rng.choice((1, 3, 7)),
                           post_days=rng.choice((1, 3, 7)),
                           include_release_in_post=rng.random() < 0.5)
        span = [RELEASE + timedelta(days=d) for d in range(-7, 8)]

        store = UtteranceStore()
        utts_by_day: dict[date, list[str]] = {}
        vectors = {}
        for i in range(n_utts):
            # the first len(span) utterances guarantee full coverage
            day = span[i] if i < len(span) else rng.choice(span)
            uid = f"u{trial}_{i}"
            store.add(Utterance.build(uid, "t", datetime(day.year, day.month,
                                                         day.day, 1, tzinfo=UTC)))
            utts_by_day.setdefault(day, []).append(uid)
            vectors[uid] = [rng.gauss(0, 1) for _ in range(dim)]

        doc_vectors = {f"d{j}": [rng.gauss(0, 1) for _ in range(dim)]
                       for j in range(n_docs)}
        embeddings = EmbeddingStore(
            document_vectors={k: np.array(v) for k, v in doc_vectors.items()},
            utterance_vectors={k: np.array(v) for k, v in vectors.items()})

        for doc_id, doc_vec in doc_vectors.items():
            doc = make_document(doc_id)
            score = compute_echo(doc, store, embeddings, cfg)
            d_raw, d_prop, daily = oracle_echo(doc_vec, utts_by_day, vectors,
                                               RELEASE, cfg)
            assert [(c.similar, c.total) for c in score.daily] == daily
            assert abs(score.delta_raw - d_raw) <= 1e-12
            assert abs(score.delta_prop - d_prop) <= 1e-12
    assert time.monotonic() - started < 60.0


# --- criterion 2: injected-echo recovery ---------------------------------

@criterion(2, "injected-echo recovery")
def test_injected_echo_recovery(reference_embedder):
    rng = random.Random(99)
    injections = {"inj1": 1, "inj5": 5, "inj50": 50}
    quiet = ["q0", "q1", "q2"]
    vocab = list(WORDS)
    rng.shuffle(vocab)
    doc_words = {doc_id: [vocab.pop() for _ in range(10)]
                 for doc_id in [*injections, *quiet]}
    background_vocab = vocab  # disjoint from every document

    documents = {doc_id: make_document(doc_id, " ".join(words) + ".")
                 for doc_id, words in doc_words.items()}
    cfg = WindowConfig()
    post_days = {RELEASE + timedelta(days=d) for d in range(cfg.post_days)}

    total_per_day = 200
    texts_by_day: dict[date, list[str]] = {}
    for offset in range(-7, 3):
        day = RELEASE + timedelta(days=offset)
        texts = []
        if day in post_days:
            for doc_id, k in injections.items():
                texts.extend([documents[doc_id].body[:-1]] * k)
        while len(texts) < total_per_day:
            texts.append(" ".join(rng.sample(background_vocab, 6)))
        texts_by_day[day] = texts
    store, ids = build_store(texts_by_day)

    doc_vecs = {doc_id: reference_embedder.embed(doc.sentences[0])
                for doc_id, doc in documents.items()}
    utt_vecs = {u.id: reference_embedder.embed(u.text) for u in store}
    embeddings = EmbeddingStore(doc_vecs, utt_vecs)

    result = batch_echo(list(documents.values()), store, embeddings, cfg)
    by_id = {s.document_id: s for s in result.scores}
    for doc_id, k in injections.items():
        assert abs(by_id[doc_id].delta_raw - k) <= 1e-9
        assert abs(by_id[doc_id].delta_prop - k / total_per_day) <= 1e-9
    for doc_id in quiet:
        assert by_id[doc_id].delta_raw == 0.0
        assert by_id[doc_id].delta_prop == 0.0
        assert by_id[doc_id].no_similar_tweets
    ranked = sorted(result.scores, key=lambda s: s.delta_raw, reverse=True)
    assert [s.document_id for s in ranked[:3]] == ["inj50", "inj5", "inj1"]


# --- criterion 3: pre-release spike anomaly ------------------------------

@criterion(3, "pre-release spike window anomaly")
def test_pre_release_spike_is_matrix_minimum():
    spike = {-1: 50, 0: 30}
    store = UtteranceStore()
    utt_vecs = {}
    n = 0
    for offset in range(-7, 8):
        day = RELEASE + timedelta(days=offset)
        n_similar = spike.get(offset, 0)
        for j in range(60):
            uid = f"u{n}"
            n += 1
            store.add(Utterance.build(uid, "t", datetime(day.year, day.month,
                                                         day.day, 1, tzinfo=UTC)))
            utt_vecs[uid] = np.array([1.0, 0.0]) if j < n_similar else \
                np.array([0.0, 1.0])
    doc = make_document("d")
    embeddings = EmbeddingStore({"d": np.array([1.0, 0.0])}, utt_vecs)

    sens = window_sensitivity(doc, store, embeddings, WindowConfig(threshold=0.5))
    assert len(sens) == 9
    anomaly_raw, anomaly_prop = sens[(1, 7)]
    for cell, (d_raw, d_prop) in sens.items():
        if cell == (1, 7):
            continue
        assert anomaly_raw < d_raw
        assert anomaly_prop < d_prop
    assert anomaly_raw < 0


# --- criterion 4: metric invariants --------------------------------------

def random_window_case(rng):
    cfg = WindowConfig(threshold=rng.uniform(0.1, 0.9),
                       pre_days=rng.choice((1, 3, 7)),
                       post_days=rng.choice((1, 3, 7)))
    def counts(n):
        out = []
        for _ in range(n):
            total = rng.randint(1, 500)
            out.append((rng.randint(0, total), total))
        return out
    return cfg, counts(cfg.pre_days), counts(cfg.post_days)


def deltas_from_counts(pre, post):
    from echometer.echo import DailySimilarCount, delta_prop, delta_raw
    day = RELEASE
    pre_c = [DailySimilarCount(day, s, t) for s, t in pre]
    post_c = [DailySimilarCount(day, s, t) for s, t in post]
    return delta_raw(pre_c, post_c), delta_prop(pre_c, post_c)


@criterion(4, "metric invariants over 1000 random cases each")
def test_metric_invariants():
    rng = random.Random(7)
    for _ in range(1000):
        cfg, pre, post = random_window_case(rng)
        d_raw, d_prop = deltas_from_counts(pre, post)

        # scale invariance: multiplying similar and total leaves d_prop alone
        c = rng.randint(2, 9)
        _, scaled_prop = deltas_from_counts([(s * c, t * c) for s, t in pre],
                                            [(s * c, t * c) for s, t in post])
        assert abs(scaled_prop - d_prop) <= 1e-12

        # volume invariance: changing totals leaves d_raw alone
        inflated_raw, _ = deltas_from_counts([(s, t + rng.randint(0, 100))
                                              for s, t in pre],
                                             [(s, t + rng.randint(0, 100))
                                              for s, t in post])
        assert inflated_raw == d_raw

        # antisymmetry under window swap
        swapped_raw, swapped_prop = deltas_from_counts(post, pre)
        assert swapped_raw == -d_raw
        assert abs(swapped_prop + d_prop) <= 1e-15

        # bounded proportions
        assert -1.0 <= d_prop <= 1.0

    for _ in range(1000):
        dim = rng.randint(2, 6)
        doc = np.array([rng.gauss(0, 1) for _ in range(dim)])
        utts = np.array([[rng.gauss(0, 1) for _ in range(dim)]
                         for _ in range(rng.randint(1, 40))])
        t1 = rng.uniform(-1, 1)
        t2 = rng.uniform(t1, 1)
        # raising the threshold can only shrink the similar set
        assert similar_count(doc, utts, t2) <= similar_count(doc, utts, t1)


# --- criterion 5: lexical oracle ------------------------------------------

# Pairwise cosines for the corpus {d1: a b c, d2: b c d, d3: c d e e},
# computed by hand at 40 decimal digits from the smoothed-idf weights
# idf(a) = idf(e) = ln(2) + 1, idf(b) = idf(d) = ln(4/3) + 1, idf(c) = 1.
TFIDF_DOCS = {"d1": ["a", "b", "c"], "d2": ["b", "c", "d"],
              "d3": ["c", "d", "e", "e"]}
TFIDF_EXPECTED = {
    ("d1", "d2"): 0.54432838510103684195,
    ("d1", "d3"): 0.11319907547001145893,
    ("d2", "d3"): 0.34042866489820904792,
}


@criterion(5, "lexical oracle: tf-idf, stemmer, jaccard")
def test_lexical_oracles():
    model = textsim.fit_tfidf(list(TFIDF_DOCS.values()))
    for (left, right), expected in TFIDF_EXPECTED.items():
        got = model.similarity(TFIDF_DOCS[left], TFIDF_DOCS[right])
        assert abs(got - expected) <= 1e-9

    for word, expected in STEMMER_REFERENCE.items():
        assert stem(word) == expected, word

    assert textsim.jaccard(["a", "b"], ["b", "c"]) == 1 / 3
    assert textsim.jaccard([], []) == 0.0
    assert textsim.jaccard(["a"], []) == 0.0
    assert textsim.jaccard(["a", "b"], ["b", "a", "a"]) == 1.0


# --- criterion 6: calibration oracle --------------------------------------

CALIB_SCORES = [0.12, 0.25, 0.31, 0.44, 0.52, 0.58, 0.63, 0.69, 0.72,
                0.78, 0.85, 0.93]
CALIB_LABELS = [0, 0, 1, 0, 0, 1, 1, 0, 1, 1, 1, 1]


def oracle_contingency_stats(labels, preds):
    n = len(labels)
    tp = sum(1 for y, p in zip(labels, preds) if y == 1 and p == 1)
    fp = sum(1 for y, p in zip(labels, preds) if y == 0 and p == 1)
    fn = sum(1 for y, p in zip(labels, preds) if y == 1 and p == 0)
    tn = n - tp - fp - fn
    acc = Fraction(tp + tn, n)
    f1_score = Fraction(0) if tp == 0 else Fraction(2 * tp, 2 * tp + fp + fn)

    if (fp == 0 and fn == 0) or (tp == 0 and tn == 0):
        ari = Fraction(1)
    else:
        def comb2(x):
            return Fraction(x * (x - 1), 2)
        index = comb2(tp) + comb2(fp) + comb2(fn) + comb2(tn)
        sum_a = comb2(tp + fn) + comb2(fp + tn)
        sum_b = comb2(tp + fp) + comb2(fn + tn)
        expected = Fraction(sum_a * sum_b, comb2(n))
        maximum = Fraction(sum_a + sum_b, 2)
        ari = Fraction(0) if maximum == expected else \
            (index - expected) / (maximum - expected)
    return acc, f1_score, ari


@criterion(6, "calibration sweep matches hand contingency oracle")
def test_threshold_sweep_contingency_oracle():
    curve = threshold_sweep(CALIB_SCORES, CALIB_LABELS)
    assert len(curve.thresholds) == 201
    for i, t in enumerate(curve.thresholds):
        preds = [1 if s > t else 0 for s in CALIB_SCORES]
        acc, f1_frac, ari = oracle_contingency_stats(CALIB_LABELS, preds)
        assert curve.accuracy[i] == float(acc)
        assert abs(curve.f1[i] - float(f1_frac)) <= 1e-12
        assert abs(curve.ari[i] - float(ari)) <= 1e-12

        # sanity against the module's own metric entry points
        assert curve.accuracy[i] == accuracy(CALIB_LABELS, preds)
        assert curve.f1[i] == f1(CALIB_LABELS, preds)
        assert curve.ari[i] == adjusted_rand_index(CALIB_LABELS, preds)

    # curves are constant outside the observed score range
    low = [i for i, t in enumerate(curve.thresholds) if t < min(CALIB_SCORES)]
    high = [i for i, t in enumerate(curve.thresholds) if t >= max(CALIB_SCORES)]
    for series in (curve.accuracy, curve.f1, curve.ari):
        assert len({series[i] for i in low}) == 1
        assert len({series[i] for i in high}) == 1


# --- criterion 7: sampling arithmetic --------------------------------------

def synthetic_calibration_inputs(n_orgs=10, docs_per_org=4):
    doc_org = {}
    candidates = {}
    centres = [(a + b) / 2 for a, b in zip(DEFAULT_BIN_EDGES, DEFAULT_BIN_EDGES[1:])]
    for o in range(n_orgs):
        for d in range(docs_per_org):
            doc_id = f"o{o}_d{d}"
            doc_org[doc_id] = f"org{o}"
            cands = []
            for b, centre in enumerate(centres):
                for j in range(5):  # one spare candidate per bin
                    cands.append(PairCandidate(
                        utterance_id=f"{doc_id}_b{b}_{j}",
                        text=f"{doc_id} bin{b} text{j}", score=centre))
            candidates[doc_id] = cands
    return doc_org, candidates


@criterion(7, "sampling arithmetic: 10 orgs yield 960 seeded pairs")
def test_sampling_arithmetic():
    doc_org, candidates = synthetic_calibration_inputs()
    first = sample_label_pairs(doc_org, candidates, seed=11)
    assert len(first) == 960  # 10 orgs x 4 docs x 6 bins x 4 pairs
    assert len({(p.document_id, p.utterance_id) for p in first}) == 960
    docs_per_org = {}
    for pair in first:
        org = doc_org[pair.document_id]
        docs_per_org.setdefault(org, set()).add(pair.document_id)
    assert all(len(docs) == 4 for docs in docs_per_org.values())

    again = sample_label_pairs(doc_org, candidates, seed=11)
    assert again == first
    other = sample_label_pairs(doc_org, candidates, seed=12)
    assert {(p.document_id, p.utterance_id) for p in other} != \
        {(p.document_id, p.utterance_id) for p in first}


# --- criterion 8: pipeline determinism --------------------------------------

@criterion(8, "pipeline determinism modulo timestamp header")
def test_pipeline_determinism(tmp_path):
    rng = random.Random(5)
    docs = [{"id": f"pr{i}", "org": "org0", "url": "http://x", "date": "2021-06-15",
             "title": "", "body": " ".join(rng.sample(WORDS, 12)) + "."}
            for i in range(4)]
    utts = []
    for offset in range(-7, 7):
        day = RELEASE + timedelta(days=offset)
        for j in range(12):
            text = docs[0]["body"][:-1] if 0 <= offset < 3 and j < 3 else \
                " ".join(rng.sample(WORDS, 6))
            utts.append({"id": f"t{len(utts):05d}", "text": text,
                         "created_at": day.isoformat() + "T08:00:00Z"})
    releases = tmp_path / "releases.jsonl"
    utterances = tmp_path / "utterances.jsonl"
    write_jsonl(releases, docs)
    write_jsonl(utterances, utts)

    outputs = []
    for name in ("a", "b"):
        out = tmp_path / name
        for args in (["ingest", "--releases", str(releases), "--utterances",
                      str(utterances), "--out-dir", str(out)],
                     ["embed", "--out-dir", str(out)],
                     ["echo", "--out-dir", str(out), "--sensitivity",
                      "--seed", "13"]):
            assert main(args) == EXIT_OK
        outputs.append(out)

    filenames = ("documents.jsonl", "utterances.jsonl", "echo_report.csv",
                 "echo_daily.csv", "echo_summary.txt", "echo_sensitivity.csv")
    for filename in filenames:
        lines = [
            [line for line in (out / filename).read_text().splitlines()
             if not line.startswith("# generated")]
            for out in outputs
        ]
        assert lines[0] == lines[1], filename
