import json
import random

import pytest

from echometer.embedder import ReferenceEmbedder
from echometer.textsim import cosine

WORDS = [f"zq{c}{d}" for c in "abcdefghijklmnop" for d in "abcdefghijklmnop"]


@pytest.fixture(scope="session")
def reference_embedder():
    return ReferenceEmbedder()


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record) + "\n")


def binned_utterance_texts(doc_text, embedder, rng, per_bin=4):
    """Search utterance texts whose cosine to doc_text fills every 0.05-wide
    similarity bin in [0.5, 0.8] with per_bin unique texts."""
    doc_vec = embedder.embed(doc_text)
    doc_tokens = doc_text.split()
    bins = {i: [] for i in range(6)}
    tries = 0
    while any(len(v) < per_bin for v in bins.values()):
        tries += 1
        if tries > 100_000:
            raise RuntimeError("could not fill similarity bins")
        if rng.random() < 0.5:
            tokens = list(doc_tokens)
            for pos in rng.sample(range(len(tokens)), rng.randint(1, 7)):
                tokens[pos] = rng.choice(WORDS)
        else:
            k = rng.randint(5, len(doc_tokens))
            tokens = rng.sample(doc_tokens, k) + rng.sample(WORDS, rng.randint(0, 6))
            rng.shuffle(tokens)
        text = " ".join(tokens)
        score = cosine(doc_vec, embedder.embed(text))
        if 0.5 <= score <= 0.8:
            idx = min(int((score - 0.5) / 0.05), 5)
            if len(bins[idx]) < per_bin and text not in bins[idx]:
                bins[idx].append(text)
    return [t for texts in bins.values() for t in texts]


def build_calibration_fixture(n_orgs, docs_per_org, seed=7, per_bin=4):
    """Synthetic corpora where every document is calibration-eligible.

    Returns (document records, utterance records) in the canonical
    line-delimited field layout. All utterances fall within a week of the
    shared release date.
    """
    rng = random.Random(seed)
    embedder = ReferenceEmbedder()
    release = "2020-02-18"
    doc_records, utt_records = [], []
    utt_no = 0
    for o in range(n_orgs):
        for d in range(docs_per_org):
            doc_id = f"pr-{o}-{d}"
            body = " ".join(rng.sample(WORDS, 14))
            doc_records.append({"id": doc_id, "org": f"org{o}", "url": f"http://x/{doc_id}",
                                "date": release, "title": "", "body": body})
            for text in binned_utterance_texts(body, embedder, rng, per_bin):
                day_offset = rng.randint(-7, 7)
                hour = rng.randint(0, 23)
                utt_records.append({
                    "id": f"t{utt_no:06d}",
                    "text": text,
                    "created_at": f"2020-02-{18 + day_offset:02d}T{hour:02d}:00:00+00:00",
                })
                utt_no += 1
    return doc_records, utt_records
