"""Command-line surface: ingest -> embed -> calibrate/echo -> report.

Intermediates (canonical store, embedding cache) are persisted in the
output directory so the expensive embedding pass is resumable. Every
output file starts with a metadata header sufficient to reproduce the run.
"""

from __future__ import annotations

import csv
import hashlib
import json
import sys
from dataclasses import asdict, dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path

import click
import yaml

from . import __version__
from .calibrate import (CalibrationError, PairCandidate, read_labels,
                        sample_label_pairs, threshold_sweep, write_curves,
                        write_label_export)
from .corpus import (CorpusError, UtteranceStore, ingest_press_releases,
                     ingest_utterances, write_documents, write_error_report,
                     write_utterances)
from .echo import (EmbeddingStore, UndefinedEchoError, WindowConfig, batch_echo,
                   window_sensitivity, write_daily_report, write_echo_report,
                   write_sensitivity_report, write_summary_report)
from .embedder import (DEFAULT_DIMENSION, EmbeddingCache, ProtocolError,
                       ReferenceEmbedder, RemoteEmbedder, TransportError,
                       embed_corpus, mean_embedding)
from .textsim import TfidfModel, lexical_doc_similarity, tokenize_and_stem

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_TRANSPORT = 3


class DataError(Exception):
    """Input data is unusable for the requested command."""


@dataclass
class RunConfig:
    releases: str | None = None
    utterances: str | None = None
    out_dir: str = "out"
    provider: str = "reference"
    endpoint: str | None = None
    dimension: int = DEFAULT_DIMENSION
    threshold: float = 0.7
    pre_days: int = 7
    post_days: int = 3
    include_release: bool = True
    seed: int = 0
    grid_points: int = 201
    workers: int = 1

    def digest(self) -> str:
        # out_dir is an output location, not a semantic parameter; leaving
        # it out keeps the digest stable across runs into different dirs.
        payload = {k: v for k, v in asdict(self).items() if k != "out_dir"}
        blob = json.dumps(payload, sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:12]


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path, encoding="utf-8") as handle:
        data = yaml.safe_load(handle) or {}
    if not isinstance(data, dict):
        raise click.UsageError("config file must be a mapping")
    unknown = set(data) - set(RunConfig.__dataclass_fields__)
    if unknown:
        raise click.UsageError(f"unknown config keys: {sorted(unknown)}")
    return data


def _merge_config(config_path: str | None, overrides: dict) -> RunConfig:
    merged = _load_config(config_path)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**merged)


def _header_lines(config: RunConfig, provider_desc: str) -> list[str]:
    return [
        f"tool: echometer {__version__}",
        f"generated: {datetime.now(timezone.utc).isoformat()}",
        f"config: {config.digest()}",
        f"seed: {config.seed}",
        f"provider: {provider_desc}",
    ]


def _make_provider(config: RunConfig):
    if config.provider == "reference":
        return ReferenceEmbedder(dimension=config.dimension)
    if config.provider == "remote":
        if not config.endpoint:
            raise click.UsageError("--endpoint is required with --provider remote")
        return RemoteEmbedder(config.endpoint)
    raise click.UsageError(f"unknown provider {config.provider!r}")


def _store_paths(out_dir: Path) -> tuple[Path, Path]:
    return out_dir / "documents.jsonl", out_dir / "utterances.jsonl"


def _load_store(out_dir: Path):
    doc_path, utt_path = _store_paths(out_dir)
    if not doc_path.exists() or not utt_path.exists():
        raise DataError(f"no canonical store under {out_dir}; run `echometer ingest` first")
    docs = ingest_press_releases(doc_path)
    utts = ingest_utterances(utt_path)
    if docs.errors or utts.errors:
        raise DataError("canonical store is corrupt; re-run `echometer ingest`")
    return docs.documents, utts.utterances


def _document_sentences(doc) -> list[str]:
    """Sentences used for embedding: title first, then body sentences."""
    sentences = list(doc.sentences)
    if doc.title:
        sentences.insert(0, doc.title)
    return sentences or [""]


def _embedding_store(documents, store: UtteranceStore, provider,
                     cache: EmbeddingCache):
    doc_vectors = {}
    for doc in documents:
        sentences = _document_sentences(doc)
        vectors, _ = embed_corpus(provider, sentences, cache)
        doc_vectors[doc.id] = mean_embedding(vectors)
    utt_texts = [u.text for u in store]
    utt_ids = [u.id for u in store]
    vectors, stats = embed_corpus(provider, utt_texts, cache)
    return EmbeddingStore(doc_vectors, dict(zip(utt_ids, vectors))), stats


@click.group(name="echometer")
@click.version_option(version=__version__)
def cli() -> None:
    """Quantify the echo of reference communications in an utterance stream."""


_CONFIG_OPT = click.option("--config", "config_path", type=click.Path(exists=True),
                           default=None, help="YAML config; flags override its fields.")
_OUT_OPT = click.option("--out-dir", default=None, help="Output directory.")


@cli.command()
@_CONFIG_OPT
@_OUT_OPT
@click.option("--releases", type=click.Path(), default=None, help="Press-release JSONL file.")
@click.option("--utterances", type=click.Path(), default=None, help="Utterance JSONL file.")
def ingest(config_path, out_dir, releases, utterances) -> None:
    """Ingest both corpora into the canonical store."""
    config = _merge_config(config_path, {"out_dir": out_dir, "releases": releases,
                                         "utterances": utterances})
    if not config.releases or not config.utterances:
        raise click.UsageError("--releases and --utterances are required")
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc_result = ingest_press_releases(config.releases)
    utt_result = ingest_utterances(config.utterances)
    doc_path, utt_path = _store_paths(out)
    write_documents(doc_result.documents, doc_path)
    write_utterances(list(utt_result.utterances), utt_path)
    errors = doc_result.errors + utt_result.errors
    write_error_report(errors, out / "ingest_errors.jsonl")
    for warning in doc_result.warnings + utt_result.warnings:
        click.echo(f"warning: {warning}", err=True)
    click.echo(f"ingested {len(doc_result.documents)} documents, "
               f"{len(utt_result.utterances)} utterances, "
               f"{len(errors)} record errors")


@cli.command()
@_CONFIG_OPT
@_OUT_OPT
@click.option("--provider", type=click.Choice(["reference", "remote"]), default=None)
@click.option("--endpoint", default=None, help="Embedding service base URL.")
@click.option("--workers", type=int, default=None)
def embed(config_path, out_dir, provider, endpoint, workers) -> None:
    """Embed all document sentences and utterances into the cache."""
    config = _merge_config(config_path, {"out_dir": out_dir, "provider": provider,
                                         "endpoint": endpoint, "workers": workers})
    out = Path(config.out_dir)
    documents, store = _load_store(out)
    prov = _make_provider(config)
    cache = EmbeddingCache(out / "embeddings.cache")
    _, stats = _embedding_store(documents, store, prov, cache)
    click.echo(f"embedded with {prov.provider_id}/{prov.model_id}: "
               f"{stats.hits} cache hits, {stats.misses} misses, "
               f"{len(cache)} cached vectors")


def _relevant_window(doc, days: int = 7):
    start = doc.release_date - timedelta(days=days)
    end = doc.release_date + timedelta(days=days)
    return start, end


@cli.command()
@_CONFIG_OPT
@_OUT_OPT
@click.option("--provider", type=click.Choice(["reference", "remote"]), default=None)
@click.option("--endpoint", default=None)
@click.option("--labels", "labels_path", type=click.Path(exists=True), default=None,
              help="Adjudicated label CSV; switches from export to sweep mode.")
@click.option("--seed", type=int, default=None)
@click.option("--per-org", type=int, default=4, show_default=True)
@click.option("--per-bin", type=int, default=4, show_default=True)
def calibrate(config_path, out_dir, provider, endpoint, labels_path, seed,
              per_org, per_bin) -> None:
    """Export labelling pairs, or sweep thresholds against ingested labels."""
    config = _merge_config(config_path, {"out_dir": out_dir, "provider": provider,
                                         "endpoint": endpoint, "seed": seed})
    out = Path(config.out_dir)
    documents, store = _load_store(out)
    prov = _make_provider(config)
    cache = EmbeddingCache(out / "embeddings.cache")
    embeddings, _ = _embedding_store(documents, store, prov, cache)
    header = _header_lines(config, f"{prov.provider_id}/{prov.model_id}")

    # Score each document against its temporally relevant utterances (+/- 7 days).
    candidates: dict[str, list[PairCandidate]] = {}
    for doc in documents:
        start, end = _relevant_window(doc)
        doc_vec = embeddings.document_vectors[doc.id]
        cands = []
        for utt in store:
            if start <= utt.day <= end:
                from .textsim import cosine as _cosine
                cands.append(PairCandidate(utt.id, utt.text,
                                           _cosine(doc_vec, embeddings.utterance_vectors[utt.id])))
        candidates[doc.id] = cands

    if labels_path is None:
        doc_org = {d.id: d.org for d in documents}
        pairs = sample_label_pairs(doc_org, candidates, per_org=per_org,
                                   per_bin=per_bin, seed=config.seed)
        doc_texts = {d.id: d.body for d in documents}
        utt_texts = {u.id: u.text for u in store}
        export_path = out / "label_pairs.csv"
        write_label_export(pairs, doc_texts, utt_texts, export_path, header_lines=header)
        with open(out / "label_pairs_key.json", "w", encoding="utf-8") as handle:
            json.dump({p.pair_id: [p.document_id, p.utterance_id] for p in pairs}, handle)
        click.echo(f"exported {len(pairs)} pairs to {export_path}")
        return

    labels = read_labels(labels_path)
    key_path = out / "label_pairs_key.json"
    if not key_path.exists():
        raise DataError("no label_pairs_key.json; run `echometer calibrate` without --labels first")
    with open(key_path, encoding="utf-8") as handle:
        key = json.load(handle)
    unknown = set(labels) - set(key)
    if unknown:
        raise DataError(f"labels reference unknown pair ids: {sorted(unknown)[:5]}")

    # TF-IDF is fitted over all document sentences plus temporally relevant utterances.
    doc_tokens = {d.id: [tokenize_and_stem(s) for s in _document_sentences(d)] for d in documents}
    relevant_ids = {c.utterance_id for cands in candidates.values() for c in cands}
    utt_tokens = {uid: tokenize_and_stem(store.get(uid).text) for uid in relevant_ids}
    fit_corpus = [t for toks in doc_tokens.values() for t in toks] + list(utt_tokens.values())
    model = TfidfModel().fit(fit_corpus)

    pair_ids = sorted(labels)
    label_seq = [labels[pid] for pid in pair_ids]
    emb_scores, tfidf_scores, jac_scores = [], [], []
    cand_score = {(doc_id, c.utterance_id): c.score
                  for doc_id, cands in candidates.items() for c in cands}
    for pid in pair_ids:
        doc_id, utt_id = key[pid]
        if utt_id not in utt_tokens:
            utt_tokens[utt_id] = tokenize_and_stem(store.get(utt_id).text)
        emb_scores.append(cand_score[(doc_id, utt_id)])
        tfidf_scores.append(lexical_doc_similarity("tfidf", doc_tokens[doc_id],
                                                   utt_tokens[utt_id], model))
        jac_scores.append(lexical_doc_similarity("jaccard", doc_tokens[doc_id],
                                                 utt_tokens[utt_id]))
    import numpy as np
    grid = np.linspace(0.0, 1.0, config.grid_points).tolist()
    curves = [threshold_sweep(emb_scores, label_seq, "embedding", grid),
              threshold_sweep(tfidf_scores, label_seq, "tfidf", grid),
              threshold_sweep(jac_scores, label_seq, "jaccard", grid)]
    curve_path = out / "calibration_curves.csv"
    write_curves(curves, curve_path, header_lines=header)
    for curve in curves:
        click.echo(f"{curve.method}: best thresholds {curve.best_thresholds}")
    click.echo(f"wrote {curve_path}")


@cli.command()
@_CONFIG_OPT
@_OUT_OPT
@click.option("--provider", type=click.Choice(["reference", "remote"]), default=None)
@click.option("--endpoint", default=None)
@click.option("--threshold", type=float, default=None)
@click.option("--pre-days", type=int, default=None)
@click.option("--post-days", type=int, default=None)
@click.option("--include-release/--exclude-release", "include_release", default=None)
@click.option("--sensitivity", is_flag=True, default=False,
              help="Also emit the pre x post window-size matrix.")
@click.option("--seed", type=int, default=None)
@click.option("--workers", type=int, default=None)
def echo(config_path, out_dir, provider, endpoint, threshold, pre_days, post_days,
         include_release, sensitivity, seed, workers) -> None:
    """Compute echo scores and emit the three reports."""
    config = _merge_config(config_path, {
        "out_dir": out_dir, "provider": provider, "endpoint": endpoint,
        "threshold": threshold, "pre_days": pre_days, "post_days": post_days,
        "include_release": include_release, "seed": seed, "workers": workers})
    out = Path(config.out_dir)
    documents, store = _load_store(out)
    prov = _make_provider(config)
    cache = EmbeddingCache(out / "embeddings.cache")
    embeddings, _ = _embedding_store(documents, store, prov, cache)
    try:
        window = WindowConfig(config.threshold, config.pre_days, config.post_days,
                              config.include_release)
    except ValueError as exc:
        raise click.UsageError(str(exc)) from exc
    result = batch_echo(documents, store, embeddings, window)
    if not result.scores:
        raise DataError("no document could be scored: "
                        + "; ".join(result.summary.failures[:5]))
    header = _header_lines(config, f"{prov.provider_id}/{prov.model_id}")
    write_echo_report(result.scores, out / "echo_report.csv", header)
    write_daily_report(result.scores, out / "echo_daily.csv", header)
    write_summary_report(result.summary, out / "echo_summary.txt", header)
    if sensitivity:
        cells = {}
        for doc in documents:
            try:
                cells[doc.id] = window_sensitivity(doc, store, embeddings, window)
            except Exception as exc:  # coverage failures are reported, not fatal
                click.echo(f"sensitivity skipped for {doc.id}: {exc}", err=True)
        write_sensitivity_report(cells, out / "echo_sensitivity.csv", header)
    for failure in result.summary.failures:
        click.echo(f"warning: {failure}", err=True)
    click.echo(f"scored {result.summary.scored} documents "
               f"({result.summary.no_similar_count} with no similar utterances)")


@cli.command()
@_CONFIG_OPT
@_OUT_OPT
def report(config_path, out_dir) -> None:
    """Recompute the summary from a previously written echo report."""
    config = _merge_config(config_path, {"out_dir": out_dir})
    out = Path(config.out_dir)
    path = out / "echo_report.csv"
    if not path.exists():
        raise DataError(f"{path} not found; run `echometer echo` first")
    raws, props, no_similar = [], [], 0
    with open(path, encoding="utf-8", newline="") as handle:
        rows = [line for line in handle if not line.startswith("#")]
    for row in csv.DictReader(rows):
        if row["no_similar_tweets"] == "true":
            no_similar += 1
        else:
            raws.append(float(row["delta_raw"]))
            props.append(float(row["delta_prop"]))
    from .echo import BatchSummary, _percentile_table, pearson
    total = no_similar + len(raws)
    import numpy as np
    r = None
    if len(raws) >= 2 and np.std(raws) > 0 and np.std(props) > 0:
        r = pearson(raws, props)
    summary = BatchSummary(total, no_similar, no_similar / total if total else 0.0,
                           _percentile_table(raws), _percentile_table(props), r)
    header = _header_lines(config, "n/a")
    write_summary_report(summary, out / "echo_summary.txt", header)
    click.echo(f"summarised {total} documents from {path}")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return EXIT_OK
    except click.UsageError as exc:
        exc.show()
        return EXIT_USAGE
    except click.ClickException as exc:
        exc.show()
        return EXIT_USAGE
    except click.Abort:
        return EXIT_USAGE
    except (CorpusError, CalibrationError, DataError, UndefinedEchoError) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_DATA
    except (TransportError, ProtocolError) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_TRANSPORT


if __name__ == "__main__":
    sys.exit(main())
