"""Corpus ingestion and the canonical data model.

Two line-delimited JSON corpora are ingested: reference documents (press
releases) and short timestamped utterances (tweets). Documents are
whitespace-normalised and sentencised; utterances are URL-stripped and
bucketed into UTC days.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from pathlib import Path
from typing import Iterable, Iterator

_WS_RE = re.compile(r"\s+")
_SHORT_URL_RE = re.compile(r"https?://t\.co/\S+")
# Split after ./!/? when followed by whitespace and an uppercase letter or digit.
_SENTENCE_RE = re.compile(r"(?<=[.!?])\s+(?=[A-Z0-9])")


class CorpusError(Exception):
    """Fatal corpus-level failure (unreadable file, empty store, ...)."""


@dataclass(frozen=True)
class RecordError:
    """A single rejected input record."""

    line_no: int
    field: str
    reason: str

    def as_dict(self) -> dict:
        return {"line_no": self.line_no, "field": self.field, "reason": self.reason}


def normalize_whitespace(text: str) -> str:
    """Collapse every whitespace run to a single space and trim the ends."""
    return _WS_RE.sub(" ", text).strip()


def strip_short_urls(text: str) -> str:
    """Remove shortened t.co URLs, collapsing the surrounding whitespace."""
    return normalize_whitespace(_SHORT_URL_RE.sub(" ", text))


def sentencise(text: str) -> list[str]:
    """Split normalised text into sentences.

    A boundary is sentence punctuation (., !, ?) followed by whitespace and
    an uppercase letter or digit; terminal punctuation stays with its
    sentence. Abbreviations such as "Dr. Smith" mis-split; this is a known
    and accepted trade-off of the deterministic rule.
    """
    if not text.strip():
        return []
    return [seg for seg in _SENTENCE_RE.split(text) if seg.strip()]


@dataclass(frozen=True)
class Document:
    """A reference communication (press release)."""

    id: str
    org: str
    url: str
    release_date: date
    title: str
    body: str
    sentences: tuple[str, ...]

    @classmethod
    def build(cls, id: str, org: str, url: str, release_date: date,
              title: str, body: str) -> "Document":
        norm = normalize_whitespace(body)
        return cls(id=id, org=org, url=url, release_date=release_date,
                   title=normalize_whitespace(title), body=norm,
                   sentences=tuple(sentencise(norm)))

    def as_record(self) -> dict:
        return {
            "id": self.id,
            "org": self.org,
            "url": self.url,
            "date": self.release_date.isoformat(),
            "title": self.title,
            "body": self.body,
        }


@dataclass(frozen=True)
class Utterance:
    """A short timestamped text (tweet), URL-stripped and day-bucketed."""

    id: str
    text: str
    created_at: datetime
    day: date

    @classmethod
    def build(cls, id: str, text: str, created_at: datetime) -> "Utterance":
        if created_at.tzinfo is None:
            raise ValueError("created_at must carry a timezone offset")
        utc = created_at.astimezone(timezone.utc)
        return cls(id=id, text=strip_short_urls(text), created_at=utc, day=utc.date())

    def as_record(self) -> dict:
        return {
            "id": self.id,
            "text": self.text,
            "created_at": self.created_at.isoformat(),
        }


class DayIndex:
    """Maps each UTC day to the ordered ids of utterances posted on it."""

    def __init__(self) -> None:
        self._by_day: dict[date, list[str]] = {}

    def add(self, day: date, utterance_id: str) -> None:
        self._by_day.setdefault(day, []).append(utterance_id)

    def ids_on(self, day: date) -> list[str]:
        return self._by_day.get(day, [])

    def total_on(self, day: date) -> int:
        return len(self._by_day.get(day, ()))

    def days(self) -> list[date]:
        return sorted(self._by_day)

    def __len__(self) -> int:
        return sum(len(v) for v in self._by_day.values())


class UtteranceStore:
    """Immutable-after-construction utterance collection plus its DayIndex."""

    def __init__(self) -> None:
        self._utterances: dict[str, Utterance] = {}
        self.day_index = DayIndex()

    def add(self, utterance: Utterance) -> None:
        if utterance.id in self._utterances:
            raise KeyError(f"duplicate utterance id {utterance.id!r}")
        self._utterances[utterance.id] = utterance
        self.day_index.add(utterance.day, utterance.id)

    def get(self, utterance_id: str) -> Utterance:
        return self._utterances[utterance_id]

    def on_day(self, day: date) -> list[Utterance]:
        return [self._utterances[i] for i in self.day_index.ids_on(day)]

    def __len__(self) -> int:
        return len(self._utterances)

    def __iter__(self) -> Iterator[Utterance]:
        return iter(self._utterances.values())


@dataclass
class IngestResult:
    """Outcome of one ingestion pass: accepted entities plus record errors."""

    documents: list[Document] = field(default_factory=list)
    utterances: UtteranceStore | None = None
    errors: list[RecordError] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)


def _iter_json_lines(path: Path) -> Iterator[tuple[int, dict | None, str | None]]:
    try:
        handle = open(path, encoding="utf-8")
    except OSError as exc:
        raise CorpusError(f"cannot read {path}: {exc}") from exc
    with handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                yield line_no, None, f"invalid JSON: {exc.msg}"
                continue
            if not isinstance(obj, dict):
                yield line_no, None, "record is not an object"
                continue
            yield line_no, obj, None


def _require_fields(obj: dict, names: Iterable[str]) -> str | None:
    for name in names:
        if name not in obj or not isinstance(obj[name], str):
            return name
    return None


def ingest_press_releases(path: str | Path) -> IngestResult:
    """Read documents from a line-delimited JSON file.

    Malformed records and duplicate ids are collected as errors; ingestion
    continues. An unreadable file raises CorpusError.
    """
    result = IngestResult()
    seen: set[str] = set()
    for line_no, obj, parse_err in _iter_json_lines(Path(path)):
        if parse_err is not None:
            result.errors.append(RecordError(line_no, "-", parse_err))
            continue
        missing = _require_fields(obj, ("id", "org", "url", "date", "title", "body"))
        if missing is not None:
            result.errors.append(RecordError(line_no, missing, "missing or non-string field"))
            continue
        try:
            release_date = date.fromisoformat(obj["date"])
        except ValueError:
            result.errors.append(RecordError(line_no, "date", f"not a YYYY-MM-DD date: {obj['date']!r}"))
            continue
        if obj["id"] in seen:
            result.errors.append(RecordError(line_no, "id", f"duplicate id {obj['id']!r}"))
            continue
        seen.add(obj["id"])
        doc = Document.build(obj["id"], obj["org"], obj["url"], release_date,
                             obj["title"], obj["body"])
        if not doc.sentences:
            result.warnings.append(f"document {doc.id!r} has an empty body")
        result.documents.append(doc)
    return result


def ingest_utterances(path: str | Path) -> IngestResult:
    """Read utterances from a line-delimited JSON file, bucketing by UTC day."""
    result = IngestResult(utterances=UtteranceStore())
    store = result.utterances
    for line_no, obj, parse_err in _iter_json_lines(Path(path)):
        if parse_err is not None:
            result.errors.append(RecordError(line_no, "-", parse_err))
            continue
        missing = _require_fields(obj, ("id", "text", "created_at"))
        if missing is not None:
            result.errors.append(RecordError(line_no, missing, "missing or non-string field"))
            continue
        raw_ts = obj["created_at"]
        if raw_ts.endswith(("Z", "z")):
            raw_ts = raw_ts[:-1] + "+00:00"
        try:
            created = datetime.fromisoformat(raw_ts)
        except ValueError:
            result.errors.append(RecordError(line_no, "created_at",
                                             f"unparseable timestamp {obj['created_at']!r}"))
            continue
        if created.tzinfo is None:
            result.errors.append(RecordError(line_no, "created_at", "timestamp lacks a timezone offset"))
            continue
        try:
            store.add(Utterance.build(obj["id"], obj["text"], created))
        except KeyError:
            result.errors.append(RecordError(line_no, "id", f"duplicate id {obj['id']!r}"))
    return result


def write_documents(documents: Iterable[Document], path: str | Path) -> None:
    """Emit documents in the canonical line-delimited record format."""
    with open(path, "w", encoding="utf-8") as handle:
        for doc in documents:
            handle.write(json.dumps(doc.as_record(), ensure_ascii=False) + "\n")


def write_utterances(utterances: Iterable[Utterance], path: str | Path) -> None:
    """Emit utterances in the canonical line-delimited record format."""
    with open(path, "w", encoding="utf-8") as handle:
        for utt in utterances:
            handle.write(json.dumps(utt.as_record(), ensure_ascii=False) + "\n")


def write_error_report(errors: Iterable[RecordError], path: str | Path) -> None:
    """Sidecar report: one JSON object per rejected record."""
    with open(path, "w", encoding="utf-8") as handle:
        for err in errors:
            handle.write(json.dumps(err.as_dict()) + "\n")
