"""Readers and writers for every experiment artifact.

File formats:

- Corpus, queries, snippet caches, and training triples are UTF-8 JSONL:
  one JSON object per line.
    corpus:   {"id": str, "title": str (optional), "text": str}
    queries:  {"id": str, "text": str}
    snippets: {"query_id": str, "rank": int, "kind": "organic"|"direct_answer",
               "text": str, "source": "web_serp"|"wiki"}
    triples:  {"query_id": str, "passage_id": str,
               "label": "relevant"|"not_relevant"}
- Run files are TREC 6-column text: `qid Q0 docid rank score tag`.
- Qrels are TREC 4-column text: `qid 0 docid grade`.

Duplicate judgments, duplicate docids within a query, and duplicate record
ids are hard errors, never last-wins. All parsers are pure functions over
their input lines and are safe to call concurrently on distinct streams.
"""

from __future__ import annotations

import json
import math
from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass, field
from enum import Enum
from typing import TextIO

from .errors import ConflictError, ParseError, ValidationError


class SnippetKind(str, Enum):
    ORGANIC = "organic"
    DIRECT_ANSWER = "direct_answer"


class SnippetSource(str, Enum):
    WEB_SERP = "web_serp"
    WIKI = "wiki"


class TrainingLabel(str, Enum):
    RELEVANT = "relevant"
    NOT_RELEVANT = "not_relevant"


@dataclass(frozen=True)
class Query:
    """A query string with its identifier.

    Ids must be non-empty and unique within a query set; text must be
    non-empty after whitespace trim. Enforced by `load_queries`.
    """

    id: str
    text: str


@dataclass(frozen=True)
class Passage:
    """One retrievable text unit. The optional title is carried metadata
    and is never concatenated into the indexed or re-ranked text."""

    id: str
    title: str | None
    text: str


@dataclass(frozen=True)
class Snippet:
    """One externally retrieved text with provenance.

    Ranks are 1-based and unique within a (query_id, source) group.
    """

    query_id: str
    rank: int
    kind: SnippetKind
    text: str
    source: SnippetSource


@dataclass(frozen=True)
class TrainingExample:
    query_id: str
    passage_id: str
    label: TrainingLabel


@dataclass
class Qrels:
    """Graded relevance judgments keyed by (query_id, passage_id).

    Grades are non-negative integers; each pair appears at most once.
    """

    judgments: dict[str, dict[str, int]] = field(default_factory=dict)

    def add_judgment(self, query_id: str, passage_id: str, grade: int) -> None:
        if grade < 0:
            raise ValidationError(f"negative grade {grade} for ({query_id}, {passage_id})")
        per_query = self.judgments.setdefault(query_id, {})
        if passage_id in per_query:
            raise ConflictError(f"duplicate judgment for ({query_id}, {passage_id})")
        per_query[passage_id] = grade

    def grade(self, query_id: str, passage_id: str) -> int:
        """Grade of a pair; unjudged pairs count as grade 0."""
        return self.judgments.get(query_id, {}).get(passage_id, 0)

    def has_query(self, query_id: str) -> bool:
        return query_id in self.judgments

    def grades_for(self, query_id: str) -> dict[str, int]:
        return self.judgments.get(query_id, {})

    def count_relevant(self, query_id: str, threshold: int) -> int:
        return sum(1 for g in self.judgments.get(query_id, {}).values() if g >= threshold)

    def query_ids(self) -> set[str]:
        return set(self.judgments)

    def max_grade(self) -> int:
        return max((g for per in self.judgments.values() for g in per.values()), default=0)

    def __len__(self) -> int:
        return sum(len(per) for per in self.judgments.values())


@dataclass(frozen=True)
class RankedList:
    """One query's candidate ranking: entries are (passage_id, score),
    sorted by score descending, passage ids unique, no NaN scores."""

    query_id: str
    entries: tuple[tuple[str, float], ...]
    tag: str = "run"

    def __post_init__(self):
        seen: set[str] = set()
        prev = math.inf
        for pid, score in self.entries:
            if math.isnan(score):
                raise ValidationError(f"NaN score for passage {pid!r} in query {self.query_id!r}")
            if score > prev:
                raise ValidationError(
                    f"entries not sorted by descending score in query {self.query_id!r}"
                )
            prev = score
            if pid in seen:
                raise ConflictError(f"duplicate passage {pid!r} in query {self.query_id!r}")
            seen.add(pid)

    def passage_ids(self) -> tuple[str, ...]:
        return tuple(pid for pid, _ in self.entries)


def _iter_lines(stream: Iterable[str] | str) -> Iterator[tuple[int, str]]:
    """Yield (line_no, line) pairs, skipping blank lines.

    Accepts an open text file, any iterable of lines, or a whole string.
    """
    lines = stream.splitlines() if isinstance(stream, str) else stream
    for i, raw in enumerate(lines, start=1):
        line = raw.strip()
        if line:
            yield i, line


def parse_qrels(stream: Iterable[str] | str) -> Qrels:
    """Parse TREC qrels: `qid <ignored> docid grade`, one judgment per line.

    Raises ParseError on malformed lines (naming the line number) and
    ConflictError when a (qid, docid) pair appears twice.
    """
    qrels = Qrels()
    for line_no, line in _iter_lines(stream):
        parts = line.split()
        if len(parts) != 4:
            raise ParseError(f"expected 4 fields, got {len(parts)}: {line!r}", line_no)
        qid, _, docid, grade_str = parts
        try:
            grade = int(grade_str)
        except ValueError:
            raise ParseError(f"non-integer grade {grade_str!r}", line_no) from None
        if grade < 0:
            raise ParseError(f"negative grade {grade}", line_no)
        qrels.add_judgment(qid, docid, grade)
    return qrels


def parse_run(stream: Iterable[str] | str) -> list[RankedList]:
    """Parse a TREC run file: `qid Q0 docid rank score tag`.

    Entries are grouped by qid (lists emitted in order of first appearance)
    and re-sorted by score descending with ties broken by the given rank
    ascending, so write_run -> parse_run round-trips preserve ordering.
    """
    groups: dict[str, list[tuple[str, int, float]]] = {}
    tags: dict[str, str] = {}
    seen: dict[str, set[str]] = {}
    for line_no, line in _iter_lines(stream):
        parts = line.split()
        if len(parts) != 6:
            raise ParseError(f"expected 6 fields, got {len(parts)}: {line!r}", line_no)
        qid, _, docid, rank_str, score_str, tag = parts
        try:
            rank = int(rank_str)
        except ValueError:
            raise ParseError(f"non-integer rank {rank_str!r}", line_no) from None
        try:
            score = float(score_str)
        except ValueError:
            raise ParseError(f"non-numeric score {score_str!r}", line_no) from None
        if math.isnan(score):
            raise ParseError(f"NaN score for docid {docid!r}", line_no)
        if docid in seen.setdefault(qid, set()):
            raise ConflictError(f"line {line_no}: duplicate docid {docid!r} for query {qid!r}")
        seen[qid].add(docid)
        groups.setdefault(qid, []).append((docid, rank, score))
        tags.setdefault(qid, tag)

    lists = []
    for qid, rows in groups.items():
        rows.sort(key=lambda r: (-r[2], r[1]))
        lists.append(
            RankedList(qid, tuple((docid, score) for docid, _, score in rows), tags[qid])
        )
    return lists


def write_run(lists: Sequence[RankedList], out: TextIO) -> None:
    """Write TREC 6-column format with fixed 4-decimal scores.

    Rank column numbers entries 1..n in list order.
    """
    for ranked in lists:
        if not ranked.tag or any(ch.isspace() for ch in ranked.tag):
            raise ValidationError(f"run tag {ranked.tag!r} is not a single non-empty token")
        for rank, (pid, score) in enumerate(ranked.entries, start=1):
            if not pid or any(ch.isspace() for ch in pid):
                raise ValidationError(f"docid {pid!r} is not a single non-empty token")
            out.write(f"{ranked.query_id} Q0 {pid} {rank} {score:.4f} {ranked.tag}\n")


def _parse_record(line: str, line_no: int, required: Sequence[str]) -> dict:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON record: {exc}", line_no) from None
    if not isinstance(record, dict):
        raise ParseError("record is not a JSON object", line_no)
    for key in required:
        if key not in record:
            raise ParseError(f"missing field {key!r}", line_no)
    return record


def load_corpus(stream: Iterable[str] | str) -> list[Passage]:
    """Load a JSONL passage corpus, preserving file order and checking
    id uniqueness and non-empty text."""
    passages: list[Passage] = []
    seen: set[str] = set()
    for line_no, line in _iter_lines(stream):
        record = _parse_record(line, line_no, ("id", "text"))
        pid = str(record["id"])
        text = str(record["text"])
        if not pid:
            raise ParseError("empty passage id", line_no)
        if not text:
            raise ParseError(f"empty text for passage {pid!r}", line_no)
        if pid in seen:
            raise ConflictError(f"line {line_no}: duplicate passage id {pid!r}")
        seen.add(pid)
        title = record.get("title")
        passages.append(Passage(pid, None if title is None else str(title), text))
    return passages


def load_queries(stream: Iterable[str] | str) -> list[Query]:
    """Load a JSONL query set; ids unique, text non-empty after trim."""
    queries: list[Query] = []
    seen: set[str] = set()
    for line_no, line in _iter_lines(stream):
        record = _parse_record(line, line_no, ("id", "text"))
        qid = str(record["id"])
        text = str(record["text"])
        if not qid:
            raise ParseError("empty query id", line_no)
        if not text.strip():
            raise ParseError(f"empty text for query {qid!r}", line_no)
        if qid in seen:
            raise ConflictError(f"line {line_no}: duplicate query id {qid!r}")
        seen.add(qid)
        queries.append(Query(qid, text))
    return queries


def load_snippet_cache(stream: Iterable[str] | str) -> dict[str, list[Snippet]]:
    """Load a JSONL snippet cache grouped per query, sorted by rank ascending.

    A duplicate (query_id, source, rank) triple is a conflict; unknown kind
    or source tokens are parse errors. Kind filtering (e.g. skipping direct
    answers) happens downstream, not here.
    """
    cache: dict[str, list[Snippet]] = {}
    seen: set[tuple[str, str, int]] = set()
    for line_no, line in _iter_lines(stream):
        record = _parse_record(line, line_no, ("query_id", "rank", "kind", "text", "source"))
        qid = str(record["query_id"])
        try:
            rank = int(record["rank"])
        except (TypeError, ValueError):
            raise ParseError(f"non-integer rank {record['rank']!r}", line_no) from None
        if rank < 1:
            raise ParseError(f"rank must be >= 1, got {rank}", line_no)
        try:
            kind = SnippetKind(record["kind"])
        except ValueError:
            raise ParseError(f"unknown snippet kind {record['kind']!r}", line_no) from None
        try:
            source = SnippetSource(record["source"])
        except ValueError:
            raise ParseError(f"unknown snippet source {record['source']!r}", line_no) from None
        text = str(record["text"])
        if not text:
            raise ParseError(f"empty snippet text for query {qid!r}", line_no)
        key = (qid, source.value, rank)
        if key in seen:
            raise ConflictError(
                f"line {line_no}: duplicate snippet rank {rank} for query {qid!r}, "
                f"source {source.value}"
            )
        seen.add(key)
        cache.setdefault(qid, []).append(Snippet(qid, rank, kind, text, source))
    for snippets in cache.values():
        snippets.sort(key=lambda s: (s.rank, s.source.value))
    return cache


def load_triples(stream: Iterable[str] | str) -> list[TrainingExample]:
    """Load JSONL (query_id, passage_id, label) training triples."""
    triples: list[TrainingExample] = []
    for line_no, line in _iter_lines(stream):
        record = _parse_record(line, line_no, ("query_id", "passage_id", "label"))
        try:
            label = TrainingLabel(record["label"])
        except ValueError:
            raise ParseError(f"unknown label {record['label']!r}", line_no) from None
        triples.append(TrainingExample(str(record["query_id"]), str(record["passage_id"]), label))
    return triples
