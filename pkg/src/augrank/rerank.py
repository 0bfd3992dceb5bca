"""Re-ranker input sequences and pluggable candidate scoring.

Sequences follow two fixed templates (single space after each label colon,
single space between segments):

    plain:     "Query: <q> Document: <d> Relevant:"
    augmented: "Query: <q> Description: <expansion> Document: <d> Relevant:"

Training sequences append " true" / " false" after "Relevant:". Scorers
return one value per input in [0, 1], higher means more relevant:

- lexical_baseline: BM25 of the document segment against the tokenized
  query + description terms, squashed to [0, 1] via s/(s+1). Collection
  statistics are computed over the batch's own documents, so the scorer is
  self-contained (in the pipeline a batch is one query's candidate list).
- remote: HTTP POST {"inputs": [...]} to <address>/score, expecting
  {"scores": [...]} of equal length; scores are validated to [0, 1].
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from enum import Enum

import requests

from .augment import Expansion
from .corpus_io import Passage, Query, RankedList
from .errors import ProtocolError, TransportError, UnknownIdError, ValidationError
from .index import bm25_score, build_index, tokenize

QUERY_LABEL = "Query:"
DESCRIPTION_LABEL = "Description:"
DOCUMENT_LABEL = "Document:"
RELEVANT_LABEL = "Relevant:"

# Score assigned to entries kept below the re-ranked head: each sits this
# far under the previous one so the output stays sorted.
_TAIL_STEP = 1e-6


class RelevanceLabel(str, Enum):
    """The two terminal label renderings of a training sequence."""

    TRUE = "true"
    FALSE = "false"


class ScorerKind(str, Enum):
    LEXICAL_BASELINE = "lexical_baseline"
    REMOTE = "remote"


@dataclass(frozen=True)
class ScorerEndpoint:
    kind: ScorerKind
    address: str | None = None
    batch_size: int = 32
    timeout: float = 10.0

    def __post_init__(self):
        if self.kind is ScorerKind.REMOTE and not self.address:
            raise ValidationError("remote scorer requires an address")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.timeout <= 0:
            raise ValidationError(f"timeout must be positive, got {self.timeout}")


@dataclass(frozen=True)
class RerankInput:
    sequence: str
    query_id: str
    passage_id: str
    augmented: bool


def build_input(query: Query, passage: Passage) -> RerankInput:
    """Inference-form plain sequence; the label slot after "Relevant:" is
    left for the scorer."""
    sequence = f"{QUERY_LABEL} {query.text} {DOCUMENT_LABEL} {passage.text} {RELEVANT_LABEL}"
    return RerankInput(sequence, query.id, passage.id, augmented=False)


def build_augmented_input(query: Query, expansion: Expansion, passage: Passage) -> RerankInput:
    """Augmented sequence with the expansion text as a Description segment.

    An empty fallback expansion delegates to the plain template so the
    no-augmentation path is byte-identical.
    """
    if not expansion.text and expansion.fallback:
        return build_input(query, passage)
    sequence = (
        f"{QUERY_LABEL} {query.text} {DESCRIPTION_LABEL} {expansion.text} "
        f"{DOCUMENT_LABEL} {passage.text} {RELEVANT_LABEL}"
    )
    return RerankInput(sequence, query.id, passage.id, augmented=True)


def split_input(sequence: str) -> tuple[str, str | None, str]:
    """Recover (query, description-or-None, document) from a sequence.

    Splits left to right on the first occurrence of each segment label, so
    components that themselves contain a label literal are not recoverable.
    """
    prefix = QUERY_LABEL + " "
    suffix = " " + RELEVANT_LABEL
    if not sequence.startswith(prefix) or not sequence.endswith(suffix):
        raise ValidationError(f"not a re-ranker sequence: {sequence!r}")
    body = sequence[len(prefix) : len(sequence) - len(suffix)]
    description = None
    desc_marker = f" {DESCRIPTION_LABEL} "
    doc_marker = f" {DOCUMENT_LABEL} "
    if desc_marker in body:
        query_text, rest = body.split(desc_marker, 1)
        if doc_marker not in rest:
            raise ValidationError(f"missing document segment: {sequence!r}")
        description, document = rest.split(doc_marker, 1)
    else:
        if doc_marker not in body:
            raise ValidationError(f"missing document segment: {sequence!r}")
        query_text, document = body.split(doc_marker, 1)
    return query_text, description, document


def training_sequence(inference_input: RerankInput, label: RelevanceLabel) -> str:
    """Training form: the inference sequence plus " <label>"."""
    return f"{inference_input.sequence} {label.value}"


def _lexical_baseline_scores(inputs: Sequence[RerankInput]) -> list[float]:
    documents: dict[str, Passage] = {}
    parsed = []
    for item in inputs:
        query_text, description, document = split_input(item.sequence)
        parsed.append((item.passage_id, query_text, description))
        if item.passage_id not in documents:
            documents[item.passage_id] = Passage(item.passage_id, None, document)
    batch_index = build_index(list(documents.values()))
    scores = []
    for passage_id, query_text, description in parsed:
        terms = tokenize(query_text if description is None else f"{query_text} {description}")
        raw = bm25_score(batch_index, terms, passage_id)
        scores.append(raw / (raw + 1.0))
    return scores


def _remote_scores(inputs: Sequence[RerankInput], endpoint: ScorerEndpoint) -> list[float]:
    url = endpoint.address.rstrip("/") + "/score"
    scores: list[float] = []
    for start in range(0, len(inputs), endpoint.batch_size):
        batch = inputs[start : start + endpoint.batch_size]
        indices = range(start, start + len(batch))
        try:
            response = requests.post(
                url,
                json={"inputs": [item.sequence for item in batch]},
                timeout=endpoint.timeout,
            )
        except requests.RequestException as exc:
            raise TransportError(f"scorer request failed: {exc}", indices) from exc
        if response.status_code != 200:
            raise TransportError(
                f"scorer returned HTTP {response.status_code}", indices
            )
        try:
            payload = response.json()
        except ValueError:
            raise ProtocolError("scorer response is not valid JSON") from None
        got = payload.get("scores") if isinstance(payload, dict) else None
        if not isinstance(got, list) or len(got) != len(batch):
            raise ProtocolError(
                f"expected {len(batch)} scores, got "
                f"{len(got) if isinstance(got, list) else payload!r}"
            )
        for value in got:
            if not isinstance(value, (int, float)) or not 0.0 <= float(value) <= 1.0:
                raise ProtocolError(f"score {value!r} outside [0, 1]")
            scores.append(float(value))
    return scores


def score_batch(inputs: Sequence[RerankInput], endpoint: ScorerEndpoint) -> list[float]:
    """One score per input, order-aligned, each in [0, 1]."""
    if not inputs:
        raise ValidationError("score_batch requires at least one input")
    if endpoint.kind is ScorerKind.LEXICAL_BASELINE:
        return _lexical_baseline_scores(inputs)
    return _remote_scores(inputs, endpoint)


def rerank_topk(
    initial: RankedList,
    passages: Mapping[str, Passage],
    query: Query,
    expansion: Expansion | None,
    endpoint: ScorerEndpoint,
    k: int,
    tag: str = "rerank",
) -> RankedList:
    """Rescore the top-k of the initial list; ties keep initial order.

    Entries beyond k keep their relative order after the re-ranked head and
    are assigned synthetic scores strictly below the head's minimum so the
    output remains a valid descending run. The output is always a
    permutation of the input entries.
    """
    if not 1 <= k <= len(initial.entries):
        raise ValidationError(
            f"k must be in [1, {len(initial.entries)}], got {k} for query {initial.query_id!r}"
        )
    head = initial.entries[:k]
    inputs = []
    for pid, _ in head:
        passage = passages.get(pid)
        if passage is None:
            raise UnknownIdError(f"passage {pid!r} from the initial run is not in the corpus")
        if expansion is not None:
            inputs.append(build_augmented_input(query, expansion, passage))
        else:
            inputs.append(build_input(query, passage))
    scores = score_batch(inputs, endpoint)
    order = sorted(range(k), key=lambda i: (-scores[i], i))
    entries = [(head[i][0], scores[i]) for i in order]
    floor = entries[-1][1]
    for offset, (pid, _) in enumerate(initial.entries[k:], start=1):
        entries.append((pid, floor - offset * _TAIL_STEP))
    return RankedList(initial.query_id, tuple(entries), tag)
