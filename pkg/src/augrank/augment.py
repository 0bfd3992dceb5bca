"""Query augmentation from cached retrieval results.

Two strategies build the augmenting string for a query:

- natural language expansion: concatenate snippet texts in rank order and
  truncate to the first `max_words` whitespace-delimited words (word
  counting uses surface words, not tokenizer output);
- topical term expansion: score every distinct snippet term t by
  w(t) = P(t|A) * log2(P(t|A) / P(t|C)), its contribution to the KL
  divergence between the snippet language model A and the corpus model C,
  and keep the top `max_terms` terms in descending-weight order.

P(t|A) is unsmoothed (only terms occurring in the snippets are candidates);
P(t|C) comes smoothed from the index module, so the ratio is always
defined. Terms with P(t|A) < P(t|C) get negative weights and rank last
rather than being clamped. No stopword removal is applied before weighting:
near-corpus-frequency terms suppress themselves. An optional stopword set
can still drop terms at selection time.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, replace
from enum import Enum
from typing import TextIO

from .corpus_io import Query, Snippet, SnippetKind, SnippetSource, _iter_lines, _parse_record
from .errors import ParseError, ValidationError
from .index import CorpusLanguageModel, tokenize


class ExpansionMode(str, Enum):
    NATURAL_LANGUAGE = "natural_language"
    TOPICAL_TERMS = "topical_terms"


@dataclass(frozen=True)
class RetrieverConfig:
    """How many snippets to retrieve per query, from which source, and
    whether direct-answer boxes are skipped (they leak answers)."""

    max_snippets: int = 5
    source: SnippetSource = SnippetSource.WEB_SERP
    skip_direct_answers: bool = True

    def __post_init__(self):
        if self.max_snippets < 1:
            raise ValidationError(f"max_snippets must be >= 1, got {self.max_snippets}")


@dataclass(frozen=True)
class ExpansionConfig:
    mode: ExpansionMode
    max_words: int = 64
    max_terms: int = 64
    stopwords: frozenset[str] = frozenset()

    def __post_init__(self):
        if self.max_words < 1:
            raise ValidationError(f"max_words must be >= 1, got {self.max_words}")
        if self.max_terms < 1:
            raise ValidationError(f"max_terms must be >= 1, got {self.max_terms}")


@dataclass(frozen=True)
class TermWeight:
    term: str
    weight: float


@dataclass(frozen=True)
class Expansion:
    """The augmenting string for one query, plus which snippets produced it.

    `fallback` marks an empty expansion (nothing retrieved or nothing
    usable); downstream sequence building then reverts to the plain,
    non-augmented form.
    """

    query_id: str
    mode: ExpansionMode
    text: str
    provenance: tuple[str, ...] = ()
    fallback: bool = False


def filter_snippets(snippets: Sequence[Snippet], cfg: RetrieverConfig) -> list[Snippet]:
    """Drop direct-answer snippets when configured; order is preserved."""
    if not cfg.skip_direct_answers:
        return list(snippets)
    return [s for s in snippets if s.kind is not SnippetKind.DIRECT_ANSWER]


def retrieve(
    query: Query, cache: Mapping[str, Sequence[Snippet]], cfg: RetrieverConfig
) -> list[Snippet]:
    """The retrieval service: up to `max_snippets` cached snippets for the
    query from the configured source, filtered, in rank order.

    An uncached query yields an empty list so the caller can fall back to
    the non-augmented sequence.
    """
    snippets = [s for s in cache.get(query.id, ()) if s.source is cfg.source]
    snippets.sort(key=lambda s: s.rank)
    return filter_snippets(snippets, cfg)[: cfg.max_snippets]


def _snippet_ref(snippet: Snippet) -> str:
    return f"{snippet.source.value}:{snippet.rank}"


def natural_language_expansion(snippets: Sequence[Snippet], cfg: ExpansionConfig) -> Expansion:
    """Concatenate snippet texts with single spaces and truncate to the
    first `max_words` whitespace words, keeping casing and punctuation.

    Truncation never splits a word. When nothing is truncated the joined
    text is kept verbatim.
    """
    if cfg.mode is not ExpansionMode.NATURAL_LANGUAGE:
        raise ValidationError(f"config mode is {cfg.mode.value}, expected natural_language")
    query_id = snippets[0].query_id if snippets else ""
    joined = " ".join(s.text for s in snippets)
    words = joined.split()
    if len(words) <= cfg.max_words:
        text = joined
    else:
        text = " ".join(words[: cfg.max_words])
    provenance = []
    budget = cfg.max_words
    for snippet in snippets:
        if budget <= 0:
            break
        n_words = len(snippet.text.split())
        if n_words > 0:
            provenance.append(_snippet_ref(snippet))
            budget -= n_words
    return Expansion(query_id, cfg.mode, text, tuple(provenance), fallback=not text)


def topical_term_weights(
    snippets: Sequence[Snippet], lm: CorpusLanguageModel
) -> list[TermWeight]:
    """KL-contribution weight for every distinct term of the snippet text.

    A is the concatenation of all snippet token streams; for each term,
    P(t|A) = count(t)/|A| and w(t) = P(t|A) * log2(P(t|A)/P(t|C)). Sorted
    by weight descending, ties by ascending term.
    """
    tokens = [t for s in snippets for t in tokenize(s.text)]
    if not tokens:
        raise ValidationError("snippets contain no tokens; term distribution is undefined")
    total = len(tokens)
    weights = []
    for term, count in Counter(tokens).items():
        p_a = count / total
        weights.append(TermWeight(term, p_a * math.log2(p_a / lm.probability(term))))
    weights.sort(key=lambda w: (-w.weight, w.term))
    return weights


def topical_term_expansion(
    snippets: Sequence[Snippet], lm: CorpusLanguageModel, cfg: ExpansionConfig
) -> Expansion:
    """Space-joined top `max_terms` terms in descending-weight order."""
    if cfg.mode is not ExpansionMode.TOPICAL_TERMS:
        raise ValidationError(f"config mode is {cfg.mode.value}, expected topical_terms")
    weights = topical_term_weights(snippets, lm)
    if cfg.stopwords:
        weights = [w for w in weights if w.term not in cfg.stopwords]
    terms = [w.term for w in weights[: cfg.max_terms]]
    text = " ".join(terms)
    query_id = snippets[0].query_id if snippets else ""
    provenance = tuple(_snippet_ref(s) for s in snippets if tokenize(s.text))
    return Expansion(query_id, cfg.mode, text, provenance, fallback=not text)


def augment_query(
    query: Query,
    cache: Mapping[str, Sequence[Snippet]],
    retriever_cfg: RetrieverConfig,
    expansion_cfg: ExpansionConfig,
    lm: CorpusLanguageModel | None = None,
) -> Expansion:
    """Retrieve then expand. Empty retrieval (or an expansion that comes
    out empty) returns a fallback-flagged empty expansion."""
    snippets = retrieve(query, cache, retriever_cfg)
    if not snippets:
        return Expansion(query.id, expansion_cfg.mode, "", (), fallback=True)
    if expansion_cfg.mode is ExpansionMode.NATURAL_LANGUAGE:
        expansion = natural_language_expansion(snippets, expansion_cfg)
    else:
        if lm is None:
            raise ValidationError("topical term expansion requires a corpus language model")
        expansion = topical_term_expansion(snippets, lm, expansion_cfg)
    return replace(expansion, query_id=query.id)


def write_expansions(expansions: Iterable[Expansion], out: TextIO) -> None:
    """One JSON record per line: {"query_id", "mode", "text"}."""
    for expansion in expansions:
        out.write(
            json.dumps(
                {
                    "query_id": expansion.query_id,
                    "mode": expansion.mode.value,
                    "text": expansion.text,
                },
                ensure_ascii=False,
            )
            + "\n"
        )


def load_expansions(stream: Iterable[str] | str) -> dict[str, Expansion]:
    """Load an expansion file keyed by query id.

    Records with empty text are marked as fallbacks; provenance is not
    round-tripped through the file format.
    """
    expansions: dict[str, Expansion] = {}
    for line_no, line in _iter_lines(stream):
        record = _parse_record(line, line_no, ("query_id", "mode", "text"))
        qid = str(record["query_id"])
        try:
            mode = ExpansionMode(record["mode"])
        except ValueError:
            raise ParseError(f"unknown expansion mode {record['mode']!r}", line_no) from None
        if qid in expansions:
            raise ParseError(f"duplicate expansion for query {qid!r}", line_no)
        text = str(record["text"])
        expansions[qid] = Expansion(qid, mode, text, (), fallback=not text)
    return expansions
