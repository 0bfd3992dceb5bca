"""Inverted index, BM25 initial ranking, corpus language model, and
sparse/dense run fusion.

BM25 uses k1=0.9, b=0.4 with idf(t) = ln(1 + (N - df + 0.5)/(df + 0.5)),
the common passage-ranking defaults. The corpus language model applies
add-one smoothing over the observed vocabulary so that any term, including
unseen ones, has strictly positive probability. Ties everywhere break by
ascending passage id so results are reproducible across platforms.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter, defaultdict
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from typing import TextIO

from .corpus_io import Passage, Query, RankedList
from .errors import ConflictError, ParseError, UnknownIdError, ValidationError

BM25_K1 = 0.9
BM25_B = 0.4

INDEX_MAGIC = "augrank-index/1"

# Runs of Unicode letters/digits; underscore and punctuation are boundaries.
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

TokenStream = list[str]


def tokenize(text: str) -> TokenStream:
    """Lowercased tokens split on non-alphanumeric boundaries.

    "T5-xl re-ranker" -> ["t5", "xl", "re", "ranker"]
    """
    return [m.group(0).lower() for m in _TOKEN_RE.finditer(text)]


@dataclass
class InvertedIndex:
    postings: dict[str, list[tuple[str, int]]]
    doc_lengths: dict[str, int]
    doc_count: int
    avg_doc_length: float
    total_tokens: int
    collection_frequency: dict[str, int]


@dataclass(frozen=True)
class CorpusLanguageModel:
    """Smoothed unigram model over the indexed corpus.

    probability(t) = (cf(t) + 1) / (total_tokens + vocab_size), where
    vocab_size counts observed term types only; unseen terms get cf = 0.
    """

    collection_frequency: Mapping[str, int]
    total_tokens: int
    vocab_size: int
    smoothing: str = "add-one"

    def probability(self, term: str) -> float:
        cf = self.collection_frequency.get(term, 0)
        return (cf + 1) / (self.total_tokens + self.vocab_size)


@dataclass(frozen=True)
class FusionConfig:
    """Weight on the sparse score in dense + alpha * sparse fusion."""

    alpha: float

    def __post_init__(self):
        if not math.isfinite(self.alpha) or self.alpha < 0:
            raise ValidationError(f"fusion alpha must be finite and >= 0, got {self.alpha!r}")


def build_index(passages: Sequence[Passage]) -> InvertedIndex:
    """Build an inverted index over passage texts (titles are not indexed)."""
    postings: dict[str, list[tuple[str, int]]] = defaultdict(list)
    doc_lengths: dict[str, int] = {}
    collection_frequency: Counter[str] = Counter()
    for passage in passages:
        if passage.id in doc_lengths:
            raise ConflictError(f"duplicate passage id {passage.id!r}")
        tokens = tokenize(passage.text)
        doc_lengths[passage.id] = len(tokens)
        counts = Counter(tokens)
        for term, tf in counts.items():
            postings[term].append((passage.id, tf))
            collection_frequency[term] += tf
    total = sum(doc_lengths.values())
    count = len(doc_lengths)
    return InvertedIndex(
        postings=dict(postings),
        doc_lengths=doc_lengths,
        doc_count=count,
        avg_doc_length=total / count if count else 0.0,
        total_tokens=total,
        collection_frequency=dict(collection_frequency),
    )


def _idf(index: InvertedIndex, term: str) -> float:
    df = len(index.postings.get(term, ()))
    return math.log(1.0 + (index.doc_count - df + 0.5) / (df + 0.5))


def _tf_weight(index: InvertedIndex, tf: int, doc_length: int, k1: float, b: float) -> float:
    norm = 1.0 - b + b * doc_length / index.avg_doc_length
    return tf * (k1 + 1.0) / (tf + k1 * norm)


def bm25_score(
    index: InvertedIndex,
    query_terms: Sequence[str],
    passage_id: str,
    k1: float = BM25_K1,
    b: float = BM25_B,
) -> float:
    """BM25 score of one passage for a query token stream.

    Sums over the stream as given, so repeated query terms contribute
    repeatedly. Terms absent from the passage contribute 0.
    """
    if passage_id not in index.doc_lengths:
        raise UnknownIdError(f"passage {passage_id!r} not in index")
    doc_length = index.doc_lengths[passage_id]
    score = 0.0
    for term in query_terms:
        tf = 0
        for pid, freq in index.postings.get(term, ()):
            if pid == passage_id:
                tf = freq
                break
        if tf == 0:
            continue
        score += _idf(index, term) * _tf_weight(index, tf, doc_length, k1, b)
    return score


def bm25_search(index: InvertedIndex, query: Query, k: int, tag: str = "bm25") -> RankedList:
    """Top-k passages by BM25, score descending, ties by ascending passage id.

    Only passages containing at least one query term are returned, so the
    result may be shorter than k.
    """
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    scores: defaultdict[str, float] = defaultdict(float)
    for term in tokenize(query.text):
        postings = index.postings.get(term)
        if not postings:
            continue
        idf = _idf(index, term)
        for pid, tf in postings:
            scores[pid] += idf * _tf_weight(index, tf, index.doc_lengths[pid], BM25_K1, BM25_B)
    ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))[:k]
    return RankedList(query.id, tuple(ranked), tag)


def estimate_corpus_lm(index: InvertedIndex) -> CorpusLanguageModel:
    """Add-one smoothed corpus language model from index statistics."""
    if index.total_tokens <= 0:
        raise ValidationError("cannot estimate a language model from an empty index")
    return CorpusLanguageModel(
        collection_frequency=index.collection_frequency,
        total_tokens=index.total_tokens,
        vocab_size=len(index.collection_frequency),
    )


def fuse_runs(
    dense: RankedList, sparse: RankedList, cfg: FusionConfig, tag: str = "hybrid"
) -> RankedList:
    """Linear fusion over the union of both lists: dense + alpha * sparse.

    A passage missing from one list takes that list's minimum score
    (0.0 when the list is empty), so an unseen passage never outranks a
    seen one. Output sorted by fused score descending, ties by passage id.
    """
    if dense.query_id != sparse.query_id:
        raise ValidationError(
            f"query id mismatch: dense {dense.query_id!r} vs sparse {sparse.query_id!r}"
        )
    dense_scores = dict(dense.entries)
    sparse_scores = dict(sparse.entries)
    dense_fill = min(dense_scores.values()) if dense_scores else 0.0
    sparse_fill = min(sparse_scores.values()) if sparse_scores else 0.0
    fused = [
        (pid, dense_scores.get(pid, dense_fill) + cfg.alpha * sparse_scores.get(pid, sparse_fill))
        for pid in set(dense_scores) | set(sparse_scores)
    ]
    fused.sort(key=lambda e: (-e[1], e[0]))
    return RankedList(dense.query_id, tuple(fused), tag)


def save_index(index: InvertedIndex, out: TextIO) -> None:
    """Persist an index as a magic header line followed by one JSON payload."""
    out.write(INDEX_MAGIC + "\n")
    json.dump(
        {
            "postings": {t: [[pid, tf] for pid, tf in plist] for t, plist in index.postings.items()},
            "doc_lengths": index.doc_lengths,
            "doc_count": index.doc_count,
            "avg_doc_length": index.avg_doc_length,
            "total_tokens": index.total_tokens,
            "collection_frequency": index.collection_frequency,
        },
        out,
        separators=(",", ":"),
    )
    out.write("\n")


def load_index(stream: TextIO) -> InvertedIndex:
    header = stream.readline().rstrip("\n")
    if header != INDEX_MAGIC:
        raise ParseError(f"not an augrank index artifact (expected {INDEX_MAGIC!r} header)")
    try:
        payload = json.load(stream)
    except json.JSONDecodeError as exc:
        raise ParseError(f"corrupt index payload: {exc}") from None
    try:
        return InvertedIndex(
            postings={t: [(pid, tf) for pid, tf in plist] for t, plist in payload["postings"].items()},
            doc_lengths=payload["doc_lengths"],
            doc_count=payload["doc_count"],
            avg_doc_length=payload["avg_doc_length"],
            total_tokens=payload["total_tokens"],
            collection_frequency=payload["collection_frequency"],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"corrupt index payload: {exc}") from None
