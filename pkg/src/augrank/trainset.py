"""Training sequence construction and positive upsampling.

Balancing duplicates the positive examples round-robin, in their original
order, until positive and negative counts are equal; duplicates are
appended after the original examples so the input order (and the negative
subsequence in particular) is untouched. Shuffling belongs to the training
harness, not here.
"""

from __future__ import annotations

from collections.abc import Iterable, Mapping
from dataclasses import dataclass

from .augment import Expansion
from .corpus_io import Passage, Query, TrainingExample, TrainingLabel
from .errors import UnknownIdError, ValidationError
from .rerank import RelevanceLabel, build_augmented_input, build_input, training_sequence


@dataclass(frozen=True)
class TrainingSet:
    examples: tuple[TrainingExample, ...]
    positives: int
    negatives: int

    def __post_init__(self):
        if self.positives + self.negatives != len(self.examples):
            raise ValidationError("positive + negative counts do not match example count")


def make_pairs(
    triples: Iterable[TrainingExample],
    corpus: Mapping[str, Passage],
    queries: Mapping[str, Query],
) -> TrainingSet:
    """Validate that every triple's ids resolve and tally the label counts."""
    examples = []
    positives = negatives = 0
    for triple in triples:
        if triple.query_id not in queries:
            raise UnknownIdError(f"training triple references unknown query {triple.query_id!r}")
        if triple.passage_id not in corpus:
            raise UnknownIdError(
                f"training triple references unknown passage {triple.passage_id!r}"
            )
        examples.append(triple)
        if triple.label is TrainingLabel.RELEVANT:
            positives += 1
        else:
            negatives += 1
    return TrainingSet(tuple(examples), positives, negatives)


def balance_upsample(training_set: TrainingSet) -> TrainingSet:
    """Duplicate positives round-robin until they match the negative count.

    Already-balanced (or positive-heavy) sets pass through unchanged.
    Negatives are never duplicated.
    """
    if training_set.positives < 1 or training_set.negatives < 1:
        raise ValidationError(
            "balancing needs at least one positive and one negative example"
        )
    deficit = training_set.negatives - training_set.positives
    if deficit <= 0:
        return training_set
    positive_examples = [
        e for e in training_set.examples if e.label is TrainingLabel.RELEVANT
    ]
    extras = tuple(positive_examples[i % len(positive_examples)] for i in range(deficit))
    return TrainingSet(
        training_set.examples + extras,
        positives=training_set.negatives,
        negatives=training_set.negatives,
    )


def render_training_sequences(
    training_set: TrainingSet,
    queries: Mapping[str, Query],
    corpus: Mapping[str, Passage],
    expansions: Mapping[str, Expansion] | None = None,
) -> list[str]:
    """One training string per example, ending in " true" / " false".

    Examples whose query has an expansion get the augmented template (empty
    fallback expansions revert to the plain one).
    """
    sequences = []
    for example in training_set.examples:
        query = queries.get(example.query_id)
        if query is None:
            raise UnknownIdError(f"unknown query {example.query_id!r}")
        passage = corpus.get(example.passage_id)
        if passage is None:
            raise UnknownIdError(f"unknown passage {example.passage_id!r}")
        expansion = expansions.get(example.query_id) if expansions else None
        if expansion is not None:
            rerank_input = build_augmented_input(query, expansion, passage)
        else:
            rerank_input = build_input(query, passage)
        label = (
            RelevanceLabel.TRUE
            if example.label is TrainingLabel.RELEVANT
            else RelevanceLabel.FALSE
        )
        sequences.append(training_sequence(rerank_input, label))
    return sequences
