import io
import math
import random
from collections import Counter

import pytest
from hypothesis import given
from hypothesis import strategies as st

from augrank.corpus_io import Passage, Query, RankedList
from augrank.errors import ConflictError, ParseError, UnknownIdError, ValidationError
from augrank.index import (
    FusionConfig,
    bm25_score,
    bm25_search,
    build_index,
    estimate_corpus_lm,
    fuse_runs,
    load_index,
    save_index,
    tokenize,
)
from oracles import bm25_oracle


class TestTokenize:
    def test_punctuation_split(self):
        assert tokenize("Hello, World!") == ["hello", "world"]

    def test_empty(self):
        assert tokenize("") == []

    def test_hyphen_and_digit_boundaries(self):
        assert tokenize("T5-xl re-ranker") == ["t5", "xl", "re", "ranker"]

    def test_underscore_is_a_boundary(self):
        assert tokenize("a_b") == ["a", "b"]

    def test_unicode(self):
        assert tokenize("Crème brûlée!") == ["crème", "brûlée"]

    @given(st.text(max_size=80))
    def test_idempotent_under_rejoin(self, text):
        tokens = tokenize(text)
        assert tokenize(" ".join(tokens)) == tokens
        assert all(tokens)


def tiny_corpus():
    return [
        Passage("d1", None, "apple banana apple"),
        Passage("d2", None, "banana cherry"),
        Passage("d3", None, "cherry cherry cherry apple"),
    ]


class TestBuildIndex:
    def test_empty_corpus(self):
        index = build_index([])
        assert index.doc_count == 0
        assert index.total_tokens == 0
        assert index.avg_doc_length == 0.0

    def test_single_passage_counts(self):
        index = build_index([Passage("d1", None, "a a b")])
        assert index.postings["a"] == [("d1", 2)]
        assert index.postings["b"] == [("d1", 1)]
        assert index.doc_lengths["d1"] == 3

    def test_duplicate_id(self):
        with pytest.raises(ConflictError):
            build_index([Passage("d1", None, "a"), Passage("d1", None, "b")])

    def test_collection_frequency_matches_brute_recount(self):
        index = build_index(tiny_corpus())
        recount = Counter(t for p in tiny_corpus() for t in tokenize(p.text))
        assert index.collection_frequency == dict(recount)
        assert index.total_tokens == sum(recount.values())
        assert index.doc_count == 3

    def test_statistics_invariants(self):
        index = build_index(tiny_corpus())
        assert index.total_tokens == sum(index.doc_lengths.values())
        assert index.total_tokens == sum(index.collection_frequency.values())
        for postings in index.postings.values():
            for pid, _ in postings:
                assert pid in index.doc_lengths


class TestBm25Score:
    def test_absent_term_contributes_zero(self):
        index = build_index(tiny_corpus())
        with_term = bm25_score(index, ["apple", "zebra"], "d1")
        without = bm25_score(index, ["apple"], "d1")
        assert with_term == without

    def test_empty_query(self):
        index = build_index(tiny_corpus())
        assert bm25_score(index, [], "d1") == 0.0

    def test_unknown_passage(self):
        index = build_index(tiny_corpus())
        with pytest.raises(UnknownIdError):
            bm25_score(index, ["apple"], "nope")

    def test_hand_computed_single_term(self):
        # "apple" appears in d1 (tf 2, len 3) over a 3-doc corpus, df=2,
        # avgdl = (3 + 2 + 4)/3 = 3
        index = build_index(tiny_corpus())
        idf = math.log(1 + (3 - 2 + 0.5) / (2 + 0.5))
        norm = 1 - 0.4 + 0.4 * 3 / 3
        expected = idf * 2 * (0.9 + 1) / (2 + 0.9 * norm)
        assert math.isclose(bm25_score(index, ["apple"], "d1"), expected, abs_tol=1e-9)

    def test_repeated_query_terms_accumulate(self):
        index = build_index(tiny_corpus())
        once = bm25_score(index, ["apple"], "d1")
        twice = bm25_score(index, ["apple", "apple"], "d1")
        assert math.isclose(twice, 2 * once)

    def test_matches_independent_oracle_on_random_corpora(self):
        rng = random.Random(13)
        vocab = ["red", "green", "blue", "cyan", "teal", "plum"]
        for _ in range(25):
            passages = [
                Passage(f"d{i}", None, " ".join(rng.choices(vocab, k=rng.randint(1, 12))))
                for i in range(rng.randint(1, 8))
            ]
            index = build_index(passages)
            doc_tokens = {p.id: tokenize(p.text) for p in passages}
            query = rng.choices(vocab, k=rng.randint(1, 4))
            for p in passages:
                assert math.isclose(
                    bm25_score(index, query, p.id),
                    bm25_oracle(doc_tokens, query, p.id),
                    abs_tol=1e-12,
                )


class TestBm25Search:
    def test_best_doc_first(self):
        index = build_index(tiny_corpus())
        result = bm25_search(index, Query("q", "banana cherry"), 1)
        assert result.passage_ids() == ("d2",)

    def test_no_matching_terms(self):
        index = build_index(tiny_corpus())
        result = bm25_search(index, Query("q", "zebra"), 5)
        assert result.entries == ()

    def test_k_larger_than_matches(self):
        index = build_index(tiny_corpus())
        result = bm25_search(index, Query("q", "apple"), 10)
        assert len(result.entries) == 2  # d1 and d3 contain apple
        scores = {pid: bm25_score(index, tokenize("apple"), pid) for pid in ("d1", "d3")}
        expected = tuple(sorted(scores.items(), key=lambda kv: (-kv[1], kv[0])))
        assert result.entries == expected

    def test_tie_broken_by_ascending_passage_id(self):
        passages = [Passage(pid, None, "same text here") for pid in ("zz", "aa", "mm")]
        index = build_index(passages)
        result = bm25_search(index, Query("q", "same"), 3)
        assert result.passage_ids() == ("aa", "mm", "zz")

    def test_invalid_k(self):
        index = build_index(tiny_corpus())
        with pytest.raises(ValidationError):
            bm25_search(index, Query("q", "apple"), 0)

    def test_equals_exhaustive_scoring(self):
        rng = random.Random(99)
        vocab = ["ant", "bee", "cat", "dog", "eel", "fox", "gnu"]
        for _ in range(20):
            passages = [
                Passage(f"d{i:02d}", None, " ".join(rng.choices(vocab, k=rng.randint(1, 15))))
                for i in range(rng.randint(2, 12))
            ]
            index = build_index(passages)
            query = Query("q", " ".join(rng.choices(vocab, k=3)))
            terms = tokenize(query.text)
            exhaustive = sorted(
                (
                    (pid, bm25_score(index, terms, pid))
                    for pid in index.doc_lengths
                    if bm25_score(index, terms, pid) > 0
                ),
                key=lambda kv: (-kv[1], kv[0]),
            )
            for k in range(1, len(passages) + 2):
                assert bm25_search(index, query, k).entries == tuple(exhaustive[:k])


class TestCorpusLanguageModel:
    def test_add_one_arithmetic(self):
        index = build_index([Passage("d1", None, "a a b")])
        lm = estimate_corpus_lm(index)
        assert math.isclose(lm.probability("a"), 0.6)
        assert math.isclose(lm.probability("b"), 0.4)

    def test_unseen_term(self):
        index = build_index([Passage("d1", None, "a a b")])
        lm = estimate_corpus_lm(index)
        assert math.isclose(lm.probability("c"), 0.2)

    def test_single_type_corpus(self):
        index = build_index([Passage("d1", None, "x")])
        lm = estimate_corpus_lm(index)
        assert lm.probability("x") == 1.0

    def test_empty_index_is_an_error(self):
        with pytest.raises(ValidationError):
            estimate_corpus_lm(build_index([]))

    @given(st.lists(st.sampled_from("abcde"), min_size=1, max_size=40))
    def test_strictly_positive_and_consistent(self, tokens):
        index = build_index([Passage("d1", None, " ".join(tokens))])
        lm = estimate_corpus_lm(index)
        vocab = set(tokens)
        assert lm.vocab_size == len(vocab)
        observed_mass = sum(lm.probability(t) for t in vocab)
        assert lm.probability("zzz") > 0
        # add-one over observed types: Σ (cf+1)/(total+V) = 1 exactly
        assert math.isclose(observed_mass, 1.0, rel_tol=1e-12)


class TestFuseRuns:
    def test_alpha_zero_keeps_dense_order(self):
        dense = RankedList("q", (("a", 5.0), ("b", 3.0), ("c", 1.0)), "dense")
        sparse = RankedList("q", (("c", 9.0), ("a", 2.0)), "sparse")
        fused = fuse_runs(dense, sparse, FusionConfig(0.0))
        restricted = [pid for pid in fused.passage_ids() if pid in {"a", "b", "c"}]
        assert restricted == ["a", "b", "c"]

    def test_single_doc_arithmetic(self):
        dense = RankedList("q", (("d1", 1.0),), "dense")
        sparse = RankedList("q", (("d1", 2.0),), "sparse")
        fused = fuse_runs(dense, sparse, FusionConfig(1.3))
        assert math.isclose(fused.entries[0][1], 3.6, abs_tol=1e-12)

    def test_disjoint_singletons_fill_with_minimum(self):
        # by hand: a = 1.0 + 1.3*3.0 (sparse fill), b = 1.0 (dense fill) + 1.3*3.0
        dense = RankedList("q", (("a", 1.0),), "dense")
        sparse = RankedList("q", (("b", 3.0),), "sparse")
        fused = fuse_runs(dense, sparse, FusionConfig(1.3))
        assert fused.passage_ids() == ("a", "b")  # tie resolved by passage id
        assert all(math.isclose(s, 1.0 + 1.3 * 3.0) for _, s in fused.entries)

    def test_query_id_mismatch(self):
        with pytest.raises(ValidationError):
            fuse_runs(
                RankedList("q1", (("a", 1.0),)),
                RankedList("q2", (("a", 1.0),)),
                FusionConfig(1.0),
            )

    def test_monotone_in_sparse_score(self):
        dense = RankedList("q", (("a", 1.0), ("b", 1.0)), "dense")
        low = RankedList("q", (("a", 1.0), ("b", 0.5)), "sparse")
        high = RankedList("q", (("b", 2.0), ("a", 1.0)), "sparse")
        assert fuse_runs(dense, low, FusionConfig(1.3)).passage_ids()[0] == "a"
        assert fuse_runs(dense, high, FusionConfig(1.3)).passage_ids()[0] == "b"

    def test_negative_alpha_rejected(self):
        with pytest.raises(ValidationError):
            FusionConfig(-0.1)
        with pytest.raises(ValidationError):
            FusionConfig(float("inf"))


class TestIndexPersistence:
    def test_round_trip(self):
        index = build_index(tiny_corpus())
        buffer = io.StringIO()
        save_index(index, buffer)
        buffer.seek(0)
        loaded = load_index(buffer)
        assert loaded.postings == index.postings
        assert loaded.doc_lengths == index.doc_lengths
        assert loaded.doc_count == index.doc_count
        assert loaded.avg_doc_length == index.avg_doc_length
        assert loaded.collection_frequency == index.collection_frequency
        query = Query("q", "apple cherry")
        assert bm25_search(loaded, query, 3).entries == bm25_search(index, query, 3).entries

    def test_magic_header_checked(self):
        with pytest.raises(ParseError, match="header"):
            load_index(io.StringIO("something else\n{}"))
