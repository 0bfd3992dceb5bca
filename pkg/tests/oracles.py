"""Brute-force reference implementations used to cross-check the library.

Everything here is coded straight from the definitions with plain loops
and counting, deliberately avoiding the library's own code paths, so a
bug in the implementation cannot hide in its oracle.
"""

import math


def bm25_oracle(doc_tokens, query_tokens, passage_id, k1=0.9, b=0.4):
    """BM25 over a {pid: [token, ...]} collection by direct formula."""
    n_docs = len(doc_tokens)
    avgdl = sum(len(toks) for toks in doc_tokens.values()) / n_docs
    mine = doc_tokens[passage_id]
    score = 0.0
    for term in query_tokens:
        tf = mine.count(term)
        if tf == 0:
            continue
        df = sum(1 for toks in doc_tokens.values() if term in toks)
        idf = math.log(1.0 + (n_docs - df + 0.5) / (df + 0.5))
        norm = 1.0 - b + b * len(mine) / avgdl
        score += idf * tf * (k1 + 1.0) / (tf + k1 * norm)
    return score


def kl_weights_oracle(snippet_token_lists, corpus_token_lists):
    """{term: P(t|A) * log2(P(t|A)/P(t|C))} with add-one smoothed P(t|C)."""
    corpus_tokens = [t for toks in corpus_token_lists for t in toks]
    total = len(corpus_tokens)
    vocab = len(set(corpus_tokens))
    snippet_tokens = [t for toks in snippet_token_lists for t in toks]
    size = len(snippet_tokens)
    weights = {}
    for term in set(snippet_tokens):
        p_a = snippet_tokens.count(term) / size
        p_c = (corpus_tokens.count(term) + 1) / (total + vocab)
        weights[term] = p_a * math.log2(p_a / p_c)
    return weights


def success_oracle(ranked_pids, judged, k, threshold=1):
    return 1.0 if any(judged.get(pid, 0) >= threshold for pid in ranked_pids[:k]) else 0.0


def mrr_oracle(ranked_pids, judged, k, threshold=1):
    for rank, pid in enumerate(ranked_pids[:k], start=1):
        if judged.get(pid, 0) >= threshold:
            return 1.0 / rank
    return 0.0


def ndcg_oracle(ranked_pids, judged, k):
    ideal = sorted(judged.values(), reverse=True)[:k]
    idcg = sum(g / math.log2(i + 2) for i, g in enumerate(ideal))
    if idcg == 0:
        return 0.0
    dcg = sum(
        judged.get(pid, 0) / math.log2(i + 2) for i, pid in enumerate(ranked_pids[:k])
    )
    return dcg / idcg


def ap_oracle(ranked_pids, judged, threshold=1):
    total_relevant = sum(1 for g in judged.values() if g >= threshold)
    if total_relevant == 0:
        return 0.0
    hits = 0
    acc = 0.0
    for rank, pid in enumerate(ranked_pids, start=1):
        if judged.get(pid, 0) >= threshold:
            hits += 1
            acc += hits / rank
    return acc / total_relevant


def t_two_tailed_p_oracle(t, df):
    """High-precision two-tailed Student-t p-value via mpmath."""
    import mpmath

    with mpmath.workdps(50):
        x = mpmath.mpf(df) / (df + mpmath.mpf(t) ** 2)
        return float(mpmath.betainc(mpmath.mpf(df) / 2, mpmath.mpf(1) / 2, 0, x, regularized=True))
