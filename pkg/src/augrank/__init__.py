"""augrank: snippet-augmented query expansion, re-ranking, and IR evaluation."""

from .augment import (
    Expansion,
    ExpansionConfig,
    ExpansionMode,
    RetrieverConfig,
    TermWeight,
    augment_query,
    filter_snippets,
    natural_language_expansion,
    retrieve,
    topical_term_expansion,
    topical_term_weights,
)
from .corpus_io import (
    Passage,
    Qrels,
    Query,
    RankedList,
    Snippet,
    SnippetKind,
    SnippetSource,
    TrainingExample,
    TrainingLabel,
    load_corpus,
    load_queries,
    load_snippet_cache,
    load_triples,
    parse_qrels,
    parse_run,
    write_run,
)
from .errors import (
    ConflictError,
    ParseError,
    ProtocolError,
    ToolkitError,
    TransportError,
    UnknownIdError,
    ValidationError,
)
from .evaluation import (
    MetricConfig,
    MetricReport,
    SignificanceMarker,
    TTestResult,
    average_precision,
    compare_runs,
    evaluate_run,
    mrr_at_k,
    ndcg_at_k,
    paired_t_test,
    success_at_k,
)
from .index import (
    CorpusLanguageModel,
    FusionConfig,
    InvertedIndex,
    bm25_score,
    bm25_search,
    build_index,
    estimate_corpus_lm,
    fuse_runs,
    tokenize,
)
from .rerank import (
    RelevanceLabel,
    RerankInput,
    ScorerEndpoint,
    ScorerKind,
    build_augmented_input,
    build_input,
    rerank_topk,
    score_batch,
    split_input,
)
from .trainset import TrainingSet, balance_upsample, make_pairs, render_training_sequences

__version__ = "0.1.0"
