"""Command-line entry point and the end-to-end experiment pipeline.

Subcommands: `index build|search`, `fuse`, `expand`, `rerank`,
`trainset build`, `eval`, `compare`, and `pipeline run --config <file>`.
Exit codes: 0 success, 1 usage error, 2 data error, 3 transport error.

`pipeline run` is driven by a flat JSON key-value config (any key can be
overridden by a flag) and stages its artifacts in the output directory:
expansions.jsonl, inputs.jsonl, reranked.run, metrics.tsv, per_query.tsv,
and compare.tsv when a baseline run is configured. The core pipeline is
randomness-free: rerunning one config reproduces every artifact
byte-for-byte with the baseline scorer.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import os
import sys
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from typing import TextIO

from .augment import (
    Expansion,
    ExpansionConfig,
    ExpansionMode,
    RetrieverConfig,
    augment_query,
    load_expansions,
    write_expansions,
)
from .corpus_io import (
    Passage,
    Query,
    RankedList,
    Snippet,
    SnippetSource,
    load_corpus,
    load_queries,
    load_snippet_cache,
    load_triples,
    parse_qrels,
    parse_run,
    write_run,
)
from .errors import ParseError, ToolkitError, TransportError, ValidationError
from .evaluation import (
    MetricConfig,
    MetricReport,
    TTestResult,
    compare_runs,
    evaluate_run,
)
from .index import (
    FusionConfig,
    InvertedIndex,
    bm25_search,
    build_index,
    estimate_corpus_lm,
    fuse_runs,
    load_index,
    save_index,
)
from .rerank import ScorerEndpoint, ScorerKind, build_augmented_input, build_input, rerank_topk
from .trainset import balance_upsample, make_pairs, render_training_sequences

DEFAULT_METRICS = ("s@1", "s@5", "s@10", "s@20", "mrr@10", "ndcg@10", "map")

_MODE_ALIASES = {
    "none": "none",
    "nl": ExpansionMode.NATURAL_LANGUAGE.value,
    "natural_language": ExpansionMode.NATURAL_LANGUAGE.value,
    "terms": ExpansionMode.TOPICAL_TERMS.value,
    "topical_terms": ExpansionMode.TOPICAL_TERMS.value,
}
_SOURCE_ALIASES = {
    "serp": SnippetSource.WEB_SERP,
    "web_serp": SnippetSource.WEB_SERP,
    "wiki": SnippetSource.WIKI,
}
_SCORER_ALIASES = {
    "baseline": ScorerKind.LEXICAL_BASELINE,
    "lexical_baseline": ScorerKind.LEXICAL_BASELINE,
    "remote": ScorerKind.REMOTE,
}


class UsageError(Exception):
    """Bad flags or config keys; exits 1."""


class StageError(ToolkitError):
    """Wraps a failure with the name of the pipeline stage that raised it."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"pipeline stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class MetricSelection:
    """Which metric tokens to report, plus the config that computes them."""

    tokens: tuple[str, ...]
    config: MetricConfig


def parse_metric_tokens(tokens: Sequence[str]) -> MetricSelection:
    """Turn tokens like s@5, mrr@10, ndcg@10, map into a MetricConfig."""
    success: set[int] = set()
    mrr_cutoff = ndcg_cutoff = None
    cleaned = []
    for raw in tokens:
        token = raw.strip().lower()
        if not token:
            continue
        try:
            if token == "map":
                pass
            elif token.startswith("s@"):
                success.add(int(token[2:]))
            elif token.startswith("mrr@"):
                mrr_cutoff = int(token[4:])
            elif token.startswith("ndcg@"):
                ndcg_cutoff = int(token[5:])
            else:
                raise ValueError
        except ValueError:
            raise ValidationError(f"unknown metric token {raw!r}") from None
        cleaned.append(token)
    if not cleaned:
        raise ValidationError("no metrics requested")
    config = MetricConfig(
        success_cutoffs=frozenset(success),
        mrr_cutoff=mrr_cutoff or 10,
        ndcg_cutoff=ndcg_cutoff or 10,
    )
    return MetricSelection(tuple(cleaned), config)


def write_metric_report(report: MetricReport, tokens: Sequence[str], out: TextIO) -> None:
    for token in tokens:
        out.write(f"{token}\t{report.aggregate[token]:.4f}\n")
    out.write(f"queries\t{report.query_count}\n")
    out.write(f"unjudged\t{len(report.unjudged_query_ids)}\n")


def write_per_query_report(report: MetricReport, tokens: Sequence[str], out: TextIO) -> None:
    out.write("query_id\t" + "\t".join(tokens) + "\n")
    for qid in sorted(report.per_query):
        values = report.per_query[qid]
        out.write(qid + "\t" + "\t".join(f"{values[t]:.6f}" for t in tokens) + "\n")


def load_per_query_report(stream: Iterable[str] | str) -> MetricReport:
    """Read a per-query TSV back into a MetricReport (means recomputed)."""
    lines = stream.splitlines() if isinstance(stream, str) else list(stream)
    rows = [line.rstrip("\n") for line in lines if line.strip()]
    if not rows:
        raise ParseError("empty per-query report")
    header = rows[0].split("\t")
    if header[:1] != ["query_id"] or len(header) < 2:
        raise ParseError(f"bad per-query report header: {rows[0]!r}")
    tokens = header[1:]
    per_query: dict[str, dict[str, float]] = {}
    for line_no, row in enumerate(rows[1:], start=2):
        cells = row.split("\t")
        if len(cells) != len(header):
            raise ParseError(f"expected {len(header)} columns, got {len(cells)}", line_no)
        qid = cells[0]
        if qid in per_query:
            raise ParseError(f"duplicate query id {qid!r}", line_no)
        try:
            per_query[qid] = {t: float(v) for t, v in zip(tokens, cells[1:])}
        except ValueError:
            raise ParseError(f"non-numeric metric value in row {row!r}", line_no) from None
    if not per_query:
        raise ParseError("per-query report has no data rows")
    aggregate = {
        t: sum(per_query[qid][t] for qid in sorted(per_query)) / len(per_query) for t in tokens
    }
    return MetricReport(per_query, aggregate, len(per_query))


def write_comparison(rows: Sequence[tuple[str, TTestResult]], out: TextIO) -> None:
    out.write("metric\tt\tdf\tp\tmean_diff\tmarker\n")
    for metric, result in rows:
        out.write(
            f"{metric}\t{result.t_statistic:.4f}\t{result.degrees_of_freedom}\t"
            f"{result.p_value:.6g}\t{result.mean_difference:.4f}\t{result.marker.value}\n"
        )


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything `pipeline run` needs, loaded from a flat JSON object."""

    corpus_path: str
    queries_path: str
    qrels_path: str
    output_dir: str
    snippet_cache_path: str | None = None
    initial_run_path: str | None = None
    dense_run_path: str | None = None
    baseline_run_path: str | None = None
    fusion_alpha: float = 1.3
    mode: str = "none"
    max_snippets: int = 5
    source: SnippetSource = SnippetSource.WEB_SERP
    skip_direct_answers: bool = True
    max_words: int = 64
    max_terms: int = 64
    scorer_kind: ScorerKind = ScorerKind.LEXICAL_BASELINE
    scorer_address: str | None = None
    batch_size: int = 32
    timeout: float = 10.0
    rerank_depth: int = 100
    metrics: tuple[str, ...] = DEFAULT_METRICS
    run_tag: str = "augrank"

    def __post_init__(self):
        if self.mode not in ("none", *(m.value for m in ExpansionMode)):
            raise ValidationError(f"unknown expansion mode {self.mode!r}")
        if self.rerank_depth < 1:
            raise ValidationError(f"rerank_depth must be >= 1, got {self.rerank_depth}")


_CONFIG_KEYS = {
    "corpus": "corpus_path",
    "queries": "queries_path",
    "qrels": "qrels_path",
    "output_dir": "output_dir",
    "snippet_cache": "snippet_cache_path",
    "initial_run": "initial_run_path",
    "dense_run": "dense_run_path",
    "baseline_run": "baseline_run_path",
    "fusion_alpha": "fusion_alpha",
    "mode": "mode",
    "max_snippets": "max_snippets",
    "source": "source",
    "skip_direct_answers": "skip_direct_answers",
    "max_words": "max_words",
    "max_terms": "max_terms",
    "scorer": "scorer_kind",
    "scorer_address": "scorer_address",
    "batch_size": "batch_size",
    "timeout": "timeout",
    "rerank_depth": "rerank_depth",
    "metrics": "metrics",
    "run_tag": "run_tag",
}


def load_experiment_config(path: str, overrides: Mapping[str, object] | None = None) -> ExperimentConfig:
    """Load a flat JSON config, apply CLI overrides, and validate paths."""
    with open(path, encoding="utf-8") as handle:
        try:
            data = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ParseError(f"config {path}: invalid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ParseError(f"config {path}: expected a JSON object")
    values: dict[str, object] = {}
    for key, raw in data.items():
        if key not in _CONFIG_KEYS:
            raise ValidationError(f"config {path}: unknown key {key!r}")
        values[_CONFIG_KEYS[key]] = raw
    for key, raw in (overrides or {}).items():
        if raw is not None:
            values[key] = raw

    if "mode" in values:
        mode = str(values["mode"]).lower()
        if mode not in _MODE_ALIASES:
            raise ValidationError(f"unknown expansion mode {values['mode']!r}")
        values["mode"] = _MODE_ALIASES[mode]
    if "source" in values:
        source = str(values["source"]).lower()
        if source not in _SOURCE_ALIASES:
            raise ValidationError(f"unknown snippet source {values['source']!r}")
        values["source"] = _SOURCE_ALIASES[source]
    if "scorer_kind" in values:
        scorer = str(values["scorer_kind"]).lower()
        if scorer not in _SCORER_ALIASES:
            raise ValidationError(f"unknown scorer {values['scorer_kind']!r}")
        values["scorer_kind"] = _SCORER_ALIASES[scorer]
    if "metrics" in values:
        raw_metrics = values["metrics"]
        if isinstance(raw_metrics, str):
            raw_metrics = raw_metrics.split(",")
        values["metrics"] = tuple(str(t) for t in raw_metrics)
    for key, cast in (
        ("fusion_alpha", float),
        ("timeout", float),
        ("max_snippets", int),
        ("max_words", int),
        ("max_terms", int),
        ("batch_size", int),
        ("rerank_depth", int),
    ):
        if key in values:
            try:
                values[key] = cast(values[key])
            except (TypeError, ValueError):
                raise ValidationError(
                    f"config {path}: {key} must be a number, got {values[key]!r}"
                ) from None
    if "skip_direct_answers" in values and not isinstance(values["skip_direct_answers"], bool):
        raise ValidationError(f"config {path}: skip_direct_answers must be true or false")

    required = {"corpus_path", "queries_path", "qrels_path", "output_dir"}
    missing = sorted(required - values.keys())
    if missing:
        raise ValidationError(f"config {path}: missing required keys: {', '.join(missing)}")
    try:
        cfg = ExperimentConfig(**values)  # type: ignore[arg-type]
    except TypeError as exc:
        raise ValidationError(f"config {path}: {exc}") from None
    parse_metric_tokens(cfg.metrics)  # fail fast on bad metric tokens

    for name in (
        "corpus_path",
        "queries_path",
        "qrels_path",
        "snippet_cache_path",
        "initial_run_path",
        "dense_run_path",
        "baseline_run_path",
    ):
        value = getattr(cfg, name)
        if value is not None and not os.path.exists(value):
            raise ValidationError(f"config {path}: {name} {value!r} does not exist")
    return cfg


@contextlib.contextmanager
def _stage(name: str):
    try:
        yield
    except StageError:
        raise
    except (ToolkitError, OSError) as exc:
        raise StageError(name, exc) from exc


def run_pipeline(cfg: ExperimentConfig) -> MetricReport:
    """index -> initial ranking -> (fusion) -> expansion -> rerank -> eval
    -> (compare). Returns the treatment metric report; artifacts land in
    cfg.output_dir."""
    os.makedirs(cfg.output_dir, exist_ok=True)

    def out_path(name: str) -> str:
        return os.path.join(cfg.output_dir, name)

    with _stage("load"):
        with open(cfg.corpus_path, encoding="utf-8") as handle:
            passages = load_corpus(handle)
        corpus = {p.id: p for p in passages}
        with open(cfg.queries_path, encoding="utf-8") as handle:
            queries = load_queries(handle)
        with open(cfg.qrels_path, encoding="utf-8") as handle:
            qrels = parse_qrels(handle)
        cache: dict[str, list[Snippet]] = {}
        if cfg.snippet_cache_path:
            with open(cfg.snippet_cache_path, encoding="utf-8") as handle:
                cache = load_snippet_cache(handle)

    topical = cfg.mode == ExpansionMode.TOPICAL_TERMS.value
    with _stage("index"):
        index = lm = None
        if cfg.initial_run_path is None or topical:
            index = build_index(passages)
        if topical:
            lm = estimate_corpus_lm(index)

    with _stage("initial"):
        if cfg.initial_run_path:
            with open(cfg.initial_run_path, encoding="utf-8") as handle:
                initial = {r.query_id: r for r in parse_run(handle)}
        else:
            initial = {}
            for query in queries:
                ranked = bm25_search(index, query, cfg.rerank_depth)
                if ranked.entries:
                    initial[query.id] = ranked

    with _stage("fuse"):
        if cfg.dense_run_path:
            with open(cfg.dense_run_path, encoding="utf-8") as handle:
                dense = {r.query_id: r for r in parse_run(handle)}
            fusion = FusionConfig(cfg.fusion_alpha)
            fused = {}
            for qid in sorted(set(dense) | set(initial)):
                fused[qid] = fuse_runs(
                    dense.get(qid, RankedList(qid, (), "dense")),
                    initial.get(qid, RankedList(qid, (), "sparse")),
                    fusion,
                )
            initial = fused

    with _stage("expand"):
        expansions: dict[str, Expansion] = {}
        if cfg.mode != "none":
            retriever_cfg = RetrieverConfig(cfg.max_snippets, cfg.source, cfg.skip_direct_answers)
            expansion_cfg = ExpansionConfig(ExpansionMode(cfg.mode), cfg.max_words, cfg.max_terms)
            for query in queries:
                expansions[query.id] = augment_query(
                    query, cache, retriever_cfg, expansion_cfg, lm
                )
            with open(out_path("expansions.jsonl"), "w", encoding="utf-8") as handle:
                write_expansions((expansions[q.id] for q in queries), handle)

    with _stage("rerank"):
        endpoint = ScorerEndpoint(cfg.scorer_kind, cfg.scorer_address, cfg.batch_size, cfg.timeout)
        reranked = []
        with open(out_path("inputs.jsonl"), "w", encoding="utf-8") as inputs_file:
            for query in queries:
                ranked = initial.get(query.id)
                if ranked is None or not ranked.entries:
                    continue
                depth = min(cfg.rerank_depth, len(ranked.entries))
                expansion = expansions.get(query.id)
                for pid, _ in ranked.entries[:depth]:
                    if pid not in corpus:
                        continue  # rerank_topk raises the definitive error
                    if expansion is not None:
                        item = build_augmented_input(query, expansion, corpus[pid])
                    else:
                        item = build_input(query, corpus[pid])
                    inputs_file.write(
                        json.dumps(
                            {
                                "query_id": item.query_id,
                                "passage_id": item.passage_id,
                                "sequence": item.sequence,
                            },
                            ensure_ascii=False,
                        )
                        + "\n"
                    )
                reranked.append(
                    rerank_topk(ranked, corpus, query, expansion, endpoint, depth, cfg.run_tag)
                )
        with open(out_path("reranked.run"), "w", encoding="utf-8") as handle:
            write_run(reranked, handle)

    with _stage("eval"):
        selection = parse_metric_tokens(cfg.metrics)
        report = evaluate_run(reranked, qrels, selection.config)
        with open(out_path("metrics.tsv"), "w", encoding="utf-8") as handle:
            write_metric_report(report, selection.tokens, handle)
        with open(out_path("per_query.tsv"), "w", encoding="utf-8") as handle:
            write_per_query_report(report, selection.tokens, handle)

    with _stage("compare"):
        if cfg.baseline_run_path:
            with open(cfg.baseline_run_path, encoding="utf-8") as handle:
                baseline_lists = parse_run(handle)
            baseline_report = evaluate_run(baseline_lists, qrels, selection.config)
            rows = [
                (token, compare_runs(baseline_report, report, token))
                for token in selection.tokens
            ]
            with open(out_path("compare.tsv"), "w", encoding="utf-8") as handle:
                write_comparison(rows, handle)

    return report


# ---------------------------------------------------------------------------
# argparse wiring


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


@contextlib.contextmanager
def _open_out(path: str | None):
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8") as handle:
            yield handle


def _load_corpus_map(path: str) -> tuple[list[Passage], dict[str, Passage]]:
    with open(path, encoding="utf-8") as handle:
        passages = load_corpus(handle)
    return passages, {p.id: p for p in passages}


def _load_query_map(path: str) -> tuple[list[Query], dict[str, Query]]:
    with open(path, encoding="utf-8") as handle:
        queries = load_queries(handle)
    return queries, {q.id: q for q in queries}


def _cmd_index_build(args) -> None:
    passages, _ = _load_corpus_map(args.corpus)
    index = build_index(passages)
    with open(args.out, "w", encoding="utf-8") as handle:
        save_index(index, handle)
    print(f"indexed {index.doc_count} passages, {index.total_tokens} tokens -> {args.out}")


def _load_index_artifact(path: str) -> InvertedIndex:
    with open(path, encoding="utf-8") as handle:
        return load_index(handle)


def _cmd_index_search(args) -> None:
    index = _load_index_artifact(args.index)
    queries, _ = _load_query_map(args.queries)
    lists = []
    for query in queries:
        ranked = bm25_search(index, query, args.k, tag=args.tag)
        if ranked.entries:
            lists.append(ranked)
    with _open_out(args.out) as out:
        write_run(lists, out)


def _cmd_fuse(args) -> None:
    with open(args.dense, encoding="utf-8") as handle:
        dense = {r.query_id: r for r in parse_run(handle)}
    with open(args.sparse, encoding="utf-8") as handle:
        sparse = {r.query_id: r for r in parse_run(handle)}
    fusion = FusionConfig(args.alpha)
    fused = [
        fuse_runs(
            dense.get(qid, RankedList(qid, (), "dense")),
            sparse.get(qid, RankedList(qid, (), "sparse")),
            fusion,
            tag=args.tag,
        )
        for qid in sorted(set(dense) | set(sparse))
    ]
    with _open_out(args.out) as out:
        write_run(fused, out)


def _cmd_expand(args) -> None:
    queries, _ = _load_query_map(args.queries)
    with open(args.snippets, encoding="utf-8") as handle:
        cache = load_snippet_cache(handle)
    mode = ExpansionMode(_MODE_ALIASES[args.mode])
    lm = None
    if mode is ExpansionMode.TOPICAL_TERMS:
        if args.corpus:
            passages, _ = _load_corpus_map(args.corpus)
            lm = estimate_corpus_lm(build_index(passages))
        elif args.index:
            lm = estimate_corpus_lm(_load_index_artifact(args.index))
        else:
            raise ValidationError("--mode terms requires --corpus or --index")
    retriever_cfg = RetrieverConfig(
        args.max_snippets, _SOURCE_ALIASES[args.source], not args.keep_direct_answers
    )
    expansion_cfg = ExpansionConfig(mode, args.max_words, args.max_terms)
    expansions = [
        augment_query(query, cache, retriever_cfg, expansion_cfg, lm) for query in queries
    ]
    with _open_out(args.out) as out:
        write_expansions(expansions, out)


def _cmd_rerank(args) -> None:
    with open(args.run, encoding="utf-8") as handle:
        run_lists = parse_run(handle)
    _, corpus = _load_corpus_map(args.corpus)
    _, queries = _load_query_map(args.queries)
    expansions: dict[str, Expansion] = {}
    if args.expansions and args.expansions != "none":
        with open(args.expansions, encoding="utf-8") as handle:
            expansions = load_expansions(handle)
    endpoint = ScorerEndpoint(
        _SCORER_ALIASES[args.scorer], args.address, args.batch_size, args.timeout
    )
    reranked = []
    for ranked in run_lists:
        if not ranked.entries:
            continue
        query = queries.get(ranked.query_id)
        if query is None:
            raise ValidationError(f"run query {ranked.query_id!r} missing from the query file")
        depth = min(args.k, len(ranked.entries))
        reranked.append(
            rerank_topk(
                ranked, corpus, query, expansions.get(ranked.query_id), endpoint, depth, args.tag
            )
        )
    with _open_out(args.out) as out:
        write_run(reranked, out)


def _cmd_trainset_build(args) -> None:
    with open(args.triples, encoding="utf-8") as handle:
        triples = load_triples(handle)
    _, corpus = _load_corpus_map(args.corpus)
    _, queries = _load_query_map(args.queries)
    training_set = make_pairs(triples, corpus, queries)
    if args.balance:
        training_set = balance_upsample(training_set)
    expansions = None
    if args.expansions:
        with open(args.expansions, encoding="utf-8") as handle:
            expansions = load_expansions(handle)
    sequences = render_training_sequences(training_set, queries, corpus, expansions)
    with _open_out(args.out) as out:
        for sequence in sequences:
            out.write(sequence + "\n")


def _cmd_eval(args) -> None:
    with open(args.run, encoding="utf-8") as handle:
        lists = parse_run(handle)
    with open(args.qrels, encoding="utf-8") as handle:
        qrels = parse_qrels(handle)
    selection = parse_metric_tokens(args.metrics.split(","))
    report = evaluate_run(lists, qrels, selection.config)
    with _open_out(args.out) as out:
        write_metric_report(report, selection.tokens, out)
    if args.per_query:
        with open(args.per_query, "w", encoding="utf-8") as handle:
            write_per_query_report(report, selection.tokens, handle)


def _cmd_compare(args) -> None:
    with open(args.baseline, encoding="utf-8") as handle:
        baseline = load_per_query_report(handle)
    with open(args.treatment, encoding="utf-8") as handle:
        treatment = load_per_query_report(handle)
    result = compare_runs(baseline, treatment, args.metric)
    with _open_out(args.out) as out:
        write_comparison([(args.metric, result)], out)


def _cmd_pipeline_run(args) -> None:
    overrides = {
        "mode": args.mode,
        "scorer_kind": args.scorer,
        "scorer_address": args.scorer_address,
        "rerank_depth": args.k,
        "output_dir": args.output_dir,
        "baseline_run_path": args.baseline_run,
    }
    cfg = load_experiment_config(args.config, overrides)
    report = run_pipeline(cfg)
    selection = parse_metric_tokens(cfg.metrics)
    write_metric_report(report, selection.tokens, sys.stdout)
    print(f"artifacts written to {cfg.output_dir}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="augrank", description=__doc__)
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    index_parser = commands.add_parser("index", help="build or query a BM25 index")
    index_commands = index_parser.add_subparsers(
        dest="index_command", required=True, parser_class=_Parser
    )
    build_parser_ = index_commands.add_parser("build", help="build an index artifact")
    build_parser_.add_argument("--corpus", required=True)
    build_parser_.add_argument("--out", required=True)
    build_parser_.set_defaults(handler=_cmd_index_build)
    search_parser = index_commands.add_parser("search", help="BM25 top-k search")
    search_parser.add_argument("--index", required=True)
    search_parser.add_argument("--queries", required=True)
    search_parser.add_argument("--k", type=int, default=100)
    search_parser.add_argument("--tag", default="bm25")
    search_parser.add_argument("--out")
    search_parser.set_defaults(handler=_cmd_index_search)

    fuse_parser = commands.add_parser("fuse", help="linear sparse/dense run fusion")
    fuse_parser.add_argument("--dense", required=True)
    fuse_parser.add_argument("--sparse", required=True)
    fuse_parser.add_argument("--alpha", type=float, default=1.3)
    fuse_parser.add_argument("--tag", default="hybrid")
    fuse_parser.add_argument("--out")
    fuse_parser.set_defaults(handler=_cmd_fuse)

    expand_parser = commands.add_parser("expand", help="build query expansions")
    expand_parser.add_argument("--queries", required=True)
    expand_parser.add_argument("--snippets", required=True, help="snippet cache file")
    expand_parser.add_argument("--mode", required=True, choices=["nl", "terms"])
    expand_parser.add_argument("--source", default="serp", choices=["serp", "wiki"])
    expand_parser.add_argument("--max-words", type=int, default=64)
    expand_parser.add_argument("--max-terms", type=int, default=64)
    expand_parser.add_argument("--max-snippets", type=int, default=5)
    expand_parser.add_argument("--keep-direct-answers", action="store_true")
    expand_parser.add_argument("--corpus", help="corpus for the language model (terms mode)")
    expand_parser.add_argument("--index", help="index artifact alternative to --corpus")
    expand_parser.add_argument("--out")
    expand_parser.set_defaults(handler=_cmd_expand)

    rerank_parser = commands.add_parser("rerank", help="rescore an initial run")
    rerank_parser.add_argument("--run", required=True, help="initial run file")
    rerank_parser.add_argument("--corpus", required=True)
    rerank_parser.add_argument("--queries", required=True)
    rerank_parser.add_argument("--expansions", default="none", help="expansion file or 'none'")
    rerank_parser.add_argument("--scorer", default="baseline", choices=["baseline", "remote"])
    rerank_parser.add_argument("--address", help="remote scorer base URL")
    rerank_parser.add_argument("--batch-size", type=int, default=32)
    rerank_parser.add_argument("--timeout", type=float, default=10.0)
    rerank_parser.add_argument("--k", type=int, default=100)
    rerank_parser.add_argument("--tag", default="rerank")
    rerank_parser.add_argument("--out")
    rerank_parser.set_defaults(handler=_cmd_rerank)

    trainset_parser = commands.add_parser("trainset", help="training sequence tooling")
    trainset_commands = trainset_parser.add_subparsers(
        dest="trainset_command", required=True, parser_class=_Parser
    )
    tbuild = trainset_commands.add_parser("build", help="render training sequences")
    tbuild.add_argument("--triples", required=True)
    tbuild.add_argument("--corpus", required=True)
    tbuild.add_argument("--queries", required=True)
    tbuild.add_argument("--expansions")
    tbuild.add_argument("--balance", action="store_true")
    tbuild.add_argument("--out")
    tbuild.set_defaults(handler=_cmd_trainset_build)

    eval_parser = commands.add_parser("eval", help="evaluate a run against qrels")
    eval_parser.add_argument("--run", required=True)
    eval_parser.add_argument("--qrels", required=True)
    eval_parser.add_argument("--metrics", default=",".join(DEFAULT_METRICS))
    eval_parser.add_argument("--per-query", help="also write a per-query TSV here")
    eval_parser.add_argument("--out")
    eval_parser.set_defaults(handler=_cmd_eval)

    compare_parser = commands.add_parser("compare", help="paired t-test between two reports")
    compare_parser.add_argument("--baseline", required=True, help="per-query report TSV")
    compare_parser.add_argument("--treatment", required=True, help="per-query report TSV")
    compare_parser.add_argument("--metric", required=True)
    compare_parser.add_argument("--out")
    compare_parser.set_defaults(handler=_cmd_compare)

    pipeline_parser = commands.add_parser("pipeline", help="run the full experiment pipeline")
    pipeline_commands = pipeline_parser.add_subparsers(
        dest="pipeline_command", required=True, parser_class=_Parser
    )
    prun = pipeline_commands.add_parser("run", help="run a declarative experiment config")
    prun.add_argument("--config", required=True)
    prun.add_argument("--mode", choices=sorted(_MODE_ALIASES))
    prun.add_argument("--scorer", choices=sorted(_SCORER_ALIASES))
    prun.add_argument("--scorer-address")
    prun.add_argument("--k", type=int)
    prun.add_argument("--output-dir")
    prun.add_argument("--baseline-run")
    prun.set_defaults(handler=_cmd_pipeline_run)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        args.handler(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3 if isinstance(exc.cause, TransportError) else 2
    except TransportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ToolkitError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
