"""Operator entry point: ingest, link, index, query, eval, stats.

Settings resolve in flag > config-file > built-in-default order. The
config file is plain `key = value` lines with `#` comments; keys use
the long flag names with underscores. Exit codes: 0 success, 1 user
error (bad flags, missing files, malformed inputs), 2 internal error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .contextizer import ContextBudget, KeywordConfig, PromptTemplate, load_template
from .corpus import ChunkingConfig, chunk_document, load_chunks, load_corpus, write_chunks
from .errors import ConfigError, GragError
from .evaluation import (
    ALL_METRICS,
    CORRECTNESS_THRESHOLD,
    DEFAULT_METRICS,
    MockJudgeClient,
    load_dataset,
    run_eval_suite,
)
from .kg import KnowledgeGraph, load_graph, persist_graph
from .linker import (
    GazetteerEntityExtractor,
    PatternRelationExtractor,
    build_graph_delta,
    extract_entities,
    extract_relations,
    load_aliases,
    load_gazetteer,
    resolve_coreferences,
)
from .llm import MockLLMClient, RemoteLLMClient
from .pipelines import (
    GragPipeline,
    GraphPipeline,
    NaivePipeline,
    PIPELINE_NAMES,
    PipelineConfig,
    as_eval_pipeline,
)
from .report import write_report
from .retriever import HashingEncoder, Passage, RemoteEncoder, build_index, load_index, save_index


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # Usage problems are user errors (exit 1), not argparse's default 2.
    def error(self, message):
        raise _UsageError(message)


@dataclass
class RunConfig:
    """Effective settings for a command after flag/config merging."""
    context_length_max: int = 512
    n_max: int | None = None
    r_max: int | None = None
    safety_margin: float = 0.1
    k: int = 8
    dims: int = 64
    seed: int = 0
    correctness_threshold: float = CORRECTNESS_THRESHOLD
    llm_endpoint: str | None = None
    llm_model: str = "default"
    encoder_endpoint: str | None = None


def _load_config_file(path: str | None) -> dict[str, str]:
    if not path:
        return {}
    config: dict[str, str] = {}
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {path}")
    for lineno, line in enumerate(p.read_text(encoding="utf-8").splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path} line {lineno}: expected key = value")
        key, _, value = stripped.partition("=")
        config[key.strip()] = value.strip()
    return config


def _setting(args, config: dict[str, str], key: str, default, cast=str):
    flag_value = getattr(args, key, None)
    if flag_value is not None:
        return flag_value
    if key in config:
        raw = config[key]
        if cast is bool:
            return raw.lower() in ("1", "true", "yes", "on")
        return cast(raw)
    return default


def _run_config(args, config: dict[str, str]) -> RunConfig:
    return RunConfig(
        context_length_max=_setting(args, config, "context_length_max", 512, int),
        n_max=_setting(args, config, "n_max", None, int),
        r_max=_setting(args, config, "r_max", None, int),
        safety_margin=_setting(args, config, "safety_margin", 0.1, float),
        k=_setting(args, config, "k", 8, int),
        dims=_setting(args, config, "dims", 64, int),
        seed=_setting(args, config, "seed", 0, int),
        correctness_threshold=_setting(
            args, config, "correctness_threshold", CORRECTNESS_THRESHOLD, float
        ),
        llm_endpoint=_setting(args, config, "llm_endpoint", None),
        llm_model=_setting(args, config, "llm_model", "default"),
        encoder_endpoint=_setting(
            args, config, "encoder_endpoint",
            os.environ.get("GRAG_ENCODER_ENDPOINT") or None,
        ),
    )


def _require(path: str, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise GragError(f"{what} file not found: {path}")
    return p


def _budget(cfg: RunConfig) -> ContextBudget:
    return ContextBudget(
        context_length_max=cfg.context_length_max,
        n_max=cfg.n_max, r_max=cfg.r_max, safety_margin=cfg.safety_margin,
    )


def _encoder(cfg: RunConfig, kind: str):
    if kind == "remote":
        if not cfg.encoder_endpoint:
            raise GragError("remote encoder selected but no encoder endpoint configured")
        return RemoteEncoder(cfg.encoder_endpoint, dims=cfg.dims)
    return HashingEncoder(dims=cfg.dims, seed=cfg.seed)


def _llm(cfg: RunConfig, mock: bool):
    if mock:
        return MockLLMClient()
    return RemoteLLMClient(endpoint=cfg.llm_endpoint, model_id=cfg.llm_model)


def _template(path: str | None) -> PromptTemplate:
    if path:
        return load_template(_require(path, "template"))
    from .contextizer import DEFAULT_TEMPLATE
    return DEFAULT_TEMPLATE


def _pipeline_config(cfg: RunConfig, template: PromptTemplate) -> PipelineConfig:
    return PipelineConfig(
        budget=_budget(cfg), keyword_cfg=KeywordConfig(), template=template, k=cfg.k
    )


def _build_pipelines(names, cfg, graph, index, encoder, llm, template):
    pcfg = _pipeline_config(cfg, template)
    out = {}
    for name in names:
        if name == "naive":
            if index is None:
                raise GragError("pipeline 'naive' needs --index")
            out[name] = NaivePipeline(index, encoder, llm, pcfg)
        elif name == "graph":
            if graph is None:
                raise GragError("pipeline 'graph' needs --graph")
            out[name] = GraphPipeline(graph, llm, pcfg)
        elif name == "grag":
            if graph is None or index is None:
                raise GragError("pipeline 'grag' needs --graph and --index")
            out[name] = GragPipeline(graph, index, encoder, llm, pcfg)
        else:
            raise GragError(
                f"unknown pipeline {name!r}; expected one of {', '.join(PIPELINE_NAMES)}"
            )
    return out


def cmd_ingest(args, config) -> int:
    corpus_path = _require(args.corpus, "corpus")
    cfg = ChunkingConfig(
        max_tokens=_setting(args, config, "max_tokens", 512, int),
        overlap_tokens=_setting(args, config, "overlap_tokens", 64, int),
        sentence_aware=not args.no_sentence_aware,
    )
    docs = load_corpus(corpus_path)
    chunks = []
    for doc in docs:
        chunks.extend(chunk_document(doc, cfg))
    write_chunks(chunks, args.out)
    print(f"ingested {len(docs)} documents into {len(chunks)} chunks -> {args.out}")
    return 0


def cmd_link(args, config) -> int:
    chunks = load_chunks(_require(args.chunks, "chunks"))
    gazetteer = load_gazetteer(_require(args.gazetteer, "gazetteer"))
    if args.aliases:
        aliases = load_aliases(_require(args.aliases, "aliases"))
        chunks = resolve_coreferences(chunks, aliases)
    entity_extractor = GazetteerEntityExtractor(gazetteer)
    relation_extractor = PatternRelationExtractor()

    links, triples = [], []
    for chunk in chunks:
        chunk_links = extract_entities(chunk, entity_extractor)
        links.extend(chunk_links)
        triples.extend(extract_relations(
            chunk, [m for m, _ in chunk_links], relation_extractor
        ))
    nodes, rels = build_graph_delta(triples, links, chunks)

    graph = KnowledgeGraph()
    for node in nodes:
        graph.upsert_node(node)
    for rel in rels:
        graph.add_relationship(rel)
    persist_graph(graph, args.out)
    print(
        f"linked {len(chunks)} chunks into {len(nodes)} nodes and "
        f"{len(rels)} relationships -> {args.out}"
    )
    return 0


def cmd_index(args, config) -> int:
    cfg = _run_config(args, config)
    chunks = load_chunks(_require(args.chunks, "chunks"))
    encoder = _encoder(cfg, args.encoder)
    index = build_index([Passage(c.id, c.text) for c in chunks], encoder)
    save_index(index, args.out)
    print(f"indexed {len(index)} passages with {index.encoder_id} -> {args.out}")
    return 0


def cmd_query(args, config) -> int:
    cfg = _run_config(args, config)
    graph = load_graph(_require(args.graph, "graph")) if args.graph else None
    index = load_index(_require(args.index, "index")) if args.index else None
    encoder = _encoder(cfg, "remote" if cfg.encoder_endpoint else "hashing")
    llm = _llm(cfg, args.mock_llm)
    template = _template(args.template)
    pipeline_name = args.pipeline or "graph"
    pipelines = _build_pipelines(
        [pipeline_name], cfg, graph, index, encoder, llm, template
    )
    result = pipelines[pipeline_name].answer(args.question)
    print(result.text)
    print("---")
    print(f"pipeline: {pipeline_name}")
    print(f"nodes_used: {','.join(result.nodes_used) or '-'}")
    print(f"rels_used: {','.join(result.rels_used) or '-'}")
    print(f"passages_used: {','.join(result.passages_used) or '-'}")
    from .corpus import count_tokens
    print(f"context_tokens: {count_tokens(result.context_used)}")
    if args.out:
        record = {
            "question": args.question,
            "answer": result.text,
            "pipeline": pipeline_name,
            "nodes_used": result.nodes_used,
            "rels_used": result.rels_used,
            "passages_used": result.passages_used,
            "context_used": result.context_used,
        }
        with open(args.out, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
    return 0


def cmd_eval(args, config) -> int:
    cfg = _run_config(args, config)
    dataset = load_dataset(_require(args.dataset, "dataset"))
    graph = load_graph(_require(args.graph, "graph")) if args.graph else None
    index = load_index(_require(args.index, "index")) if args.index else None
    encoder = _encoder(cfg, "remote" if cfg.encoder_endpoint else "hashing")
    llm = _llm(cfg, args.mock_llm)
    judge = MockJudgeClient() if args.mock_judge else _llm(cfg, False)
    template = _template(args.template)

    names = [n.strip() for n in (args.pipelines or "naive,graph,grag").split(",") if n.strip()]
    metrics = [m.strip() for m in (args.metrics or ",".join(DEFAULT_METRICS)).split(",") if m.strip()]
    for metric in metrics:
        if metric not in ALL_METRICS:
            raise GragError(f"unknown metric {metric!r}; expected one of {', '.join(ALL_METRICS)}")

    pipelines = _build_pipelines(names, cfg, graph, index, encoder, llm, template)
    report = run_eval_suite(
        dataset,
        {name: as_eval_pipeline(p) for name, p in pipelines.items()},
        judge,
        metrics=metrics,
        correctness_threshold=cfg.correctness_threshold,
    )
    out_dir = args.out_dir or "reports"
    artifacts = write_report(
        report, out_dir, deterministic=args.deterministic, figures=not args.no_figures
    )
    from .report import format_report_table
    print(format_report_table(report), end="")
    print(f"report written to {', '.join(str(p) for p in artifacts.values())}")
    if report.has_invalid:
        print("warning: some evaluations returned invalid results", file=sys.stderr)
        return 1
    return 0


def cmd_stats(args, config) -> int:
    if not args.graph and not args.index:
        raise GragError("stats needs --graph and/or --index")
    if args.graph:
        graph = load_graph(_require(args.graph, "graph"))
        s = graph.stats()
        print(f"graph: {args.graph}")
        print(f"  nodes: {int(s['node_count'])}")
        print(f"  relationships: {int(s['relationship_count'])}")
        print(f"  avg_node_tokens: {s['avg_node_tokens']:.2f}")
        print(f"  avg_rel_tokens: {s['avg_rel_tokens']:.2f}")
    if args.index:
        index = load_index(_require(args.index, "index"))
        print(f"index: {args.index}")
        print(f"  encoder_id: {index.encoder_id}")
        print(f"  dims: {index.dims}")
        print(f"  passages: {len(index)}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="grag", description="Graph-backed RAG pipeline")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value settings file; flags win")
    common.add_argument("--seed", type=int, help="seed for the deterministic encoder")
    common.add_argument("--deterministic", action="store_true",
                        help="suppress timestamps for byte-identical outputs")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="split a corpus into chunks")
    p.add_argument("--corpus", required=True, help="line-delimited document records")
    p.add_argument("--out", required=True, help="chunk records output path")
    p.add_argument("--max-tokens", type=int, dest="max_tokens")
    p.add_argument("--overlap-tokens", type=int, dest="overlap_tokens")
    p.add_argument("--no-sentence-aware", action="store_true")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("link", parents=[common], help="build a knowledge graph from chunks")
    p.add_argument("--chunks", required=True)
    p.add_argument("--gazetteer", required=True)
    p.add_argument("--aliases", help="coreference alias table (optional)")
    p.add_argument("--out", required=True, help="graph file output path")
    p.set_defaults(func=cmd_link)

    p = sub.add_parser("index", parents=[common], help="embed chunks into a passage index")
    p.add_argument("--chunks", required=True)
    p.add_argument("--out", required=True, help="index file output path")
    p.add_argument("--dims", type=int)
    p.add_argument("--encoder", choices=["hashing", "remote"], default="hashing")
    p.add_argument("--encoder-endpoint", dest="encoder_endpoint")
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("query", parents=[common], help="answer a question")
    p.add_argument("question")
    p.add_argument("--graph")
    p.add_argument("--index")
    p.add_argument("--pipeline", choices=list(PIPELINE_NAMES))
    p.add_argument("--mock-llm", action="store_true", help="deterministic offline LLM")
    p.add_argument("--llm-endpoint", dest="llm_endpoint")
    p.add_argument("--llm-model", dest="llm_model")
    p.add_argument("--encoder-endpoint", dest="encoder_endpoint")
    p.add_argument("--template")
    p.add_argument("--k", type=int)
    p.add_argument("--context-length-max", type=int, dest="context_length_max")
    p.add_argument("--n-max", type=int, dest="n_max")
    p.add_argument("--r-max", type=int, dest="r_max")
    p.add_argument("--safety-margin", type=float, dest="safety_margin")
    p.add_argument("--out", help="append the answer record to this JSONL file")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("eval", parents=[common], help="score pipelines over a query dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--graph")
    p.add_argument("--index")
    p.add_argument("--pipelines", help="comma-separated subset of naive,graph,grag")
    p.add_argument("--metrics", help=f"comma-separated subset of {','.join(ALL_METRICS)}")
    p.add_argument("--mock-llm", action="store_true")
    p.add_argument("--mock-judge", action="store_true")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--no-figures", action="store_true")
    p.add_argument("--llm-endpoint", dest="llm_endpoint")
    p.add_argument("--llm-model", dest="llm_model")
    p.add_argument("--encoder-endpoint", dest="encoder_endpoint")
    p.add_argument("--template")
    p.add_argument("--k", type=int)
    p.add_argument("--context-length-max", type=int, dest="context_length_max")
    p.add_argument("--n-max", type=int, dest="n_max")
    p.add_argument("--r-max", type=int, dest="r_max")
    p.add_argument("--safety-margin", type=float, dest="safety_margin")
    p.add_argument("--correctness-threshold", type=float, dest="correctness_threshold")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("stats", parents=[common], help="summarize a graph or index")
    p.add_argument("--graph")
    p.add_argument("--index")
    p.set_defaults(func=cmd_stats)

    return parser


def run_command(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    try:
        config = _load_config_file(getattr(args, "config", None))
        return args.func(args, config)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (GragError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - internal failure boundary
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run_command())
