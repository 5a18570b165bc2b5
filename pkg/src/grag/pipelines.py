"""The three answer pipelines compared by the evaluation suite.

naive  — dense retrieval over the passage index; the top passages are
         the context.
graph  — keyword-driven node/relationship selection over the knowledge
         graph (the budgeted context chain).
grag   — graph context first, then dense passages appended while the
         token budget allows, combining both knowledge sources.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .contextizer import (
    ContextBudget,
    KeywordConfig,
    PromptTemplate,
    DEFAULT_TEMPLATE,
    extract_keywords,
    render_prompt,
    select_context,
)
from .corpus import count_tokens
from .errors import GenerationError, GragError, PreconditionError
from .kg import KnowledgeGraph
from .llm import ChatRequest, LLMClient
from .retriever import Encoder, PassageIndex, retrieve_top_k

PIPELINE_NAMES = ("naive", "graph", "grag")


@dataclass
class PipelineAnswer:
    text: str
    context_lines: list[str]
    nodes_used: list[str] = field(default_factory=list)
    rels_used: list[str] = field(default_factory=list)
    passages_used: list[str] = field(default_factory=list)

    @property
    def context_used(self) -> str:
        return "\n".join(self.context_lines)


@dataclass
class PipelineConfig:
    budget: ContextBudget = field(default_factory=ContextBudget)
    keyword_cfg: KeywordConfig = field(default_factory=KeywordConfig)
    template: PromptTemplate = DEFAULT_TEMPLATE
    k: int = 8


def _generate(llm: LLMClient, question: str, context_lines: list[str],
              template: PromptTemplate) -> str:
    prompt = render_prompt(question, "\n".join(context_lines), template)
    try:
        return llm.generate(ChatRequest(user=prompt)).text
    except GragError as exc:
        raise GenerationError(f"LLM generation failed: {exc}", prompt=prompt) from exc


class NaivePipeline:
    """Vector retrieval only: top-k passages become the context."""

    name = "naive"

    def __init__(self, index: PassageIndex, encoder: Encoder, llm: LLMClient,
                 cfg: PipelineConfig | None = None):
        if index.encoder_id != encoder.encoder_id:
            raise PreconditionError(
                f"index was built with {index.encoder_id!r}, got {encoder.encoder_id!r}"
            )
        self.index = index
        self.encoder = encoder
        self.llm = llm
        self.cfg = cfg or PipelineConfig()

    def answer(self, question: str) -> PipelineAnswer:
        cfg = self.cfg
        usable = cfg.budget.usable_tokens(
            cfg.template.overhead_tokens, count_tokens(question)
        )
        hits = retrieve_top_k(self.index, self.encoder.encode(question), cfg.k)
        texts = {p.id: p.text for p, _ in self.index.entries}
        lines: list[str] = []
        used_ids: list[str] = []
        used = 0
        for hit in hits:
            cost = count_tokens(texts[hit.passage_id])
            if used + cost > usable:
                break
            lines.append(texts[hit.passage_id])
            used_ids.append(hit.passage_id)
            used += cost
        text = _generate(self.llm, question, lines, cfg.template)
        return PipelineAnswer(text=text, context_lines=lines, passages_used=used_ids)


class GraphPipeline:
    """Keyword-selected graph context; the budgeted answer chain."""

    name = "graph"

    def __init__(self, graph: KnowledgeGraph, llm: LLMClient,
                 cfg: PipelineConfig | None = None):
        self.graph = graph
        self.llm = llm
        self.cfg = cfg or PipelineConfig()

    def answer(self, question: str) -> PipelineAnswer:
        cfg = self.cfg
        keywords = extract_keywords(question, cfg.keyword_cfg)
        selection = select_context(
            self.graph, keywords, cfg.budget,
            template_overhead=cfg.template.overhead_tokens,
            question_tokens=count_tokens(question),
        )
        lines = selection.text.splitlines() if selection.text else []
        text = _generate(self.llm, question, lines, cfg.template)
        return PipelineAnswer(
            text=text, context_lines=lines,
            nodes_used=selection.node_ids, rels_used=selection.rel_ids,
        )


class GragPipeline:
    """Graph context enriched with dense passages, within one budget."""

    name = "grag"

    def __init__(self, graph: KnowledgeGraph, index: PassageIndex, encoder: Encoder,
                 llm: LLMClient, cfg: PipelineConfig | None = None):
        if index.encoder_id != encoder.encoder_id:
            raise PreconditionError(
                f"index was built with {index.encoder_id!r}, got {encoder.encoder_id!r}"
            )
        self.graph = graph
        self.index = index
        self.encoder = encoder
        self.llm = llm
        self.cfg = cfg or PipelineConfig()

    def answer(self, question: str) -> PipelineAnswer:
        cfg = self.cfg
        usable = cfg.budget.usable_tokens(
            cfg.template.overhead_tokens, count_tokens(question)
        )
        keywords = extract_keywords(question, cfg.keyword_cfg)
        selection = select_context(
            self.graph, keywords, cfg.budget,
            template_overhead=cfg.template.overhead_tokens,
            question_tokens=count_tokens(question),
        )
        lines = selection.text.splitlines() if selection.text else []
        used = count_tokens(selection.text)

        hits = retrieve_top_k(self.index, self.encoder.encode(question), cfg.k)
        texts = {p.id: p.text for p, _ in self.index.entries}
        seen = set(lines)
        used_ids: list[str] = []
        for hit in hits:
            passage = texts[hit.passage_id]
            if passage in seen:
                continue
            cost = count_tokens(passage)
            if used + cost > usable:
                break
            lines.append(passage)
            used_ids.append(hit.passage_id)
            seen.add(passage)
            used += cost
        text = _generate(self.llm, question, lines, cfg.template)
        return PipelineAnswer(
            text=text, context_lines=lines,
            nodes_used=selection.node_ids, rels_used=selection.rel_ids,
            passages_used=used_ids,
        )


def as_eval_pipeline(pipeline) -> "callable":
    """Adapt a pipeline object to the (query) -> (response, contexts) shape."""
    def run(query: str) -> tuple[str, list[str]]:
        result = pipeline.answer(query)
        return result.text, list(result.context_lines)
    return run
