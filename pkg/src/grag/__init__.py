"""Graph-backed retrieval-augmented generation with a built-in evaluator suite.

Pipeline stages: document chunking (corpus), entity linking and relation
extraction (linker), a property-graph store with keyword selection (kg),
dense passage retrieval (retriever), span decoding over assembled
sequences (reader), budgeted context assembly and prompting
(contextizer), LLM clients (llm), and judge-based evaluation with
one-way ANOVA (evaluation, stats). The cli module ties them together.
"""

__version__ = "0.1.0"

from .corpus import Chunk, ChunkingConfig, Document, chunk_document, count_tokens, load_corpus
from .kg import KnowledgeGraph, Node, Relationship, load_graph, persist_graph
from .retriever import (
    EmbeddingVector,
    HashingEncoder,
    Passage,
    PassageIndex,
    ScoredPassage,
    build_index,
    embed,
    retrieve_top_k,
    similarity,
)
from .reader import (
    InputSequence,
    SpanPrediction,
    Thresholds,
    assemble_sequence,
    decode_spans,
)
from .contextizer import (
    Answer,
    ContextBudget,
    KeywordConfig,
    PromptTemplate,
    answer_question,
    build_context,
    derive_limits,
    extract_keywords,
    render_prompt,
)
from .llm import ChatRequest, ChatResponse, MockLLMClient, RemoteLLMClient
from .linker import (
    AliasTable,
    EntityCandidate,
    GazetteerEntityExtractor,
    Mention,
    PatternRelationExtractor,
    Triple,
    build_graph_delta,
    extract_entities,
    extract_relations,
    resolve_coreferences,
)
from .evaluation import (
    EvalSample,
    EvaluationResult,
    MockJudgeClient,
    eval_answer_relevancy,
    eval_context_relevancy,
    eval_correctness,
    eval_faithfulness,
    run_eval_suite,
)
from .stats import AnovaResult, one_way_anova
