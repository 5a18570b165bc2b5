import pytest

from grag.contextizer import ContextBudget
from grag.corpus import count_tokens
from grag.errors import PreconditionError
from grag.fixtures import fixture_path
from grag.kg import load_graph
from grag.llm import MockLLMClient
from grag.pipelines import (
    GragPipeline,
    GraphPipeline,
    NaivePipeline,
    PipelineConfig,
    as_eval_pipeline,
)
from grag.retriever import HashingEncoder, Passage, build_index


@pytest.fixture(scope="module")
def hea_graph():
    return load_graph(fixture_path("hea.graph"))


@pytest.fixture(scope="module")
def hea_index():
    import json

    encoder = HashingEncoder(dims=64, seed=0)
    passages = []
    with open(fixture_path("hea_corpus.jsonl"), encoding="utf-8") as fh:
        for line in fh:
            rec = json.loads(line)
            passages.append(Passage(rec["id"], rec["text"]))
    return build_index(passages, encoder), encoder


CRSS_QUERY = "What is the CRSS of CrMnFeCoNi at the tension in room temperature?"


class TestGraphPipeline:
    def test_answers_from_graph(self, hea_graph):
        result = GraphPipeline(hea_graph, MockLLMClient()).answer(CRSS_QUERY)
        assert "53 MPa" in result.text
        assert result.nodes_used
        assert result.passages_used == []

    def test_contexts_are_lines(self, hea_graph):
        result = GraphPipeline(hea_graph, MockLLMClient()).answer(CRSS_QUERY)
        assert all("\n" not in line for line in result.context_lines)


class TestNaivePipeline:
    def test_answers_from_passages(self, hea_index):
        index, encoder = hea_index
        result = NaivePipeline(index, encoder, MockLLMClient()).answer(CRSS_QUERY)
        assert "53 MPa" in result.text
        assert result.passages_used
        assert result.nodes_used == []

    def test_encoder_mismatch_rejected(self, hea_index):
        index, _ = hea_index
        other = HashingEncoder(dims=64, seed=99)
        with pytest.raises(PreconditionError):
            NaivePipeline(index, other, MockLLMClient())


class TestGragPipeline:
    def test_combines_graph_and_passages(self, hea_graph, hea_index):
        index, encoder = hea_index
        pipe = GragPipeline(hea_graph, index, encoder, MockLLMClient())
        result = pipe.answer(CRSS_QUERY)
        assert "53 MPa" in result.text
        assert result.nodes_used
        assert result.passages_used

    def test_respects_token_budget(self, hea_graph, hea_index):
        index, encoder = hea_index
        cfg = PipelineConfig(budget=ContextBudget(context_length_max=120))
        pipe = GragPipeline(hea_graph, index, encoder, MockLLMClient(), cfg)
        result = pipe.answer(CRSS_QUERY)
        usable = cfg.budget.usable_tokens(
            cfg.template.overhead_tokens, count_tokens(CRSS_QUERY)
        )
        assert count_tokens(result.context_used) <= usable

    def test_deduplicates_passages_against_graph_lines(self, hea_graph, hea_index):
        index, encoder = hea_index
        pipe = GragPipeline(hea_graph, index, encoder, MockLLMClient())
        result = pipe.answer(CRSS_QUERY)
        assert len(set(result.context_lines)) == len(result.context_lines)


class TestEvalAdapter:
    def test_shape(self, hea_graph):
        run = as_eval_pipeline(GraphPipeline(hea_graph, MockLLMClient()))
        response, contexts = run(CRSS_QUERY)
        assert isinstance(response, str)
        assert isinstance(contexts, list)
        assert contexts
