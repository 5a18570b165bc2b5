import random

import pytest

from grag.corpus import (
    Chunk,
    ChunkingConfig,
    Document,
    chunk_document,
    count_tokens,
    load_chunks,
    load_corpus,
    split_sentences,
    tokenize,
    write_chunks,
)
from grag.errors import DuplicateIdError, ParseError, ValidationError


def doc(text, doc_id="d1"):
    return Document(id=doc_id, title="t", text=text, source="test")


class TestCountTokens:
    def test_empty(self):
        assert count_tokens("") == 0

    def test_two_words(self):
        assert count_tokens("yield strength") == 2

    def test_punctuation_split_off(self):
        # word, comma, word, period
        assert count_tokens("CrMnFeCoNi, alloy.") == 4

    def test_deterministic(self):
        text = "The CRSS of CrFeCoNiAl0.3 is 54 MPa."
        assert count_tokens(text) == count_tokens(text)


class TestLoadCorpus:
    def test_two_records_in_order(self, corpus_file):
        path = corpus_file([
            {"id": "a", "title": "A", "text": "alpha", "source": "s"},
            {"id": "b", "title": "B", "text": "beta", "source": "s"},
        ])
        docs = load_corpus(path)
        assert [d.id for d in docs] == ["a", "b"]
        assert docs[0].text == "alpha"

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        assert load_corpus(path) == []

    def test_duplicate_id_cites_line(self, corpus_file):
        path = corpus_file([
            {"id": "d1", "text": "x"},
            {"id": "d2", "text": "y"},
            {"id": "d1", "text": "z"},
        ])
        with pytest.raises(DuplicateIdError, match="line 3"):
            load_corpus(path)

    def test_malformed_line_names_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"id": "a", "text": "ok"}\nnot json\n')
        with pytest.raises(ParseError, match="line 2"):
            load_corpus(path)

    def test_missing_field(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"id": "a"}\n')
        with pytest.raises(ParseError, match="line 1"):
            load_corpus(path)

    def test_empty_text_needs_opt_in(self, corpus_file):
        path = corpus_file([{"id": "a", "text": ""}])
        with pytest.raises(ParseError, match="empty text"):
            load_corpus(path)
        assert load_corpus(path, allow_empty_text=True)[0].text == ""


def make_sentences(n_sentences, words_per_sentence=9):
    # Each sentence: words + final period = words_per_sentence + 1 tokens.
    sentences = []
    for i in range(n_sentences):
        words = [f"Word{i}{chr(ord('a') + j)}" for j in range(words_per_sentence)]
        sentences.append(" ".join(words) + ".")
    return " ".join(sentences)


class TestChunkDocument:
    def test_greedy_sentence_packing(self):
        # 3 sentences of 10 tokens; budget 20 packs two, leaving one.
        text = make_sentences(3)
        cfg = ChunkingConfig(max_tokens=20, overlap_tokens=0, sentence_aware=True)
        chunks = chunk_document(doc(text), cfg)
        assert len(chunks) == 2
        assert chunks[0].token_count == 20
        assert chunks[1].token_count == 10

    def test_single_chunk_when_it_fits(self):
        d = doc("one two three four five")
        chunks = chunk_document(d, ChunkingConfig(max_tokens=512))
        assert len(chunks) == 1
        assert chunks[0].text == d.text
        assert chunks[0].char_offset == 0

    def test_empty_document(self):
        assert chunk_document(doc(""), ChunkingConfig()) == []

    def test_budget_never_exceeded(self):
        text = make_sentences(10, words_per_sentence=7)
        for max_tokens in (8, 16, 30):
            cfg = ChunkingConfig(max_tokens=max_tokens, overlap_tokens=0)
            for c in chunk_document(doc(text), cfg):
                assert c.token_count <= max_tokens

    def test_oversized_sentence_hard_split(self):
        text = " ".join(f"w{i}" for i in range(50))  # one 50-token "sentence"
        cfg = ChunkingConfig(max_tokens=20, overlap_tokens=0, sentence_aware=True)
        chunks = chunk_document(doc(text), cfg)
        assert len(chunks) == 3
        assert all(c.token_count <= 20 for c in chunks)

    def test_overlap_shares_tokens(self):
        text = " ".join(f"w{i}" for i in range(100))
        cfg = ChunkingConfig(max_tokens=20, overlap_tokens=5, sentence_aware=False)
        chunks = chunk_document(doc(text), cfg)
        for a, b in zip(chunks, chunks[1:]):
            tail = tokenize(a.text)[-5:]
            head = tokenize(b.text)[:5]
            assert tail == head

    def test_sentence_overlap_bounded(self):
        text = make_sentences(8, words_per_sentence=4)  # 5-token sentences
        cfg = ChunkingConfig(max_tokens=12, overlap_tokens=5, sentence_aware=True)
        chunks = chunk_document(doc(text), cfg)
        assert all(c.token_count <= 12 for c in chunks)
        # Every token of the document is covered by some chunk.
        covered = "".join(c.text for c in chunks)
        for i in range(8):
            assert f"Word{i}a" in covered

    def test_token_count_matches_text(self):
        text = make_sentences(6)
        for cfg in (
            ChunkingConfig(max_tokens=15, overlap_tokens=0),
            ChunkingConfig(max_tokens=15, overlap_tokens=4, sentence_aware=False),
        ):
            for c in chunk_document(doc(text), cfg):
                assert c.token_count == count_tokens(c.text)

    def test_char_offsets_strictly_increasing(self):
        text = make_sentences(6)
        cfg = ChunkingConfig(max_tokens=15, overlap_tokens=4, sentence_aware=False)
        chunks = chunk_document(doc(text), cfg)
        offsets = [c.char_offset for c in chunks]
        assert offsets == sorted(offsets)
        assert len(set(offsets)) == len(offsets)

    def test_deterministic(self):
        text = make_sentences(5)
        cfg = ChunkingConfig(max_tokens=18, overlap_tokens=3)
        assert chunk_document(doc(text), cfg) == chunk_document(doc(text), cfg)

    def test_round_trip_no_overlap(self):
        # Token-stream equality is whitespace-normalized equality here:
        # chunk boundaries may sit between characters with no space.
        text = "Alpha beta gamma. Delta epsilon zeta! Eta theta iota kappa?"
        cfg = ChunkingConfig(max_tokens=4, overlap_tokens=0, sentence_aware=False)
        chunks = chunk_document(doc(text), cfg)
        assert tokenize(" ".join(c.text for c in chunks)) == tokenize(text)
        stripped = "".join(text.split())
        assert "".join("".join(c.text.split()) for c in chunks) == stripped

    def test_chunks_are_exact_substrings(self):
        text = make_sentences(5)
        cfg = ChunkingConfig(max_tokens=15, overlap_tokens=4, sentence_aware=True)
        for c in chunk_document(doc(text), cfg):
            assert text[c.char_offset:c.char_offset + len(c.text)] == c.text

    def test_coverage_inequality(self):
        # Total tokens minus the actually shared overlap covers the
        # document, up to one boundary token of slack per chunk.
        rng = random.Random(7)
        for _ in range(20):
            n = rng.randint(1, 12)
            text = make_sentences(n, words_per_sentence=rng.randint(3, 10))
            cfg = ChunkingConfig(
                max_tokens=rng.randint(8, 25), overlap_tokens=rng.randint(0, 5),
                sentence_aware=rng.random() < 0.5,
            )
            chunks = chunk_document(doc(text), cfg)
            total = sum(c.token_count for c in chunks)
            shared = 0
            for a, b in zip(chunks, chunks[1:]):
                a_end = a.char_offset + len(a.text)
                if b.char_offset < a_end:
                    shared += count_tokens(text[b.char_offset:a_end])
            assert total - shared >= count_tokens(text) - len(chunks)

    def test_config_validation(self):
        with pytest.raises(ValidationError):
            ChunkingConfig(max_tokens=0)
        with pytest.raises(ValidationError):
            ChunkingConfig(max_tokens=10, overlap_tokens=10)


class TestSentenceSplit:
    def test_boundaries_need_uppercase_or_digit(self):
        spans = split_sentences("First sentence. second continues here.")
        assert len(spans) == 1

    def test_abbreviation_stop_list(self):
        text = "See Fig. 3 for details. The alloy is stable."
        spans = split_sentences(text)
        assert len(spans) == 2
        assert text[spans[0][0]:spans[0][1]].strip() == "See Fig. 3 for details."

    def test_numeric_boundary(self):
        spans = split_sentences("It melts. 600 K is the limit.")
        assert len(spans) == 2


class TestChunkIO:
    def test_round_trip(self, tmp_path):
        chunks = [
            Chunk(id="a#c0", doc_id="a", text="hello world", token_count=2, char_offset=0),
            Chunk(id="a#c1", doc_id="a", text="more text.", token_count=3, char_offset=12),
        ]
        path = tmp_path / "chunks.jsonl"
        write_chunks(chunks, path)
        assert load_chunks(path) == chunks
