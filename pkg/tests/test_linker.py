import pytest

from grag.corpus import Chunk, count_tokens
from grag.errors import ConfigError, ValidationError
from grag.linker import (
    AliasTable,
    CO_MENTION_RELATION,
    EntityCandidate,
    GazetteerEntityExtractor,
    GazetteerEntry,
    Mention,
    PatternRelationExtractor,
    Triple,
    build_graph_delta,
    extract_entities,
    extract_relations,
    load_aliases,
    load_gazetteer,
    resolve_coreferences,
)


def chunk(text, chunk_id="c1"):
    return Chunk(id=chunk_id, doc_id="d1", text=text,
                 token_count=count_tokens(text), char_offset=0)


GAZETTEER = [
    GazetteerEntry("crmnfeconi", "wiki:Cantor_alloy", "CrMnFeCoNi"),
    GazetteerEntry("high-entropy alloy", "wiki:High_entropy_alloy", "High-entropy alloy"),
    GazetteerEntry("alloy", "wiki:Alloy", "Alloy"),
    GazetteerEntry("yield strength", "wiki:Yield_strength", "Yield strength"),
]


class TestGazetteerExtraction:
    def test_single_entry_match(self):
        extractor = GazetteerEntityExtractor(
            [GazetteerEntry("crmnfeconi", "wiki:Cantor_alloy", "CrMnFeCoNi")]
        )
        links = extract_entities(chunk("CrMnFeCoNi alloy exhibits strength"), extractor)
        assert len(links) == 1
        mention, cand = links[0]
        assert mention.surface == "CrMnFeCoNi"
        assert cand.kb_id == "wiki:Cantor_alloy"

    def test_longest_match_wins(self):
        extractor = GazetteerEntityExtractor(GAZETTEER)
        links = extract_entities(chunk("a high-entropy alloy sample"), extractor)
        assert [m.surface for m, _ in links] == ["high-entropy alloy"]

    def test_empty_chunk(self):
        extractor = GazetteerEntityExtractor(GAZETTEER)
        assert extract_entities(chunk(""), extractor) == []

    def test_case_insensitive_and_deterministic(self):
        extractor = GazetteerEntityExtractor(GAZETTEER)
        c = chunk("YIELD STRENGTH of the ALLOY")
        first = extract_entities(c, extractor)
        second = extract_entities(c, extractor)
        assert first == second
        assert [m.surface for m, _ in first] == ["YIELD STRENGTH", "ALLOY"]

    def test_word_boundaries_respected(self):
        extractor = GazetteerEntityExtractor(
            [GazetteerEntry("iron", "wiki:Iron", "Iron")]
        )
        assert extract_entities(chunk("the environment is harsh"), extractor) == []

    def test_mentions_non_overlapping_within_bounds(self):
        extractor = GazetteerEntityExtractor(GAZETTEER)
        c = chunk("The CrMnFeCoNi high-entropy alloy has yield strength data.")
        links = extract_entities(c, extractor)
        spans = sorted((m.start_char, m.end_char) for m, _ in links)
        for (s1, e1), (s2, e2) in zip(spans, spans[1:]):
            assert e1 <= s2
        for m, _ in links:
            assert 0 <= m.start_char < m.end_char <= len(c.text)
            assert c.text[m.start_char:m.end_char] == m.surface

    def test_contract_enforced_on_bad_extractor(self):
        class Bad:
            def extract_entities(self, c):
                return [(Mention(c.id, 0, 99, "nope"), EntityCandidate("x", "x"))]

        with pytest.raises(ValidationError):
            extract_entities(chunk("short"), Bad())


class TestAliasRewrite:
    def test_alias_applied(self):
        aliases = AliasTable({"the cantor alloy": "CrMnFeCoNi"})
        out = resolve_coreferences([chunk("the cantor alloy melts")], aliases)
        assert out[0].text == "CrMnFeCoNi melts"
        assert out[0].token_count == count_tokens("CrMnFeCoNi melts")

    def test_no_aliases_unchanged(self):
        out = resolve_coreferences([chunk("nothing to rewrite")], AliasTable({}))
        assert out[0].text == "nothing to rewrite"

    def test_idempotent(self):
        aliases = AliasTable({"the cantor alloy": "CrMnFeCoNi"})
        once = resolve_coreferences([chunk("the cantor alloy melts")], aliases)
        twice = resolve_coreferences(once, aliases)
        assert [c.text for c in once] == [c.text for c in twice]

    def test_preserves_surrounding_bytes(self):
        aliases = AliasTable({"hea": "high-entropy alloy"})
        text = "prefix  hea  suffix\twith\ttabs"
        out = resolve_coreferences([chunk(text)], aliases)
        assert out[0].text == "prefix  high-entropy alloy  suffix\twith\ttabs"

    def test_word_boundary_only(self):
        aliases = AliasTable({"hea": "high-entropy alloy"})
        out = resolve_coreferences([chunk("heat treatment")], aliases)
        assert out[0].text == "heat treatment"

    def test_self_mapping_rejected(self):
        with pytest.raises(ConfigError):
            AliasTable({"alloy": "Alloy"})

    def test_alias_inside_canonical_rejected(self):
        with pytest.raises(ConfigError):
            AliasTable({"cantor": "the cantor alloy"})


class TestRelationExtraction:
    def test_co_mention_within_sentence(self):
        c = chunk("CrMnFeCoNi shows yield strength here.")
        extractor = GazetteerEntityExtractor(GAZETTEER)
        mentions = [m for m, _ in extract_entities(c, extractor)]
        triples = extract_relations(c, mentions, PatternRelationExtractor())
        co = [t for t in triples if t.relation == CO_MENTION_RELATION]
        assert co == [Triple("CrMnFeCoNi", CO_MENTION_RELATION, "yield strength", "c1")]

    def test_single_mention_no_triples(self):
        c = chunk("CrMnFeCoNi is stable.")
        mentions = [Mention("c1", 0, 10, "CrMnFeCoNi")]
        assert extract_relations(c, mentions, PatternRelationExtractor()) == []

    def test_mentions_in_different_sentences(self):
        c = chunk("CrMnFeCoNi is stable. Yield strength is high.")
        extractor = GazetteerEntityExtractor(GAZETTEER)
        mentions = [m for m, _ in extract_entities(c, extractor)]
        assert len(mentions) == 2
        triples = extract_relations(c, mentions, PatternRelationExtractor())
        assert [t for t in triples if t.relation == CO_MENTION_RELATION] == []

    def test_connector_pattern(self):
        c = chunk("the yield strength of CrMnFeCoNi rises.")
        extractor = GazetteerEntityExtractor(GAZETTEER)
        mentions = [m for m, _ in extract_entities(c, extractor)]
        triples = extract_relations(c, mentions, PatternRelationExtractor())
        assert Triple("yield strength", "property_of", "CrMnFeCoNi", "c1") in triples

    def test_connector_skips_articles(self):
        c = chunk("yield strength of the CrMnFeCoNi.")
        extractor = GazetteerEntityExtractor(GAZETTEER)
        mentions = [m for m, _ in extract_entities(c, extractor)]
        triples = extract_relations(c, mentions, PatternRelationExtractor())
        assert any(t.relation == "property_of" for t in triples)

    def test_output_sorted(self):
        c = chunk("CrMnFeCoNi alloy with yield strength here.")
        extractor = GazetteerEntityExtractor(GAZETTEER)
        mentions = [m for m, _ in extract_entities(c, extractor)]
        triples = extract_relations(c, mentions, PatternRelationExtractor())
        assert triples == sorted(triples, key=lambda t: (t.head, t.relation, t.tail))

    def test_foreign_mention_rejected(self):
        c = chunk("some text")
        with pytest.raises(ValidationError):
            extract_relations(
                c, [Mention("other", 0, 4, "some")], PatternRelationExtractor()
            )


class TestBuildGraphDelta:
    def test_two_entities_one_relationship(self):
        c = chunk("CrMnFeCoNi shows yield strength.")
        links = [
            (Mention("c1", 0, 10, "CrMnFeCoNi"),
             EntityCandidate("wiki:Cantor_alloy", "CrMnFeCoNi")),
            (Mention("c1", 17, 31, "yield strength"),
             EntityCandidate("wiki:Yield_strength", "Yield strength")),
        ]
        triples = [Triple("CrMnFeCoNi", CO_MENTION_RELATION, "yield strength", "c1")]
        nodes, rels = build_graph_delta(triples, links, [c])
        assert len(nodes) == 2
        assert len(rels) == 1
        assert rels[0].src == "wiki:Cantor_alloy"
        assert rels[0].dst == "wiki:Yield_strength"
        assert rels[0].text == f"CrMnFeCoNi {CO_MENTION_RELATION} Yield strength"

    def test_duplicate_triples_dedup(self):
        links = [(Mention("c1", 0, 1, "a"), EntityCandidate("kb:a", "A")),
                 (Mention("c1", 2, 3, "b"), EntityCandidate("kb:b", "B"))]
        t = Triple("a", CO_MENTION_RELATION, "b", "c1")
        nodes, rels = build_graph_delta([t, t], links)
        assert len(rels) == 1

    def test_empty_inputs(self):
        assert build_graph_delta([], []) == ([], [])

    def test_node_count_equals_distinct_identities(self):
        links = [
            (Mention("c1", 0, 1, "a"), EntityCandidate("kb:a", "A")),
            (Mention("c1", 2, 3, "A"), EntityCandidate("kb:a", "A")),  # same kb id
        ]
        triples = [Triple("a", CO_MENTION_RELATION, "newcomer", "c1")]
        nodes, _ = build_graph_delta(triples, links)
        assert {n.id for n in nodes} == {"kb:a", "newcomer"}

    def test_node_text_has_title_and_evidence(self):
        c = chunk("Intro sentence. CrMnFeCoNi melts at high heat.")
        start = c.text.index("CrMnFeCoNi")
        links = [(Mention("c1", start, start + 10, "CrMnFeCoNi"),
                  EntityCandidate("wiki:Cantor_alloy", "CrMnFeCoNi (Cantor alloy)"))]
        nodes, _ = build_graph_delta([], links, [c])
        assert nodes[0].text == (
            "CrMnFeCoNi (Cantor alloy); CrMnFeCoNi melts at high heat."
        )
        assert nodes[0].kb_ref == "wiki:Cantor_alloy"

    def test_self_loops_dropped(self):
        links = [
            (Mention("c1", 0, 4, "CRSS"), EntityCandidate("kb:crss", "CRSS")),
            (Mention("c1", 10, 40, "critical resolved shear stress"),
             EntityCandidate("kb:crss", "CRSS")),
        ]
        triples = [Triple("CRSS", CO_MENTION_RELATION,
                          "critical resolved shear stress", "c1")]
        nodes, rels = build_graph_delta(triples, links)
        assert len(nodes) == 1
        assert rels == []

    def test_deterministic_output(self):
        links = [(Mention("c1", 0, 1, "b"), EntityCandidate("kb:b", "B")),
                 (Mention("c1", 2, 3, "a"), EntityCandidate("kb:a", "A"))]
        triples = [Triple("b", CO_MENTION_RELATION, "a", "c1")]
        assert build_graph_delta(triples, links) == build_graph_delta(triples, links)


class TestFixtureLoaders:
    def test_gazetteer_loader(self, tmp_path):
        path = tmp_path / "gaz.jsonl"
        path.write_text('{"pattern": "alloy", "kb_id": "kb:a", "title": "Alloy"}\n')
        entries = load_gazetteer(path)
        assert entries == [GazetteerEntry("alloy", "kb:a", "Alloy")]

    def test_malformed_gazetteer(self, tmp_path):
        path = tmp_path / "gaz.jsonl"
        path.write_text('{"pattern": "alloy"}\n')
        with pytest.raises(ConfigError):
            load_gazetteer(path)

    def test_alias_loader(self, tmp_path):
        path = tmp_path / "al.jsonl"
        path.write_text('{"alias": "the cantor alloy", "canonical": "CrMnFeCoNi"}\n')
        table = load_aliases(path)
        assert table.lookup("The Cantor Alloy") == "CrMnFeCoNi"
