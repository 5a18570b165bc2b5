"""Entity linking, relation extraction, and graph delta construction.

Extraction is pluggable: a deterministic gazetteer/pattern
implementation ships for offline use and tests, and a remote HTTP
implementation covers learned models served elsewhere. Coreferent
aliases are rewritten to canonical surfaces before extraction so one
entity does not fragment into several nodes.
"""

from __future__ import annotations

import json
import re
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import requests

from .corpus import Chunk, count_tokens, split_sentences
from .errors import ConfigError, EndpointError, TransportError, ValidationError
from .kg import Node, Relationship

CO_MENTION_RELATION = "co_mentioned_with"


@dataclass(frozen=True)
class Mention:
    chunk_id: str
    start_char: int
    end_char: int
    surface: str


@dataclass(frozen=True)
class EntityCandidate:
    kb_id: str
    title: str
    score: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValidationError(f"candidate score {self.score} outside [0, 1]")


@dataclass(frozen=True)
class Triple:
    head: str
    relation: str
    tail: str
    evidence_chunk: str

    def __post_init__(self):
        if not self.head or not self.tail:
            raise ValidationError("triple head and tail must be non-empty")


class AliasTable:
    """Case-insensitive alias phrase -> canonical surface mapping.

    Canonical surfaces must not contain any alias phrase, which makes
    the rewrite idempotent.
    """

    def __init__(self, mapping: dict[str, str]):
        self._aliases: dict[str, str] = {}
        for alias, canonical in mapping.items():
            key = alias.lower()
            if not key or not canonical:
                raise ConfigError("alias and canonical must be non-empty")
            if key == canonical.lower():
                raise ConfigError(f"alias {alias!r} maps to itself")
            self._aliases[key] = canonical
        for alias in self._aliases:
            for canonical in self._aliases.values():
                if alias in canonical.lower():
                    raise ConfigError(
                        f"canonical {canonical!r} contains alias {alias!r}; "
                        "rewriting would not be idempotent"
                    )

    def __len__(self) -> int:
        return len(self._aliases)

    def items(self):
        return self._aliases.items()

    def lookup(self, phrase: str) -> str | None:
        return self._aliases.get(phrase.lower())


def load_aliases(path: str | Path) -> AliasTable:
    """Load {alias, canonical} records from line-delimited JSON."""
    mapping: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                mapping[rec["alias"]] = rec["canonical"]
            except (json.JSONDecodeError, KeyError) as exc:
                raise ConfigError(f"{path} line {lineno}: bad alias record ({exc})") from exc
    return AliasTable(mapping)


@dataclass(frozen=True)
class GazetteerEntry:
    pattern: str
    kb_id: str
    title: str


def load_gazetteer(path: str | Path) -> list[GazetteerEntry]:
    """Load {pattern, kb_id, title} records from line-delimited JSON."""
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                entry = GazetteerEntry(rec["pattern"], rec["kb_id"], rec["title"])
            except (json.JSONDecodeError, KeyError) as exc:
                raise ConfigError(f"{path} line {lineno}: bad gazetteer record ({exc})") from exc
            if not entry.pattern or not entry.kb_id:
                raise ConfigError(f"{path} line {lineno}: empty pattern or kb_id")
            entries.append(entry)
    return entries


class EntityExtractor(Protocol):
    def extract_entities(self, chunk: Chunk) -> list[tuple[Mention, EntityCandidate]]: ...


class RelationExtractor(Protocol):
    relation_inventory: set[str] | None

    def extract_relations(self, chunk: Chunk, mentions: Sequence[Mention]) -> list[Triple]: ...


class GazetteerEntityExtractor:
    """Deterministic dictionary matcher; longest match wins, ties leftmost.

    Patterns match case-insensitively on word boundaries.
    """

    def __init__(self, entries: Iterable[GazetteerEntry]):
        self.entries = list(entries)
        self._patterns = [
            (re.compile(r"\b" + re.escape(e.pattern) + r"\b", re.IGNORECASE), e)
            for e in {e.pattern.lower(): e for e in self.entries}.values()
        ]

    def extract_entities(self, chunk: Chunk) -> list[tuple[Mention, EntityCandidate]]:
        raw: list[tuple[int, int, GazetteerEntry]] = []
        for pattern, entry in self._patterns:
            for m in pattern.finditer(chunk.text):
                raw.append((m.start(), m.end(), entry))
        # Longest first, ties leftmost; keep non-overlapping matches.
        raw.sort(key=lambda m: (-(m[1] - m[0]), m[0], m[2].pattern))
        taken: list[tuple[int, int, GazetteerEntry]] = []
        for cand in raw:
            if all(cand[1] <= s or cand[0] >= e for s, e, _ in taken):
                taken.append(cand)
        taken.sort(key=lambda m: m[0])
        return [
            (
                Mention(chunk.id, s, e, chunk.text[s:e]),
                EntityCandidate(kb_id=entry.kb_id, title=entry.title, score=1.0),
            )
            for s, e, entry in taken
        ]


@dataclass(frozen=True)
class RelationPattern:
    connector: str  # single lowercased token linking two mentions
    relation: str   # label emitted when the connector matches


DEFAULT_RELATION_PATTERNS = (
    RelationPattern("of", "property_of"),
    RelationPattern("at", "measured_at"),
)

# Articles ignored when matching connector patterns between mentions.
_ARTICLES = {"a", "an", "the"}


class PatternRelationExtractor:
    """Rule-based relations: connector patterns plus sentence co-mentions."""

    def __init__(self, patterns: Iterable[RelationPattern] = DEFAULT_RELATION_PATTERNS):
        self.patterns = list(patterns)
        self.relation_inventory: set[str] = {p.relation for p in self.patterns}
        self.relation_inventory.add(CO_MENTION_RELATION)

    def extract_relations(self, chunk: Chunk, mentions: Sequence[Mention]) -> list[Triple]:
        triples: set[Triple] = set()
        for s_start, s_end in split_sentences(chunk.text):
            inside = [
                m for m in mentions if m.start_char >= s_start and m.end_char <= s_end
            ]
            inside.sort(key=lambda m: m.start_char)
            for i, a in enumerate(inside):
                for b in inside[i + 1:]:
                    triples.add(Triple(a.surface, CO_MENTION_RELATION, b.surface, chunk.id))
                    between = chunk.text[a.end_char:b.start_char]
                    words = [w.lower() for w in between.split() if w.lower() not in _ARTICLES]
                    for pat in self.patterns:
                        if words == [pat.connector]:
                            triples.add(Triple(a.surface, pat.relation, b.surface, chunk.id))
        return sorted(triples, key=lambda t: (t.head, t.relation, t.tail))


class RemoteExtractor:
    """Entity and relation extraction served over HTTP.

    Wire schema: POST {"text": ...} -> {"mentions": [{"start", "end",
    "kb_id", "title", "score"}], "triples": [{"head", "relation",
    "tail"}]}. One response covers both extraction interfaces; results
    are cached per chunk so a shared instance issues one request.
    """

    def __init__(
        self,
        endpoint: str,
        relation_inventory: set[str] | None = None,
        timeout: float = 30.0,
        max_in_flight: int = 8,
    ):
        self.endpoint = endpoint
        self.relation_inventory = relation_inventory
        self.timeout = timeout
        self._in_flight = threading.BoundedSemaphore(max_in_flight)
        self._cache: dict[str, dict] = {}

    def _call(self, chunk: Chunk) -> dict:
        if chunk.id in self._cache:
            return self._cache[chunk.id]
        try:
            with self._in_flight:
                resp = requests.post(
                    self.endpoint, json={"text": chunk.text}, timeout=self.timeout
                )
        except requests.RequestException as exc:
            raise TransportError(f"extractor endpoint unreachable: {exc}") from exc
        if resp.status_code != 200:
            raise EndpointError(
                f"extractor endpoint returned {resp.status_code}", status=resp.status_code
            )
        body = resp.json()
        self._cache[chunk.id] = body
        return body

    def extract_entities(self, chunk: Chunk) -> list[tuple[Mention, EntityCandidate]]:
        out = []
        for m in self._call(chunk).get("mentions", []):
            start, end = int(m["start"]), int(m["end"])
            out.append((
                Mention(chunk.id, start, end, chunk.text[start:end]),
                EntityCandidate(
                    kb_id=m["kb_id"], title=m.get("title", m["kb_id"]),
                    score=float(m.get("score", 1.0)),
                ),
            ))
        return out

    def extract_relations(self, chunk: Chunk, mentions: Sequence[Mention]) -> list[Triple]:
        triples = [
            Triple(t["head"], t["relation"], t["tail"], chunk.id)
            for t in self._call(chunk).get("triples", [])
        ]
        return sorted(triples, key=lambda t: (t.head, t.relation, t.tail))


def extract_entities(
    chunk: Chunk, extractor: EntityExtractor
) -> list[tuple[Mention, EntityCandidate]]:
    """Run the extractor and enforce the mention contract.

    Mentions must lie within the chunk, match their surface text, and
    be pairwise non-overlapping.
    """
    links = extractor.extract_entities(chunk)
    spans: list[tuple[int, int]] = []
    for mention, _ in links:
        if not (0 <= mention.start_char < mention.end_char <= len(chunk.text)):
            raise ValidationError(
                f"mention span ({mention.start_char}, {mention.end_char}) outside chunk"
            )
        if chunk.text[mention.start_char:mention.end_char] != mention.surface:
            raise ValidationError(f"mention surface {mention.surface!r} does not match chunk text")
        for s, e in spans:
            if mention.start_char < e and s < mention.end_char:
                raise ValidationError("mentions overlap")
        spans.append((mention.start_char, mention.end_char))
    return links


def resolve_coreferences(chunks: Sequence[Chunk], aliases: AliasTable) -> list[Chunk]:
    """Rewrite alias phrases to their canonical surfaces.

    Matching is case-insensitive on word boundaries, longest alias
    first; text outside alias spans is preserved byte for byte. The
    returned chunks keep their ids and original char_offsets, with
    token counts recomputed. Applying the rewrite twice is a no-op.
    """
    out = []
    for chunk in chunks:
        matches: list[tuple[int, int, str]] = []
        for alias, canonical in aliases.items():
            pattern = re.compile(r"\b" + re.escape(alias) + r"\b", re.IGNORECASE)
            for m in pattern.finditer(chunk.text):
                matches.append((m.start(), m.end(), canonical))
        matches.sort(key=lambda m: (m[0], -(m[1] - m[0])))
        kept: list[tuple[int, int, str]] = []
        last_end = -1
        for s, e, canonical in matches:
            if s >= last_end:
                kept.append((s, e, canonical))
                last_end = e
        if not kept:
            out.append(chunk)
            continue
        parts = []
        cursor = 0
        for s, e, canonical in kept:
            parts.append(chunk.text[cursor:s])
            parts.append(canonical)
            cursor = e
        parts.append(chunk.text[cursor:])
        text = "".join(parts)
        out.append(Chunk(
            id=chunk.id, doc_id=chunk.doc_id, text=text,
            token_count=count_tokens(text), char_offset=chunk.char_offset,
        ))
    return out


def extract_relations(
    chunk: Chunk, mentions: Sequence[Mention], extractor: RelationExtractor
) -> list[Triple]:
    """Run the relation extractor and validate its output labels."""
    for m in mentions:
        if m.chunk_id != chunk.id:
            raise ValidationError(f"mention {m.surface!r} belongs to chunk {m.chunk_id!r}")
    triples = extractor.extract_relations(chunk, mentions)
    inventory = extractor.relation_inventory
    if inventory is not None:
        for t in triples:
            if t.relation not in inventory:
                raise ValidationError(f"relation {t.relation!r} not in configured inventory")
    return triples


def _evidence_sentence(mention: Mention, chunks_by_id: dict[str, Chunk]) -> str | None:
    chunk = chunks_by_id.get(mention.chunk_id)
    if chunk is None:
        return None
    for s, e in split_sentences(chunk.text):
        if s <= mention.start_char and mention.end_char <= e:
            return chunk.text[s:e].strip()
    return chunk.text.strip() or None


def build_graph_delta(
    triples: Sequence[Triple],
    links: Sequence[tuple[Mention, EntityCandidate]],
    chunks: Sequence[Chunk] = (),
) -> tuple[list[Node], list[Relationship]]:
    """Turn links and triples into nodes and relationships.

    One node per distinct entity identity — the candidate kb_id, or the
    lowercased surface when unlinked. Node text is the title followed by
    the first evidence sentence (needs the chunks; falls back to the
    surface). One relationship per distinct (head, relation, tail).
    """
    chunks_by_id = {c.id: c for c in chunks}

    surface_to_kb: dict[str, str] = {}
    titles: dict[str, str] = {}
    evidence: dict[str, str] = {}
    kb_refs: dict[str, str | None] = {}

    def register(identity: str, title: str, kb_ref: str | None, sentence: str | None):
        if identity not in titles:
            titles[identity] = title
            kb_refs[identity] = kb_ref
        if identity not in evidence and sentence:
            evidence[identity] = sentence

    for mention, cand in links:
        surface_to_kb.setdefault(mention.surface.lower(), cand.kb_id)
        register(
            cand.kb_id, cand.title, cand.kb_id,
            _evidence_sentence(mention, chunks_by_id) or mention.surface,
        )

    def identity_of(ref: str) -> str:
        if ref in titles:  # already a known kb_id
            return ref
        kb = surface_to_kb.get(ref.lower())
        if kb is not None:
            return kb
        identity = ref.lower()
        register(identity, ref, None, None)
        return identity

    deduped: dict[tuple[str, str, str], Triple] = {}
    for t in triples:
        head = identity_of(t.head)
        tail = identity_of(t.tail)
        if head == tail:  # two mentions of one entity; skip self-loops
            continue
        deduped.setdefault((head, t.relation, tail), t)

    nodes = []
    for identity in sorted(titles):
        title = titles[identity]
        sentence = evidence.get(identity)
        text = f"{title}; {sentence}" if sentence else title
        nodes.append(Node(
            id=identity, label="Entity", text=text, kb_ref=kb_refs[identity],
        ))

    relationships = []
    for i, ((head, relation, tail), t) in enumerate(sorted(deduped.items())):
        relationships.append(Relationship(
            id=f"r{i:04d}", src=head, dst=tail, rel_type=relation,
            text=f"{titles[head]} {relation} {titles[tail]}",
        ))
    return nodes, relationships
