"""Embedded property-graph store with keyword-relevance selection.

The graph is an in-memory node/relationship store with file
persistence. Selection is case-insensitive substring matching of
keywords against node/relationship text, ranked by the number of
distinct keywords matched (ties broken by ascending id) and capped at
a configurable limit. Readers may run concurrently; writes require
exclusive access (selection never mutates).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import count_tokens
from .errors import DuplicateIdError, IntegrityError, ParseError, ValidationError, VersionError

GRAPH_FORMAT_VERSION = 1


@dataclass
class Node:
    id: str
    label: str
    text: str
    kb_ref: str | None = None
    attrs: dict[str, str] = field(default_factory=dict)


@dataclass
class Relationship:
    id: str
    src: str
    dst: str
    rel_type: str
    text: str


class KnowledgeGraph:
    """Node/relationship store; ids unique within each kind."""

    def __init__(self):
        self._nodes: dict[str, Node] = {}
        self._rels: dict[str, Relationship] = {}

    @property
    def nodes(self) -> list[Node]:
        return list(self._nodes.values())

    @property
    def relationships(self) -> list[Relationship]:
        return list(self._rels.values())

    def node(self, node_id: str) -> Node | None:
        return self._nodes.get(node_id)

    def relationship(self, rel_id: str) -> Relationship | None:
        return self._rels.get(rel_id)

    def __len__(self) -> int:
        return len(self._nodes)

    def __eq__(self, other) -> bool:
        if not isinstance(other, KnowledgeGraph):
            return NotImplemented
        return self._nodes == other._nodes and self._rels == other._rels

    def upsert_node(self, node: Node) -> str:
        """Insert the node, or replace the node with the same id."""
        if not node.text:
            raise ValidationError(f"node {node.id!r} has empty text")
        if not node.id:
            raise ValidationError("node id must be non-empty")
        self._nodes[node.id] = node
        return node.id

    def add_relationship(self, rel: Relationship) -> str:
        """Store a relationship between two existing nodes."""
        if rel.id in self._rels:
            raise DuplicateIdError(f"relationship id {rel.id!r} already present")
        for endpoint in (rel.src, rel.dst):
            if endpoint not in self._nodes:
                raise IntegrityError(
                    f"relationship {rel.id!r} references missing node {endpoint!r}"
                )
        self._rels[rel.id] = rel
        return rel.id

    def select_nodes(self, keywords: set[str], n_max: int) -> list[Node]:
        """Nodes whose lowercased text contains at least one keyword.

        When more than n_max match, the nodes matching the most distinct
        keywords are kept; ties break by ascending node id.
        """
        return _select(self.nodes, keywords, n_max)

    def select_relationships(self, keywords: set[str], r_max: int) -> list[Relationship]:
        """Relationship analogue of select_nodes, matching on rel.text."""
        return _select(self.relationships, keywords, r_max)

    def stats(self) -> dict[str, float]:
        """Counts and average text token lengths, for budget derivation."""
        node_tokens = [count_tokens(n.text) for n in self.nodes]
        rel_tokens = [count_tokens(r.text) for r in self.relationships]
        return {
            "node_count": len(node_tokens),
            "relationship_count": len(rel_tokens),
            "avg_node_tokens": sum(node_tokens) / len(node_tokens) if node_tokens else 0.0,
            "avg_rel_tokens": sum(rel_tokens) / len(rel_tokens) if rel_tokens else 0.0,
        }


def _match_count(text: str, keywords: set[str]) -> int:
    lowered = text.lower()
    return sum(1 for k in keywords if k.lower() in lowered)


def _select(items, keywords: set[str], limit: int):
    if limit < 0:
        raise ValidationError("selection limit must be >= 0")
    matched = [(item, _match_count(item.text, keywords)) for item in items]
    matched = [(item, n) for item, n in matched if n > 0]
    matched.sort(key=lambda pair: (-pair[1], pair[0].id))
    return [item for item, _ in matched[:limit]]


def persist_graph(graph: KnowledgeGraph, path: str | Path) -> None:
    """Write the graph as versioned line-delimited JSON.

    First line is a header with the format version and record counts,
    followed by node records, then relationship records.
    """
    with open(path, "w", encoding="utf-8") as fh:
        header = {
            "version": GRAPH_FORMAT_VERSION,
            "nodes": len(graph.nodes),
            "relationships": len(graph.relationships),
        }
        fh.write(json.dumps(header) + "\n")
        for n in graph.nodes:
            fh.write(json.dumps({
                "id": n.id, "label": n.label, "text": n.text,
                "kb_ref": n.kb_ref, "attrs": n.attrs,
            }, ensure_ascii=False) + "\n")
        for r in graph.relationships:
            fh.write(json.dumps({
                "id": r.id, "src": r.src, "dst": r.dst,
                "rel_type": r.rel_type, "text": r.text,
            }, ensure_ascii=False) + "\n")


def load_graph(path: str | Path) -> KnowledgeGraph:
    """Load a graph persisted by persist_graph, validating integrity."""
    with open(path, encoding="utf-8") as fh:
        lines = [line for line in fh if line.strip()]
    if not lines:
        raise ParseError(f"{path}: empty graph file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: bad header line ({exc.msg})") from exc
    version = header.get("version")
    if version != GRAPH_FORMAT_VERSION:
        raise VersionError(f"{path}: unsupported graph format version {version!r}")
    n_nodes = header.get("nodes", 0)
    n_rels = header.get("relationships", 0)
    if len(lines) - 1 != n_nodes + n_rels:
        raise ParseError(
            f"{path}: header promises {n_nodes + n_rels} records, found {len(lines) - 1}"
        )
    graph = KnowledgeGraph()
    for line in lines[1:1 + n_nodes]:
        rec = json.loads(line)
        graph.upsert_node(Node(
            id=rec["id"], label=rec["label"], text=rec["text"],
            kb_ref=rec.get("kb_ref"), attrs=rec.get("attrs", {}),
        ))
    for line in lines[1 + n_nodes:]:
        rec = json.loads(line)
        graph.add_relationship(Relationship(
            id=rec["id"], src=rec["src"], dst=rec["dst"],
            rel_type=rec["rel_type"], text=rec["text"],
        ))
    return graph
