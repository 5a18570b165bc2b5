"""Shared fixtures: corpus files, a small graph, and an HTTP stub server."""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from grag.kg import KnowledgeGraph, Node, Relationship


@pytest.fixture
def corpus_file(tmp_path):
    def write(records):
        path = tmp_path / "corpus.jsonl"
        with open(path, "w", encoding="utf-8") as fh:
            for rec in records:
                fh.write(json.dumps(rec) + "\n")
        return path
    return write


@pytest.fixture
def small_graph():
    graph = KnowledgeGraph()
    graph.upsert_node(Node(id="n1", label="Entity", text="CrMnFeCoNi alloy"))
    graph.upsert_node(Node(id="n2", label="Entity", text="Chromium"))
    graph.upsert_node(Node(id="n3", label="Entity", text="yield strength data"))
    graph.add_relationship(Relationship(
        id="r1", src="n1", dst="n3", rel_type="has_property",
        text="CrMnFeCoNi alloy exhibits yield strength",
    ))
    graph.add_relationship(Relationship(
        id="r2", src="n1", dst="n2", rel_type="contains", text="melts at",
    ))
    return graph


class _StubHandler(BaseHTTPRequestHandler):
    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        body = json.loads(self.rfile.read(length) or b"{}")
        self.server.requests.append({"path": self.path, "body": body})
        status, payload = self.server.responder(self.path, body, len(self.server.requests))
        data = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):  # keep test output quiet
        pass


@pytest.fixture
def stub_server():
    """HTTP stub: responder(path, body, call_number) -> (status, payload)."""
    servers = []

    def start(responder):
        server = HTTPServer(("127.0.0.1", 0), _StubHandler)
        server.responder = responder
        server.requests = []
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        servers.append((server, thread))
        return f"http://127.0.0.1:{server.server_port}", server

    yield start
    for server, thread in servers:
        server.shutdown()
        thread.join(timeout=2)
        server.server_close()
