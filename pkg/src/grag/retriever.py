"""Dense passage retrieval: embed, score by dot product, take top-k.

Similarity is the raw dot product of the two embeddings, accumulated in
double precision with fixed left-to-right order so runs are bit-for-bit
reproducible; an optional cosine mode normalizes by vector lengths.
Retrieval is an exhaustive scan — corpus sizes here are small and
determinism matters more than speed.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import requests

from .corpus import tokenize
from .errors import DimensionError, EndpointError, ParseError, TransportError, ValidationError, VersionError

INDEX_FORMAT_VERSION = 1


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]
    dims: int

    def __post_init__(self):
        if len(self.values) != self.dims:
            raise DimensionError(
                f"vector has {len(self.values)} values but dims={self.dims}"
            )
        if not all(math.isfinite(v) for v in self.values):
            raise ValidationError("embedding values must be finite")

    @classmethod
    def of(cls, values) -> "EmbeddingVector":
        vals = tuple(float(v) for v in values)
        return cls(values=vals, dims=len(vals))


@dataclass(frozen=True)
class Passage:
    id: str
    text: str


@dataclass(frozen=True)
class ScoredPassage:
    passage_id: str
    score: float


@dataclass(frozen=True)
class PassageIndex:
    encoder_id: str
    dims: int
    entries: tuple[tuple[Passage, EmbeddingVector], ...]

    def __post_init__(self):
        for _, vec in self.entries:
            if vec.dims != self.dims:
                raise DimensionError(
                    f"index dims={self.dims} but entry vector has dims={vec.dims}"
                )

    def __len__(self) -> int:
        return len(self.entries)


class Encoder(Protocol):
    encoder_id: str
    dims: int

    def encode(self, text: str) -> EmbeddingVector: ...


class HashingEncoder:
    """Deterministic test encoder: seeded feature hashing of token n-grams.

    Unigrams and bigrams of lowercased tokens are hashed into `dims`
    buckets with a sign bit, giving stable vectors on every platform
    with no model dependency.
    """

    def __init__(self, dims: int = 64, seed: int = 0):
        if dims <= 0:
            raise ValidationError("dims must be > 0")
        self.dims = dims
        self.seed = seed
        self.encoder_id = f"hashing-v1:d{dims}:s{seed}"

    def encode(self, text: str) -> EmbeddingVector:
        buckets = [0.0] * self.dims
        tokens = [t.lower() for t in tokenize(text)]
        grams = tokens + [f"{a} {b}" for a, b in zip(tokens, tokens[1:])]
        for gram in grams:
            digest = hashlib.blake2b(
                f"{self.seed}|{gram}".encode("utf-8"), digest_size=9
            ).digest()
            bucket = int.from_bytes(digest[:8], "big") % self.dims
            sign = 1.0 if digest[8] % 2 == 0 else -1.0
            buckets[bucket] += sign
        return EmbeddingVector.of(buckets)


class RemoteEncoder:
    """Encoder backed by an HTTP embedding endpoint.

    Wire schema: POST {"texts": [...]} -> {"vectors": [[...], ...]}.
    """

    def __init__(self, endpoint: str, dims: int, encoder_id: str = "remote", timeout: float = 30.0):
        self.endpoint = endpoint
        self.dims = dims
        self.encoder_id = encoder_id
        self.timeout = timeout

    def encode(self, text: str) -> EmbeddingVector:
        return self.encode_batch([text])[0]

    def encode_batch(self, texts: list[str]) -> list[EmbeddingVector]:
        try:
            resp = requests.post(self.endpoint, json={"texts": texts}, timeout=self.timeout)
        except requests.RequestException as exc:
            raise TransportError(f"encoder endpoint unreachable: {exc}") from exc
        if resp.status_code != 200:
            raise EndpointError(
                f"encoder endpoint returned {resp.status_code}", status=resp.status_code
            )
        vectors = resp.json().get("vectors", [])
        if len(vectors) != len(texts):
            raise EndpointError("encoder returned wrong number of vectors")
        out = []
        for vec in vectors:
            if len(vec) != self.dims:
                raise DimensionError(
                    f"encoder returned {len(vec)}-dim vector, expected {self.dims}"
                )
            out.append(EmbeddingVector.of(vec))
        return out


def embed(text: str, encoder: Encoder) -> EmbeddingVector:
    """Encode text with the configured encoder."""
    return encoder.encode(text)


def similarity(q: EmbeddingVector, p: EmbeddingVector) -> float:
    """Dot product of the two embeddings, summed left to right."""
    if q.dims != p.dims:
        raise DimensionError(f"dims mismatch: {q.dims} vs {p.dims}")
    total = 0.0
    for a, b in zip(q.values, p.values):
        total += a * b
    return total


def _norm(v: EmbeddingVector) -> float:
    total = 0.0
    for a in v.values:
        total += a * a
    return math.sqrt(total)


def cosine_similarity(q: EmbeddingVector, p: EmbeddingVector) -> float:
    """Dot product normalized by vector lengths; 0 for zero vectors."""
    denom = _norm(q) * _norm(p)
    if denom == 0.0:
        return 0.0
    return similarity(q, p) / denom


def build_index(passages: list[Passage], encoder: Encoder) -> PassageIndex:
    """Embed all passages with one encoder into an immutable index."""
    seen = set()
    for p in passages:
        if p.id in seen:
            raise ValidationError(f"duplicate passage id {p.id!r}")
        seen.add(p.id)
    entries = tuple((p, encoder.encode(p.text)) for p in passages)
    return PassageIndex(encoder_id=encoder.encoder_id, dims=encoder.dims, entries=entries)


def retrieve_top_k(
    index: PassageIndex,
    query_vec: EmbeddingVector,
    k: int,
    cosine: bool = False,
) -> list[ScoredPassage]:
    """The k highest-scoring passages, score descending, ties by id."""
    if k < 0:
        raise ValidationError("k must be >= 0")
    if query_vec.dims != index.dims:
        raise DimensionError(
            f"query dims {query_vec.dims} != index dims {index.dims}"
        )
    score = cosine_similarity if cosine else similarity
    scored = [ScoredPassage(p.id, score(query_vec, vec)) for p, vec in index.entries]
    scored.sort(key=lambda sp: (-sp.score, sp.passage_id))
    return scored[:k]


def save_index(index: PassageIndex, path: str | Path) -> None:
    """Persist the index as versioned line-delimited JSON."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({
            "version": INDEX_FORMAT_VERSION,
            "encoder_id": index.encoder_id,
            "dims": index.dims,
            "count": len(index),
        }) + "\n")
        for p, vec in index.entries:
            fh.write(json.dumps(
                {"id": p.id, "text": p.text, "values": list(vec.values)},
                ensure_ascii=False,
            ) + "\n")


def load_index(path: str | Path) -> PassageIndex:
    """Load an index persisted by save_index."""
    with open(path, encoding="utf-8") as fh:
        lines = [line for line in fh if line.strip()]
    if not lines:
        raise ParseError(f"{path}: empty index file")
    header = json.loads(lines[0])
    if header.get("version") != INDEX_FORMAT_VERSION:
        raise VersionError(f"{path}: unsupported index version {header.get('version')!r}")
    dims = header["dims"]
    entries = []
    for line in lines[1:]:
        rec = json.loads(line)
        vec = EmbeddingVector.of(rec["values"])
        if vec.dims != dims:
            raise DimensionError(f"{path}: entry {rec['id']!r} has dims {vec.dims} != {dims}")
        entries.append((Passage(rec["id"], rec["text"]), vec))
    if len(entries) != header.get("count"):
        raise ParseError(f"{path}: header count {header.get('count')} != {len(entries)} entries")
    return PassageIndex(encoder_id=header["encoder_id"], dims=dims, entries=tuple(entries))
