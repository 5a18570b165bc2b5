"""Document loading and token-budgeted chunking.

Documents arrive as line-delimited JSON records (one document per line)
and are split into retrieval-ready chunks. Token counting is a
deterministic approximation of LLM tokenization: whitespace-delimited
words with punctuation split off as separate tokens.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

from .errors import DuplicateIdError, ParseError, ValidationError

# A token is a maximal run of word characters; every other non-space
# character counts as its own token.
_TOKEN_RE = re.compile(r"\w+|[^\w\s]")

# Tokens that end with '.' but do not terminate a sentence.
_ABBREVIATIONS = {
    "al", "approx", "ca", "cf", "dr", "e.g", "eq", "etc", "fig", "i.e",
    "mr", "mrs", "ms", "no", "prof", "ref", "vs",
}

_SENTENCE_END_RE = re.compile(r"[.?!]+(?=\s)")


def tokenize(text: str) -> list[str]:
    """Split text into word and punctuation tokens."""
    return _TOKEN_RE.findall(text)


def tokenize_with_spans(text: str) -> list[tuple[str, int, int]]:
    """Tokenize, keeping each token's (start, end) character span."""
    return [(m.group(), m.start(), m.end()) for m in _TOKEN_RE.finditer(text)]


def count_tokens(text: str) -> int:
    """Deterministic token count used for all context budgets."""
    return len(_TOKEN_RE.findall(text))


def normalize_whitespace(text: str) -> str:
    """Collapse whitespace runs to single spaces and strip the ends."""
    return " ".join(text.split())


def split_sentences(text: str) -> list[tuple[int, int]]:
    """Return (start, end) character spans of sentences.

    A sentence boundary is `.`, `?` or `!` followed by whitespace and an
    uppercase letter or digit, unless the preceding word is a known
    abbreviation. English-only heuristic; spans cover the whole text.
    """
    if not text.strip():
        return []
    boundaries = []
    for m in _SENTENCE_END_RE.finditer(text):
        after = text[m.end():].lstrip()
        if not after or not (after[0].isupper() or after[0].isdigit()):
            continue
        before = text[: m.start()].rstrip()
        last_word = before.split()[-1].lower().rstrip(".") if before.split() else ""
        if last_word in _ABBREVIATIONS:
            continue
        boundaries.append(m.end())
    spans = []
    start = 0
    for b in boundaries:
        spans.append((start, b))
        start = b
    spans.append((start, len(text)))
    # Trim leading whitespace off every span so offsets point at text.
    trimmed = []
    for s, e in spans:
        while s < e and text[s].isspace():
            s += 1
        if s < e:
            trimmed.append((s, e))
    return trimmed


@dataclass
class Document:
    id: str
    title: str
    text: str
    source: str


@dataclass
class Chunk:
    id: str
    doc_id: str
    text: str
    token_count: int
    char_offset: int


@dataclass
class ChunkingConfig:
    max_tokens: int = 512
    overlap_tokens: int = 64
    sentence_aware: bool = True

    def __post_init__(self):
        if self.max_tokens <= 0:
            raise ValidationError("max_tokens must be > 0")
        if self.overlap_tokens < 0 or self.overlap_tokens >= self.max_tokens:
            raise ValidationError("overlap_tokens must be in [0, max_tokens)")


def load_corpus(path: str | Path, allow_empty_text: bool = False) -> list[Document]:
    """Load documents from a line-delimited JSON file, in file order.

    Raises ParseError naming the offending line, and DuplicateIdError
    citing the line on which an id is repeated. Documents with empty
    text are rejected unless allow_empty_text is set.
    """
    docs: list[Document] = []
    seen: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(rec, dict):
                raise ParseError(f"line {lineno}: expected an object")
            try:
                doc = Document(
                    id=rec["id"], title=rec.get("title", ""),
                    text=rec["text"], source=rec.get("source", str(path)),
                )
            except KeyError as exc:
                raise ParseError(f"line {lineno}: missing field {exc}") from exc
            if not doc.id:
                raise ParseError(f"line {lineno}: empty document id")
            if not doc.text and not allow_empty_text:
                raise ParseError(f"line {lineno}: document {doc.id!r} has empty text")
            if doc.id in seen:
                raise DuplicateIdError(
                    f"line {lineno}: duplicate document id {doc.id!r} "
                    f"(first seen on line {seen[doc.id]})"
                )
            seen[doc.id] = lineno
            docs.append(doc)
    return docs


def chunk_document(doc: Document, cfg: ChunkingConfig | None = None) -> list[Chunk]:
    """Split a document into chunks of at most cfg.max_tokens tokens.

    With sentence_aware=True sentences are packed greedily and chunk
    boundaries fall on sentence boundaries; a single sentence longer
    than the budget is hard-split. Consecutive chunks share up to
    overlap_tokens trailing/leading tokens when overlap_tokens > 0.
    Chunk text is always a contiguous substring of the document, so
    char_offset locates it exactly.
    """
    cfg = cfg or ChunkingConfig()
    tokens = tokenize_with_spans(doc.text)
    if not tokens:
        return []

    if cfg.sentence_aware:
        windows = _sentence_windows(doc.text, tokens, cfg)
    else:
        windows = _token_windows(len(tokens), cfg.max_tokens, cfg.overlap_tokens)

    chunks = []
    for i, (lo, hi) in enumerate(windows):
        start = tokens[lo][1]
        end = tokens[hi - 1][2]
        chunks.append(Chunk(
            id=f"{doc.id}#c{i}",
            doc_id=doc.id,
            text=doc.text[start:end],
            token_count=hi - lo,
            char_offset=start,
        ))
    return chunks


def _token_windows(n: int, max_tokens: int, overlap: int) -> list[tuple[int, int]]:
    stride = max_tokens - overlap
    windows = []
    lo = 0
    while lo < n:
        hi = min(lo + max_tokens, n)
        windows.append((lo, hi))
        if hi == n:
            break
        lo += stride
    return windows


def _sentence_windows(text, tokens, cfg) -> list[tuple[int, int]]:
    """Greedy sentence packing over token indices, with sentence overlap."""
    spans = split_sentences(text)
    # Map each sentence to the token index range it covers.
    sent_ranges: list[tuple[int, int]] = []
    ti = 0
    for s, e in spans:
        lo = ti
        while ti < len(tokens) and tokens[ti][1] < e:
            ti += 1
        if ti > lo:
            sent_ranges.append((lo, ti))
    if ti < len(tokens):  # trailing tokens outside any span
        sent_ranges.append((ti, len(tokens)))

    windows: list[tuple[int, int]] = []
    i = 0
    carry_start: int | None = None  # token index where the overlap region begins
    while i < len(sent_ranges):
        lo = carry_start if carry_start is not None else sent_ranges[i][0]
        hi = sent_ranges[i][1]
        if hi - sent_ranges[i][0] > cfg.max_tokens:
            # Oversized sentence: hard-split it on token windows.
            for wlo, whi in _token_windows(
                sent_ranges[i][1] - sent_ranges[i][0], cfg.max_tokens, cfg.overlap_tokens
            ):
                windows.append((sent_ranges[i][0] + wlo, sent_ranges[i][0] + whi))
            i += 1
            carry_start = None
            continue
        if hi - lo > cfg.max_tokens:
            # Overlap region leaves no room; drop it for this chunk.
            lo = sent_ranges[i][0]
        j = i
        while j + 1 < len(sent_ranges) and sent_ranges[j + 1][1] - lo <= cfg.max_tokens:
            j += 1
            hi = sent_ranges[j][1]
        windows.append((lo, hi))
        # Whole trailing sentences of this chunk, within the overlap budget,
        # seed the next chunk.
        carry_start = None
        if cfg.overlap_tokens > 0 and j + 1 < len(sent_ranges):
            k = j
            while k >= i and hi - sent_ranges[k][0] <= cfg.overlap_tokens:
                carry_start = sent_ranges[k][0]
                k -= 1
        i = j + 1
    return windows


def write_chunks(chunks: list[Chunk], path: str | Path) -> None:
    """Write chunks as line-delimited JSON records."""
    with open(path, "w", encoding="utf-8") as fh:
        for c in chunks:
            fh.write(json.dumps({
                "id": c.id, "doc_id": c.doc_id, "text": c.text,
                "token_count": c.token_count, "char_offset": c.char_offset,
            }, ensure_ascii=False) + "\n")


def load_chunks(path: str | Path) -> list[Chunk]:
    """Read chunks written by write_chunks."""
    chunks = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                chunks.append(Chunk(
                    id=rec["id"], doc_id=rec["doc_id"], text=rec["text"],
                    token_count=rec["token_count"], char_offset=rec["char_offset"],
                ))
            except (json.JSONDecodeError, KeyError) as exc:
                raise ParseError(f"line {lineno}: bad chunk record ({exc})") from exc
    return chunks
