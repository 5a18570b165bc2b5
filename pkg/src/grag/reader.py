"""Passage reading: delimited sequence assembly and span decoding.

The input sequence interleaves the question tokens with retrieved
passages, each segment closed by a reserved delimiter token. Spans over
the question segment are decoded from pluggable start/end probability
functions; a start index s is kept when its probability exceeds the
start threshold, and every end index e >= s whose conditional
probability exceeds the end threshold produces a span, so overlapping
spans are allowed.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Protocol, Sequence

import requests

from .errors import ContractError, EndpointError, TransportError, ValidationError

DELIMITER_TOKEN = "[SEP]"


@dataclass(frozen=True)
class Segment:
    tag: str  # "Q", "SEP", or "P<i>"
    start: int
    end: int


@dataclass(frozen=True)
class InputSequence:
    tokens: tuple[str, ...]
    segments: tuple[Segment, ...]

    @property
    def layout(self) -> list[str]:
        return [seg.tag for seg in self.segments]

    @property
    def question_length(self) -> int:
        return self.segments[0].end - self.segments[0].start

    @property
    def question_tokens(self) -> tuple[str, ...]:
        q = self.segments[0]
        return self.tokens[q.start:q.end]

    @property
    def passages(self) -> list[tuple[str, ...]]:
        return [
            self.tokens[seg.start:seg.end]
            for seg in self.segments if seg.tag.startswith("P")
        ]


@dataclass(frozen=True)
class Thresholds:
    theta_s: float = 0.5
    theta_e: float = 0.5

    def __post_init__(self):
        for name, v in (("theta_s", self.theta_s), ("theta_e", self.theta_e)):
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"{name} must be in [0, 1], got {v}")


@dataclass(frozen=True)
class SpanPrediction:
    start: int
    end: int
    p_start: float
    p_end: float


class SpanScorer(Protocol):
    """Start/end probability functions over the question segment.

    end_probs returns a full question-length list; entries at indices
    below `start` are ignored by the decoder.
    """

    def start_probs(self, seq: InputSequence) -> Sequence[float]: ...

    def end_probs(self, seq: InputSequence, start: int) -> Sequence[float]: ...


def assemble_sequence(question: Sequence[str], passages: Sequence[Sequence[str]]) -> InputSequence:
    """Build [Q; sep; P1; sep; ...; Pn; sep] with delimiter sentinels."""
    for tok in question:
        if tok == DELIMITER_TOKEN:
            raise ValidationError(f"question contains reserved delimiter {DELIMITER_TOKEN!r}")
    for p in passages:
        for tok in p:
            if tok == DELIMITER_TOKEN:
                raise ValidationError(f"passage contains reserved delimiter {DELIMITER_TOKEN!r}")
    tokens: list[str] = []
    segments: list[Segment] = []

    def push(tag: str, toks: Sequence[str]):
        start = len(tokens)
        tokens.extend(toks)
        segments.append(Segment(tag, start, len(tokens)))

    push("Q", question)
    push("SEP", [DELIMITER_TOKEN])
    for i, p in enumerate(passages, start=1):
        push(f"P{i}", p)
        push("SEP", [DELIMITER_TOKEN])
    return InputSequence(tokens=tuple(tokens), segments=tuple(segments))


def _check_probs(probs: Sequence[float], expected_len: int, from_index: int, what: str):
    if len(probs) != expected_len:
        raise ContractError(
            f"{what} returned {len(probs)} values, expected {expected_len}"
        )
    for i in range(from_index, expected_len):
        p = probs[i]
        if not 0.0 <= p <= 1.0:
            raise ContractError(f"{what}[{i}] = {p} outside [0, 1]")


def decode_spans(
    seq: InputSequence,
    scorer: SpanScorer,
    th: Thresholds | None = None,
    max_spans: int = 16,
) -> list[SpanPrediction]:
    """All spans (s, e) with p_start > theta_s and p_end > theta_e.

    Sorted by p_start * p_end descending, ties by (start, end)
    ascending, truncated to max_spans. Indices are positions within the
    question segment.
    """
    th = th or Thresholds()
    qlen = seq.question_length
    starts = scorer.start_probs(seq)
    _check_probs(starts, qlen, 0, "start_probs")
    spans: list[SpanPrediction] = []
    for s in range(qlen):
        if starts[s] <= th.theta_s:
            continue
        ends = scorer.end_probs(seq, s)
        _check_probs(ends, qlen, s, "end_probs")
        for e in range(s, qlen):
            if ends[e] > th.theta_e:
                spans.append(SpanPrediction(s, e, starts[s], ends[e]))
    spans.sort(key=lambda sp: (-(sp.p_start * sp.p_end), sp.start, sp.end))
    return spans[:max_spans]


class LexicalOverlapScorer:
    """Deterministic scorer stub: probabilities from token overlap.

    A question token's start probability is 1.0 when the token occurs
    (case-insensitively) in any passage. The end probability of a span
    is the fraction of its positions whose token occurs in a passage.
    """

    def _passage_vocab(self, seq: InputSequence) -> set[str]:
        vocab = set()
        for seg in seq.segments:
            if seg.tag.startswith("P"):
                vocab.update(t.lower() for t in seq.tokens[seg.start:seg.end])
        return vocab

    def start_probs(self, seq: InputSequence) -> list[float]:
        vocab = self._passage_vocab(seq)
        return [1.0 if t.lower() in vocab else 0.0 for t in seq.question_tokens]

    def end_probs(self, seq: InputSequence, start: int) -> list[float]:
        vocab = self._passage_vocab(seq)
        q = seq.question_tokens
        probs = [0.0] * len(q)
        hits = 0
        for e in range(start, len(q)):
            if q[e].lower() in vocab:
                hits += 1
            probs[e] = hits / (e - start + 1)
        return probs


class RemoteSpanScorer:
    """Scorer backed by an HTTP model endpoint.

    Wire schema: POST {"tokens": [...], "layout": [...]} for start
    probabilities, plus "start": s for end probabilities; the response
    is {"probs": [...]}.
    """

    def __init__(self, endpoint: str, timeout: float = 30.0, max_in_flight: int = 8):
        self.endpoint = endpoint
        self.timeout = timeout
        self._in_flight = threading.BoundedSemaphore(max_in_flight)

    def _post(self, payload: dict) -> list[float]:
        try:
            with self._in_flight:
                resp = requests.post(self.endpoint, json=payload, timeout=self.timeout)
        except requests.RequestException as exc:
            raise TransportError(f"span scorer endpoint unreachable: {exc}") from exc
        if resp.status_code != 200:
            raise EndpointError(
                f"span scorer endpoint returned {resp.status_code}", status=resp.status_code
            )
        return resp.json().get("probs", [])

    def start_probs(self, seq: InputSequence) -> list[float]:
        return self._post({"tokens": list(seq.tokens), "layout": seq.layout})

    def end_probs(self, seq: InputSequence, start: int) -> list[float]:
        return self._post({"tokens": list(seq.tokens), "layout": seq.layout, "start": start})
