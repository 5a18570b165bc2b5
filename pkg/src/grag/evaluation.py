"""Judge-based evaluators and the cross-pipeline evaluation suite.

Four metrics are available: correctness (numeric judge score against a
threshold), faithfulness and answer relevancy (binary yes/no judges),
and context relevancy (judge score normalized by a fixed threshold of
4.0, reported as "relevancy"). The suite runs each pipeline over a
query dataset, aggregates per-metric means and sample standard
deviations, and compares pipelines with a one-way ANOVA.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from .contextizer import CLOSED_CLASS_WORDS
from .corpus import tokenize
from .errors import ParseError, PreconditionError, GragError
from .llm import ChatRequest, ChatResponse, LLMClient
from .stats import AnovaResult, one_way_anova, sample_sd

CORRECTNESS_THRESHOLD = 4.0
CONTEXT_RELEVANCY_DIVISOR = 4.0

DEFAULT_METRICS = ("correctness", "faithfulness", "relevancy")
ALL_METRICS = ("correctness", "faithfulness", "relevancy", "answer_relevancy")

_YES_WORD_RE = re.compile(r"\byes\b", re.IGNORECASE)
_LEADING_SCORE_RE = re.compile(r"^\s*(\d+(?:\.\d+)?)")


@dataclass
class EvalSample:
    query: str
    response: str = ""
    reference: str | None = None
    contexts: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.query:
            raise PreconditionError("query must be non-empty")


@dataclass
class EvaluationResult:
    metric: str
    query: str
    response: str
    contexts: list[str]
    passing: bool | None
    score: float
    feedback: str
    invalid_result: bool = False
    invalid_reason: str | None = None


@dataclass
class JudgeOutput:
    raw_text: str
    parsed_score: float | None
    reasoning: str | None


def parse_judge_score(raw_text: str) -> JudgeOutput:
    """Extract a leading numeric score; the remaining text is reasoning."""
    lines = raw_text.splitlines()
    first = lines[0] if lines else ""
    m = _LEADING_SCORE_RE.match(first)
    if not m:
        return JudgeOutput(raw_text=raw_text, parsed_score=None, reasoning=None)
    reasoning = "\n".join([first[m.end():].strip()] + lines[1:]).strip()
    return JudgeOutput(raw_text=raw_text, parsed_score=float(m.group(1)), reasoning=reasoning)


CORRECTNESS_PROMPT = (
    "Rate the correctness of the response against the reference answer "
    "on a scale of 1 to 5.\n"
    "Reply with the numeric score on the first line, then your reasoning.\n"
    "Question: {q}\nReference: {r}\nResponse: {g}"
)

FAITHFULNESS_PROMPT = (
    "Is the following information supported by the context? "
    "Reply YES or NO, then explain briefly.\n"
    "Information: {g}\nContext:\n{ctx}"
)

ANSWER_RELEVANCY_PROMPT = (
    "Does the following exchange stay relevant to the question, given the "
    "context? Reply YES or NO, then explain briefly.\n"
    "{qr}\nContext:\n{ctx}"
)

CONTEXT_RELEVANCY_PROMPT = (
    "Rate how relevant the context is to the question on a scale of 0 to 4.\n"
    "Reply with the numeric score on the first line, then your reasoning.\n"
    "Question: {q}\nContext:\n{ctx}"
)


def _ask(judge: LLMClient, prompt: str) -> str:
    return judge.generate(ChatRequest(user=prompt)).text


def eval_correctness(
    sample: EvalSample, judge: LLMClient, threshold: float = CORRECTNESS_THRESHOLD
) -> EvaluationResult:
    """Numeric judge score compared against the passing threshold."""
    prompt = CORRECTNESS_PROMPT.format(
        q=sample.query, r=sample.reference or "", g=sample.response
    )
    raw = _ask(judge, prompt)
    parsed = parse_judge_score(raw)
    if parsed.parsed_score is None:
        return EvaluationResult(
            metric="correctness", query=sample.query, response=sample.response,
            contexts=list(sample.contexts), passing=False, score=0.0,
            feedback=f"parse error: no leading numeric score in {raw!r}",
            invalid_result=True, invalid_reason="unparseable judge output",
        )
    return EvaluationResult(
        metric="correctness", query=sample.query, response=sample.response,
        contexts=list(sample.contexts),
        passing=parsed.parsed_score >= threshold,
        score=parsed.parsed_score,
        feedback=parsed.reasoning or raw,
    )


def _yes_no_metric(
    metric: str, judged_prompt: str, sample: EvalSample, judge: LLMClient,
    substring_match: bool,
) -> EvaluationResult:
    if not sample.contexts:
        raise PreconditionError(f"{metric} evaluation needs non-empty contexts")
    raw = _ask(judge, judged_prompt)
    if substring_match:
        passing = "yes" in raw.lower()
    else:
        # Word-boundary matching avoids "eyes"/"yesterday" false positives;
        # substring_match=True restores the literal containment rule.
        passing = _YES_WORD_RE.search(raw) is not None
    return EvaluationResult(
        metric=metric, query=sample.query, response=sample.response,
        contexts=list(sample.contexts), passing=passing,
        score=1.0 if passing else 0.0, feedback=raw,
    )


def eval_faithfulness(
    sample: EvalSample, judge: LLMClient, substring_match: bool = False
) -> EvaluationResult:
    """Binary: does the judge affirm the response is grounded in the contexts?"""
    prompt = FAITHFULNESS_PROMPT.format(
        g=sample.response, ctx="\n".join(sample.contexts)
    )
    return _yes_no_metric("faithfulness", prompt, sample, judge, substring_match)


def eval_answer_relevancy(
    sample: EvalSample, judge: LLMClient, substring_match: bool = False
) -> EvaluationResult:
    """Binary: is the question/response exchange relevant, per the judge?"""
    qr = f"Question: {sample.query} Response: {sample.response}"
    prompt = ANSWER_RELEVANCY_PROMPT.format(qr=qr, ctx="\n".join(sample.contexts))
    return _yes_no_metric("answer_relevancy", prompt, sample, judge, substring_match)


def eval_context_relevancy(sample: EvalSample, judge: LLMClient) -> EvaluationResult:
    """Judge score normalized by the fixed 4.0 divisor, clamped to [0, 1]."""
    if not sample.contexts:
        raise PreconditionError("context relevancy evaluation needs non-empty contexts")
    prompt = CONTEXT_RELEVANCY_PROMPT.format(
        q=sample.query, ctx="\n".join(sample.contexts)
    )
    raw = _ask(judge, prompt)
    parsed = parse_judge_score(raw)
    if parsed.parsed_score is None:
        return EvaluationResult(
            metric="relevancy", query=sample.query, response=sample.response,
            contexts=list(sample.contexts), passing=None, score=0.0,
            feedback=f"parse error: no leading numeric score in {raw!r}",
            invalid_result=True, invalid_reason="unparseable judge output",
        )
    normalized = min(max(parsed.parsed_score / CONTEXT_RELEVANCY_DIVISOR, 0.0), 1.0)
    return EvaluationResult(
        metric="relevancy", query=sample.query, response=sample.response,
        contexts=list(sample.contexts), passing=None, score=normalized, feedback=raw,
    )


def _content_tokens(text: str) -> set[str]:
    return {
        t.lower() for t in tokenize(text)
        if len(t) > 1 and t.lower() not in CLOSED_CLASS_WORDS and any(c.isalnum() for c in t)
    }


class MockJudgeClient:
    """Deterministic judge for hermetic runs.

    Dispatches on the shipped evaluator prompt wording and scores by
    token overlap between the judged sections, so different pipelines
    and queries get varied but reproducible verdicts.
    """

    model_id = "mock-judge-v1"

    def generate(self, req: ChatRequest) -> ChatResponse:
        text = self._respond(req.user)
        return ChatResponse(text=text, model_id=self.model_id)

    def _respond(self, prompt: str) -> str:
        sections = _parse_prompt_sections(prompt)
        context = sections.get("context", "")
        if prompt.startswith("Rate the correctness"):
            ref = _content_tokens(sections.get("reference", ""))
            got = _content_tokens(sections.get("response", ""))
            coverage = len(ref & got) / len(ref) if ref else 0.0
            score = round((1.0 + 4.0 * coverage) * 2) / 2
            return f"{score:g}\nReference term coverage: {coverage:.2f}."
        if prompt.startswith("Is the following information supported"):
            info = _content_tokens(sections.get("information", ""))
            ctx = _content_tokens(context)
            coverage = len(info & ctx) / len(info) if info else 0.0
            if coverage >= 0.6:
                return f"YES, the statement is grounded in the context (coverage {coverage:.2f})."
            return f"No, parts of the statement lack grounding (coverage {coverage:.2f})."
        if prompt.startswith("Does the following exchange"):
            q, resp = _split_question_response(sections.get("question", ""))
            overlap = _content_tokens(q) & _content_tokens(resp)
            ratio = len(overlap) / len(_content_tokens(q)) if _content_tokens(q) else 0.0
            if ratio >= 0.4:
                return f"YES, the response addresses the question (overlap {ratio:.2f})."
            return f"No, the response drifts from the question (overlap {ratio:.2f})."
        if prompt.startswith("Rate how relevant the context"):
            q = _content_tokens(sections.get("question", ""))
            ctx = _content_tokens(context)
            coverage = len(q & ctx) / len(q) if q else 0.0
            score = round(4.0 * coverage * 2) / 2
            return f"{score:g}\nQuestion term coverage: {coverage:.2f}."
        return "No verdict."


def _parse_prompt_sections(prompt: str) -> dict[str, str]:
    sections: dict[str, str] = {}
    current: str | None = None
    for line in prompt.splitlines():
        matched = False
        for label in ("Question:", "Reference:", "Response:", "Information:", "Context:"):
            if line.startswith(label):
                current = label[:-1].lower()
                sections[current] = line[len(label):].strip()
                matched = True
                break
        if not matched and current == "context":
            sections[current] += ("\n" if sections[current] else "") + line
    return sections


def _split_question_response(question_line: str) -> tuple[str, str]:
    if " Response: " in question_line:
        q, resp = question_line.split(" Response: ", 1)
        return q, resp
    return question_line, ""


def load_dataset(path: str | Path) -> list[EvalSample]:
    """Load {query, ground_truth} records from line-delimited JSON."""
    samples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                samples.append(EvalSample(query=rec["query"], reference=rec.get("ground_truth")))
            except (json.JSONDecodeError, KeyError) as exc:
                raise ParseError(f"{path} line {lineno}: bad dataset record ({exc})") from exc
    return samples


# A pipeline maps a query to (response_text, context_strings).
Pipeline = Callable[[str], tuple[str, list[str]]]


@dataclass
class MetricSummary:
    pipeline: str
    metric: str
    n: int
    mean: float
    sd: float


@dataclass
class AnovaSummary:
    metric: str
    result: AnovaResult | None
    note: str = ""


@dataclass
class EvalReport:
    rows: list[EvaluationResult]
    pipelines: list[str]
    metrics: list[str]
    row_pipeline: list[str]          # pipeline name per row, aligned with rows
    summaries: list[MetricSummary]
    anova: list[AnovaSummary]

    @property
    def has_invalid(self) -> bool:
        return any(r.invalid_result for r in self.rows)


_EVALUATORS = {
    "correctness": lambda s, j, t: eval_correctness(s, j, t),
    "faithfulness": lambda s, j, t: eval_faithfulness(s, j),
    "relevancy": lambda s, j, t: eval_context_relevancy(s, j),
    "answer_relevancy": lambda s, j, t: eval_answer_relevancy(s, j),
}


def run_eval_suite(
    dataset: Sequence[EvalSample],
    pipelines: dict[str, Pipeline],
    judge: LLMClient,
    metrics: Sequence[str] = DEFAULT_METRICS,
    correctness_threshold: float = CORRECTNESS_THRESHOLD,
) -> EvalReport:
    """Evaluate every pipeline on every sample for every metric.

    Invalid results (unparseable judge output) are kept in the rows but
    excluded from means, sds, and the ANOVA.
    """
    if not dataset:
        raise PreconditionError("evaluation dataset is empty")
    for metric in metrics:
        if metric not in _EVALUATORS:
            raise PreconditionError(f"unknown metric {metric!r}")

    rows: list[EvaluationResult] = []
    row_pipeline: list[str] = []
    scores: dict[tuple[str, str], list[float]] = {}

    for name, pipeline in pipelines.items():
        for sample in dataset:
            response, contexts = pipeline(sample.query)
            enriched = EvalSample(
                query=sample.query, response=response,
                reference=sample.reference, contexts=contexts,
            )
            for metric in metrics:
                result = _EVALUATORS[metric](enriched, judge, correctness_threshold)
                rows.append(result)
                row_pipeline.append(name)
                if not result.invalid_result:
                    scores.setdefault((name, metric), []).append(result.score)

    summaries = []
    for name in pipelines:
        for metric in metrics:
            vals = scores.get((name, metric), [])
            if not vals:
                continue
            summaries.append(MetricSummary(
                pipeline=name, metric=metric, n=len(vals),
                mean=sum(vals) / len(vals),
                sd=sample_sd(vals) if len(vals) >= 2 else 0.0,
            ))

    anova = []
    for metric in metrics:
        groups = [scores.get((name, metric), []) for name in pipelines]
        try:
            anova.append(AnovaSummary(metric=metric, result=one_way_anova(groups)))
        except GragError as exc:
            anova.append(AnovaSummary(metric=metric, result=None, note=str(exc)))

    return EvalReport(
        rows=rows, pipelines=list(pipelines), metrics=list(metrics),
        row_pipeline=row_pipeline, summaries=summaries, anova=anova,
    )
