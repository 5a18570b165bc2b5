"""Question answering over the graph: keywords, budgeted context, prompt.

The chain extracts keywords from the question, selects matching nodes
and relationships under a token budget derived from the model's context
length, concatenates their text into a context block, renders the
prompt template, and asks the configured LLM client for the answer.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

from .corpus import count_tokens, tokenize
from .errors import GenerationError, GragError, TemplateError, ValidationError
from .kg import KnowledgeGraph
from .llm import ChatRequest, LLMClient

# Closed-class words standing in for a POS filter: keeping open-class
# nouns/verbs/adjectives means dropping determiners, prepositions,
# pronouns, auxiliaries, conjunctions, and degree adverbs.
CLOSED_CLASS_WORDS = frozenset("""
a about above after again against all am an and any are as at be because
been before being below between both but by can cannot could did do does
doing down during each few for from further had has have having he her
here hers herself him himself his how i if in into is it its itself just
may me might more most must my myself no nor not now of off on once only
or other our ours ourselves out over own per same shall she should so
some such than that the their theirs them themselves then there these
they this those through to too under until up upon very was we were what
when where which while who whom whose why will with would you your yours
yourself yourselves
""".split())

_NUMERAL_RE = re.compile(r"^\d+([.,]\d+)*$")
_WORD_RE = re.compile(r"\w")

# Suffix rules tried in order; first rule whose stem keeps >= 3 chars wins.
_SUFFIX_RULES = (("ies", "y"), ("sses", "ss"), ("es", ""), ("s", ""), ("ing", ""), ("ed", ""))
_NO_UNDOUBLE = frozenset("lsz")


@dataclass
class KeywordConfig:
    # pos_filter is honored by analyzers that tag POS; the shipped
    # rule-based analyzer approximates it with the stopword lexicon.
    pos_filter: frozenset[str] = frozenset({"NOUN", "PROPN", "ADJ", "VERB"})
    l_min: int = 3
    stopwords: frozenset[str] = CLOSED_CLASS_WORDS

    def __post_init__(self):
        if self.l_min < 1:
            raise ValidationError("l_min must be >= 1")


class TextAnalyzer(Protocol):
    def keywords(self, text: str, cfg: KeywordConfig) -> set[str]: ...


def lemmatize(token: str) -> str:
    """Suffix-rule lemmatizer over lowercased tokens.

    Strips -ies/-sses/-es/-s/-ing/-ed, undoubling a trailing doubled
    consonant (except l/s/z) after -ing/-ed. Stems shorter than three
    characters are rejected and the next rule is tried.
    """
    token = token.lower()
    if len(token) <= 3:
        return token
    for suffix, repl in _SUFFIX_RULES:
        if not token.endswith(suffix):
            continue
        stem = token[: len(token) - len(suffix)] + repl
        if suffix in ("ing", "ed") and len(stem) >= 2 and stem[-1] == stem[-2] \
                and stem[-1] not in _NO_UNDOUBLE:
            stem = stem[:-1]
        if len(stem) >= 3:
            return stem
    return token


class RuleBasedAnalyzer:
    """Deterministic keyword analyzer: open-class words, lemmatized.

    Approximates a POS filter by excluding closed-class words, numerals,
    and punctuation; remaining tokens are lowercased and lemmatized.
    """

    def keywords(self, text: str, cfg: KeywordConfig) -> set[str]:
        out = set()
        for token in tokenize(text):
            low = token.lower()
            if not _WORD_RE.search(low):
                continue
            if low in cfg.stopwords or _NUMERAL_RE.match(low):
                continue
            lemma = lemmatize(low)
            if len(lemma) > cfg.l_min:
                out.add(lemma)
        return out


def extract_keywords(
    question: str,
    cfg: KeywordConfig | None = None,
    analyzer: TextAnalyzer | None = None,
) -> set[str]:
    """Lowercased lemma keywords of the question's open-class tokens."""
    cfg = cfg or KeywordConfig()
    analyzer = analyzer or RuleBasedAnalyzer()
    return analyzer.keywords(question, cfg)


@dataclass
class ContextBudget:
    context_length_max: int = 512
    n_max: int | None = None  # None = no count cap beyond the token budget
    r_max: int | None = None
    safety_margin: float = 0.1

    def __post_init__(self):
        if self.context_length_max <= 0:
            raise ValidationError("context_length_max must be > 0")
        if not 0.0 <= self.safety_margin < 1.0:
            raise ValidationError("safety_margin must be in [0, 1)")
        for name, v in (("n_max", self.n_max), ("r_max", self.r_max)):
            if v is not None and v < 0:
                raise ValidationError(f"{name} must be >= 0")

    def usable_tokens(self, template_overhead: int = 0, question_tokens: int = 0) -> int:
        """Tokens left for context once the margin, template, and question are paid."""
        usable = math.floor(self.context_length_max * (1.0 - self.safety_margin))
        usable -= template_overhead + question_tokens
        return max(usable, 0)


def derive_limits(
    budget: ContextBudget,
    stats: dict[str, float],
    template_overhead: int = 0,
    question_tokens: int = 0,
) -> tuple[int, int]:
    """Effective node/relationship caps for the usable token budget.

    The usable budget is split half to nodes and half to relationships,
    divided by the average text token counts from the graph stats, then
    capped by the configured n_max/r_max.
    """
    usable = budget.usable_tokens(template_overhead, question_tokens)

    def cap(configured: int | None, avg_tokens: float) -> int:
        if avg_tokens > 0:
            computed = math.floor(0.5 * usable / avg_tokens)
        else:
            computed = usable  # nothing to average over; token fill still guards
        if configured is not None:
            computed = min(configured, computed)
        return max(computed, 0)

    return (
        cap(budget.n_max, stats.get("avg_node_tokens", 0.0)),
        cap(budget.r_max, stats.get("avg_rel_tokens", 0.0)),
    )


@dataclass
class PromptTemplate:
    text: str

    def __post_init__(self):
        for placeholder in ("{q}", "{c}"):
            if self.text.count(placeholder) != 1:
                raise TemplateError(
                    f"template must contain {placeholder} exactly once"
                )

    @property
    def overhead_tokens(self) -> int:
        return count_tokens(self.text.replace("{q}", "").replace("{c}", ""))


DEFAULT_TEMPLATE = PromptTemplate(
    "Answer the question using only the context.\n"
    "Context:\n{c}\nQuestion: {q}\nAnswer:"
)


def load_template(path: str | Path) -> PromptTemplate:
    with open(path, encoding="utf-8") as fh:
        return PromptTemplate(fh.read())


def render_prompt(question: str, context: str, template: PromptTemplate) -> str:
    """Substitute the question and context into the template, verbatim."""
    return template.text.replace("{q}", question).replace("{c}", context)


@dataclass
class ContextSelection:
    text: str
    node_ids: list[str] = field(default_factory=list)
    rel_ids: list[str] = field(default_factory=list)


def select_context(
    graph: KnowledgeGraph,
    keywords: set[str],
    budget: ContextBudget,
    template_overhead: int = 0,
    question_tokens: int = 0,
) -> ContextSelection:
    """Budgeted context assembly with provenance.

    Selected nodes come first in ranking order, then relationships,
    newline-joined. Items are added greedily and the fill stops at the
    first item that would overflow the usable token budget. The derived
    count caps size the selection, but while any budget remains at
    least one candidate of each kind reaches the token fill, which is
    what actually enforces the budget.
    """
    usable = budget.usable_tokens(template_overhead, question_tokens)
    n_eff, r_eff = derive_limits(budget, graph.stats(), template_overhead, question_tokens)
    if usable > 0:
        n_eff = max(n_eff, 1)
        r_eff = max(r_eff, 1)
    nodes = graph.select_nodes(keywords, n_eff)
    rels = graph.select_relationships(keywords, r_eff)

    selection = ContextSelection(text="")
    lines: list[str] = []
    used = 0
    for kind, item in [("node", n) for n in nodes] + [("rel", r) for r in rels]:
        cost = count_tokens(item.text)
        if used + cost > usable:
            break
        lines.append(item.text)
        used += cost
        (selection.node_ids if kind == "node" else selection.rel_ids).append(item.id)
    selection.text = "\n".join(lines)
    return selection


def build_context(graph: KnowledgeGraph, keywords: set[str], budget: ContextBudget) -> str:
    """Concatenated text of the selected nodes and relationships."""
    return select_context(graph, keywords, budget).text


@dataclass
class Answer:
    text: str
    context_used: str
    nodes_used: list[str]
    rels_used: list[str]
    prompt: str = ""


def answer_question(
    question: str,
    graph: KnowledgeGraph,
    llm: LLMClient,
    cfg: KeywordConfig | None = None,
    budget: ContextBudget | None = None,
    template: PromptTemplate | None = None,
    analyzer: TextAnalyzer | None = None,
) -> Answer:
    """Keyword extraction, graph selection, prompt rendering, generation."""
    cfg = cfg or KeywordConfig()
    budget = budget or ContextBudget()
    template = template or DEFAULT_TEMPLATE
    keywords = extract_keywords(question, cfg, analyzer)
    selection = select_context(
        graph, keywords, budget,
        template_overhead=template.overhead_tokens,
        question_tokens=count_tokens(question),
    )
    prompt = render_prompt(question, selection.text, template)
    try:
        response = llm.generate(ChatRequest(user=prompt))
    except GragError as exc:
        raise GenerationError(f"LLM generation failed: {exc}", prompt=prompt) from exc
    return Answer(
        text=response.text,
        context_used=selection.text,
        nodes_used=selection.node_ids,
        rels_used=selection.rel_ids,
        prompt=prompt,
    )
