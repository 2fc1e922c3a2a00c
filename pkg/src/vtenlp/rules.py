"""Keyword-conjunction rule engine with sentence-level negation override.

A rule lists required patterns that must all match within one sentence and
carries a score of -1, 0 or 1. A positive score is voided (contributes 0)
when any of the rule's negation terms also matches the sentence; negative
and zero scores are never voided. Sentence scores sum to the report score,
and the report is positive when that total exceeds the threshold.

Patterns are case-insensitive substrings; the ``re:`` prefix switches a
pattern to a raw regular expression.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources

from .errors import RulesetLoadError, ValidationError
from .tokenizer import split_sentences

VALID_SCORES = (-1, 0, 1)


def _compile_pattern(raw: str) -> re.Pattern:
    body = raw[3:] if raw.startswith("re:") else re.escape(raw)
    return re.compile(body, re.IGNORECASE)


@dataclass
class Rule:
    required_terms: tuple[str, ...]
    score: int
    negation_terms: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.required_terms:
            raise ValidationError("a rule needs at least one required term")
        if self.score not in VALID_SCORES:
            raise ValidationError(f"rule score must be one of {VALID_SCORES}, got {self.score}")
        self._required = [_compile_pattern(term) for term in self.required_terms]
        self._negations = [_compile_pattern(term) for term in self.negation_terms]


@dataclass
class RuleSet:
    name: str
    rules: tuple[Rule, ...]
    threshold: int = 0

    def __post_init__(self):
        if not self.rules:
            raise ValidationError("a ruleset needs at least one rule")


@dataclass
class RuleVerdict:
    report_score: int
    sentence_scores: list[int]
    positive: bool
    matched_spans: list[list[tuple[int, str]]]


def score_sentence(sentence: str, ruleset: RuleSet):
    """Sentence score plus the (rule index, matched text) spans that scored.

    Each rule contributes at most once per sentence; a voided positive rule
    contributes nothing and records no spans.
    """
    total = 0
    spans: list[tuple[int, str]] = []
    for index, rule in enumerate(ruleset.rules):
        matches = []
        for pattern in rule._required:
            found = pattern.search(sentence)
            if found is None:
                matches = None
                break
            matches.append(found.group(0))
        if matches is None:
            continue
        if rule.score > 0 and any(p.search(sentence) for p in rule._negations):
            continue
        total += rule.score
        spans.extend((index, text) for text in matches)
    return total, spans


def score_report(text: str, ruleset: RuleSet) -> RuleVerdict:
    """Split into sentences, score each, sum; positive iff above threshold."""
    sentence_scores: list[int] = []
    matched: list[list[tuple[int, str]]] = []
    for sentence in split_sentences(text):
        score, spans = score_sentence(sentence, ruleset)
        sentence_scores.append(score)
        matched.append(spans)
    report_score = sum(sentence_scores)
    return RuleVerdict(
        report_score=report_score,
        sentence_scores=sentence_scores,
        positive=report_score > ruleset.threshold,
        matched_spans=matched,
    )


def parse_ruleset(content: str, name: str = "ruleset") -> RuleSet:
    """Parse the rule file format.

    One rule per line: ``required: a & b; score: 1; negations: no|without``.
    Optional ``name:`` and ``threshold:`` directive lines; ``#`` comments and
    blank lines are skipped.
    """
    rules: list[Rule] = []
    threshold = 0
    for line in content.splitlines():
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if ";" not in stripped:
            key, _, value = stripped.partition(":")
            key = key.strip().lower()
            if key == "name":
                name = value.strip()
                continue
            if key == "threshold":
                try:
                    threshold = int(value.strip())
                except ValueError:
                    raise RulesetLoadError(f"bad threshold value: {value.strip()!r}") from None
                continue
            raise RulesetLoadError(f"unrecognized line: {stripped!r}")
        fields: dict[str, str] = {}
        for part in stripped.split(";"):
            if not part.strip():
                continue
            key, sep, value = part.partition(":")
            if not sep:
                raise RulesetLoadError(f"rule {len(rules) + 1}: bad field {part.strip()!r}")
            fields[key.strip().lower()] = value.strip()
        if "required" not in fields or "score" not in fields:
            raise RulesetLoadError(f"rule {len(rules) + 1}: needs 'required' and 'score'")
        required = tuple(t.strip() for t in fields["required"].split("&") if t.strip())
        negations = tuple(
            t.strip() for t in fields.get("negations", "").split("|") if t.strip()
        )
        try:
            score = int(fields["score"])
        except ValueError:
            raise RulesetLoadError(
                f"rule {len(rules) + 1}: score must be an integer, got {fields['score']!r}"
            ) from None
        try:
            rules.append(Rule(required_terms=required, score=score, negation_terms=negations))
        except re.error as exc:
            raise RulesetLoadError(f"rule {len(rules) + 1}: bad pattern ({exc})") from None
    return RuleSet(name=name, rules=tuple(rules), threshold=threshold)


def load_ruleset(path) -> RuleSet:
    with open(path, encoding="utf-8") as handle:
        return parse_ruleset(handle.read(), name=str(path))


def demo_ruleset() -> RuleSet:
    """Demonstration ruleset for PE CT reports shipped with the package."""
    path = resources.files("vtenlp.data").joinpath("pe_demo.rules")
    return parse_ruleset(path.read_text(encoding="utf-8"), name="pe-demo")
