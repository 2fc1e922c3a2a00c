"""Adaptive selection among candidate (embedding, classifier) pipelines.

Every candidate is trained on the train split and evaluated per metric on
the validation split; the winner maximizes the unweighted metric sum (ties
go to the earlier candidate). Only the winner is ever evaluated on the test
split, so test metrics cannot influence selection. A diverging candidate is
marked failed with a -inf total instead of aborting the sweep.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .classifier import ClassifierSpec, ModelParams, TrainConfig, predict_batch, train
from .corpus import LabelScheme, Report
from .embed import EmbeddingProviderSpec, make_provider
from .errors import SelectionError, TrainingError, ValidationError
from .metrics import MetricsReport, attach_roc, compute_metrics
from .tokenizer import TokenizerConfig, TokenSeq, tokenize

METRIC_NAMES = (
    "accuracy",
    "sensitivity",
    "specificity",
    "weighted_precision",
    "weighted_recall",
    "weighted_f1",
)


@dataclass(frozen=True)
class MetricSuite:
    metrics: tuple[str, ...]
    weights: tuple[float, ...] | None = None  # all-ones when absent

    def __post_init__(self):
        if not self.metrics:
            raise ValidationError("metric suite must not be empty")
        if len(set(self.metrics)) != len(self.metrics):
            raise ValidationError("metric suite must not contain duplicates")
        unknown = [m for m in self.metrics if m not in METRIC_NAMES]
        if unknown:
            raise ValidationError(f"unknown metrics: {unknown} (choose from {METRIC_NAMES})")
        if self.weights is not None and len(self.weights) != len(self.metrics):
            raise ValidationError("weights must match the metric list length")

    def total(self, values: dict[str, float]) -> float:
        weights = self.weights or (1.0,) * len(self.metrics)
        return float(sum(w * values[m] for w, m in zip(weights, self.metrics)))


@dataclass
class Candidate:
    id: str
    embedding: EmbeddingProviderSpec
    classifier: ClassifierSpec
    train_config: TrainConfig


@dataclass
class CandidateOutcome:
    candidate_id: str
    metric_values: dict[str, float] = field(default_factory=dict)
    total: float = -math.inf
    failed: bool = False
    error: str | None = None


@dataclass
class SelectionResult:
    winner: str
    outcomes: list[CandidateOutcome]
    winner_test_metrics: MetricsReport
    winner_params: ModelParams


def _split_reports(reports: list[Report]):
    buckets = {"train": [], "validation": [], "test": []}
    for report in reports:
        if report.split not in buckets:
            raise ValidationError(f"report {report.id!r} has no split assigned")
        buckets[report.split].append(report)
    for name, bucket in buckets.items():
        if not bucket:
            raise ValidationError(f"the {name} split is empty")
    return buckets["train"], buckets["validation"], buckets["test"]


def _tokenize_all(reports: list[Report], config: TokenizerConfig) -> list[TokenSeq]:
    seqs = []
    for report in reports:
        seq = tokenize(report.text, config)
        seq.source_id = report.id
        seqs.append(seq)
    return seqs


def _embed_pairs(seqs, reports, provider):
    return [(provider.embed(seq), report.label) for seq, report in zip(seqs, reports)]


def select_best(outcomes: list[CandidateOutcome]) -> int:
    """Index of the highest total; earlier candidate wins exact ties."""
    best_index = -1
    best_total = -math.inf
    for index, outcome in enumerate(outcomes):
        if not outcome.failed and outcome.total > best_total:
            best_total = outcome.total
            best_index = index
    if best_index < 0:
        raise SelectionError("every candidate failed; nothing to select")
    return best_index


def run_selection(
    candidates: list[Candidate],
    reports: list[Report],
    scheme: LabelScheme,
    tokenizer_config: TokenizerConfig,
    suite: MetricSuite,
) -> SelectionResult:
    """Train each candidate, score on validation, evaluate the winner on test."""
    if not candidates:
        raise ValidationError("need at least one candidate")
    ids = [c.id for c in candidates]
    if len(set(ids)) != len(ids):
        raise ValidationError("candidate ids must be unique")
    train_reports, val_reports, test_reports = _split_reports(reports)
    train_seqs = _tokenize_all(train_reports, tokenizer_config)
    val_seqs = _tokenize_all(val_reports, tokenizer_config)
    test_seqs = _tokenize_all(test_reports, tokenizer_config)

    outcomes: list[CandidateOutcome] = []
    trained: dict[str, tuple[ModelParams, object]] = {}
    for candidate in candidates:
        outcome = CandidateOutcome(candidate_id=candidate.id)
        provider = make_provider(candidate.embedding)
        try:
            val_pairs = _embed_pairs(val_seqs, val_reports, provider)
            params, _ = train(
                candidate.classifier,
                _embed_pairs(train_seqs, train_reports, provider),
                val_pairs,
                candidate.train_config,
            )
            val_probs = predict_batch(params, [emb for emb, _ in val_pairs])
            val_preds = list(np.argmax(val_probs, axis=1))
            report = compute_metrics([r.label for r in val_reports], val_preds, scheme)
            outcome.metric_values = {m: getattr(report, m) for m in suite.metrics}
            outcome.total = suite.total(outcome.metric_values)
            trained[candidate.id] = (params, provider)
        except TrainingError as exc:
            outcome.failed = True
            outcome.error = str(exc)
        outcomes.append(outcome)

    winner_index = select_best(outcomes)
    winner = candidates[winner_index]
    params, provider = trained[winner.id]
    test_probs = predict_batch(
        params, [provider.embed(seq) for seq in test_seqs]
    )
    test_preds = list(np.argmax(test_probs, axis=1))
    test_truths = [r.label for r in test_reports]
    test_metrics = compute_metrics(test_truths, test_preds, scheme)
    attach_roc(test_metrics, test_truths, test_probs, scheme)
    return SelectionResult(
        winner=winner.id,
        outcomes=outcomes,
        winner_test_metrics=test_metrics,
        winner_params=params,
    )


def render_leaderboard(result: SelectionResult, suite: MetricSuite) -> str:
    """Human-readable standings: one row per candidate, winner starred."""
    headers = ["candidate"] + list(suite.metrics) + ["sum"]
    rows = []
    for outcome in result.outcomes:
        if outcome.failed:
            rows.append([outcome.candidate_id, *(["failed"] * len(suite.metrics)), "-inf"])
            continue
        rows.append(
            [outcome.candidate_id]
            + [f"{outcome.metric_values[m]:.4f}" for m in suite.metrics]
            + [f"{outcome.total:.4f}"]
        )
    widths = [
        max(len(headers[i]), max((len(row[i]) for row in rows), default=0)) + 2
        for i in range(len(headers))
    ]
    lines = ["".join(h.ljust(w) for h, w in zip(headers, widths))]
    for outcome, row in zip(result.outcomes, rows):
        marker = "* " if outcome.candidate_id == result.winner else "  "
        lines.append(marker + "".join(cell.ljust(w) for cell, w in zip(row, widths)))
    return "\n".join(lines)
