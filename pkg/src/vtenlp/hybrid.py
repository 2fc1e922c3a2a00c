"""Combine trained-model predictions with rule verdicts for the binary task.

The rule engine wins whenever it flags a positive that the model called
negative, except when the model is highly confident (negative probability
strictly above the cutoff) and the rule evidence is weak (report score
strictly below the score cutoff). Probability exactly at the cutoff still
overrides; a score exactly at the cutoff still overrides.
"""

from __future__ import annotations

from dataclasses import dataclass

from .classifier import Prediction
from .errors import ValidationError
from .rules import RuleVerdict

SOURCE_DL = "dl"
SOURCE_RULE_OVERRIDE = "rule_override"
SOURCE_DL_CONFIDENT = "dl_confident_exception"


@dataclass(frozen=True)
class HybridConfig:
    negative_confidence_cutoff: float = 0.95
    rule_score_cutoff: int = 2
    negative_class: int = 0

    def __post_init__(self):
        if not 0.0 < self.negative_confidence_cutoff < 1.0:
            raise ValidationError("negative_confidence_cutoff must be in (0, 1)")
        if self.negative_class not in (0, 1):
            raise ValidationError("negative_class must be 0 or 1 for the binary task")


@dataclass
class HybridDecision:
    final_class: int
    source: str
    dl_prediction: Prediction
    rule_verdict: RuleVerdict


def combine(dl: Prediction, rule: RuleVerdict, config: HybridConfig) -> HybridDecision:
    """Resolve one report's final class from model and rule outputs."""
    if len(dl.probabilities) != 2:
        raise ValidationError(
            f"hybrid combination is defined for 2 classes, got {len(dl.probabilities)}"
        )
    negative = config.negative_class
    positive = 1 - negative
    if dl.predicted_class == negative and rule.positive:
        p_negative = float(dl.probabilities[negative])
        if (
            p_negative > config.negative_confidence_cutoff
            and rule.report_score < config.rule_score_cutoff
        ):
            return HybridDecision(negative, SOURCE_DL_CONFIDENT, dl, rule)
        return HybridDecision(positive, SOURCE_RULE_OVERRIDE, dl, rule)
    return HybridDecision(int(dl.predicted_class), SOURCE_DL, dl, rule)
