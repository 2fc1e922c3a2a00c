"""Radiology-report classification pipeline.

Building blocks: synthetic corpora and deterministic splits, minority-class
text augmentation, pluggable token embeddings, from-scratch recurrent
classifiers with verified gradients, a rule-based scorer with negation
override, a model+rule hybrid combiner, metric/ROC reporting, and an
adaptive candidate-selection sweep. Everything is seed-deterministic.
"""

__version__ = "0.1.0"

from .augment import AugmentConfig, SynonymLexicon, augment_corpus, default_lexicon
from .apms import Candidate, MetricSuite, SelectionResult, run_selection
from .classifier import (
    ClassifierSpec,
    ModelParams,
    Prediction,
    TrainConfig,
    forward,
    gradient,
    load_model,
    loss,
    save_model,
    train,
)
from .corpus import (
    DVT_SCHEME,
    PE_SCHEME,
    LabelScheme,
    Report,
    SplitSpec,
    SynthSpec,
    generate_synthetic,
    get_scheme,
    load_corpus,
    save_corpus,
    split_corpus,
)
from .embed import (
    EmbeddingMatrix,
    EmbeddingProviderSpec,
    embed_sequence,
    make_provider,
    read_embeddings,
    write_embeddings,
)
from .hybrid import HybridConfig, HybridDecision, combine
from .metrics import (
    ConfusionMatrix,
    MetricsReport,
    compute_metrics,
    render_table,
    roc_curve,
)
from .pipeline import RunConfig, run_pipeline
from .rules import Rule, RuleSet, RuleVerdict, demo_ruleset, load_ruleset, score_report
from .tokenizer import TokenizerConfig, TokenSeq, get_preset, split_sentences, tokenize
