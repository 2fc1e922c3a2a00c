"""End-to-end run orchestration with a reproducible manifest.

Stages run in order: corpus, split, augment (train split only), tokenize,
embed, train, evaluate, then rules and hybrid for binary rule-enabled runs.
The manifest records the resolved configuration, a hash of it (independent
of the output directory), per-stage input/output ids, and every file
written, so leakage checks and reruns are mechanical.
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .augment import AugmentConfig, SynonymLexicon, augment_corpus, default_lexicon
from .classifier import (
    ClassifierSpec,
    TrainConfig,
    load_model,
    predict_batch,
    save_model,
    train,
)
from .corpus import (
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
from .embed import EmbeddingProviderSpec, make_provider
from .errors import ConfigError, PipelineError, VtenlpError
from .figures import save_history_figure, save_roc_figure
from .hybrid import HybridConfig, combine
from .metrics import (
    attach_roc,
    compute_metrics,
    render_table,
    write_auc_csv,
    write_metrics_csv,
    write_roc_csv,
)
from .rules import RuleSet, demo_ruleset, load_ruleset, score_report
from .seeding import derive_seed
from .tokenizer import TokenizerConfig, get_preset, tokenize

BUILTIN_RULESET = "builtin:pe-demo"
CORE_STAGES = ("corpus", "split", "augment", "tokenize", "embed", "train", "evaluate")
RULE_STAGES = ("rules", "hybrid")

_DATASET_DEFAULTS = {
    "pe": {"class_proportions": (0.88, 0.12), "n_reports": 300},
    "dvt": {"class_proportions": (0.78, 0.11, 0.11), "n_reports": 300},
}


@dataclass
class RunConfig:
    dataset: dict
    scheme: LabelScheme
    split: SplitSpec
    tokenizer: TokenizerConfig
    augment: AugmentConfig | None
    lexicon_path: str | None
    embedding: EmbeddingProviderSpec
    classifier: ClassifierSpec
    train: TrainConfig
    ruleset: str | None
    hybrid: HybridConfig
    output_dir: str
    seed: int
    figures: bool
    raw: dict

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        with open(path, encoding="utf-8") as handle:
            return cls.from_dict(json.load(handle))

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        try:
            return cls._build(dict(data))
        except VtenlpError as exc:
            raise ConfigError(str(exc)) from exc
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad run configuration: {exc}") from exc

    @classmethod
    def _build(cls, data: dict) -> "RunConfig":
        seed = int(data.get("seed", 0))
        output_dir = str(data.get("output_dir", "out"))
        figures = bool(data.get("figures", True))

        dataset = dict(data.get("dataset") or {"preset": "pe"})
        preset = dataset.get("preset")
        if preset is not None:
            if preset not in _DATASET_DEFAULTS:
                raise ConfigError(f"unknown dataset preset: {preset!r}")
            scheme = get_scheme(preset)
            defaults = _DATASET_DEFAULTS[preset]
            dataset.setdefault("n_reports", defaults["n_reports"])
            dataset.setdefault("class_proportions", list(defaults["class_proportions"]))
            dataset.setdefault("mean_length_tokens", 80)
            dataset.setdefault("negation_rate", 0.7)
            dataset.setdefault("seed", derive_seed(seed, "corpus"))
        else:
            if "path" not in dataset:
                raise ConfigError("dataset needs either a preset or a path")
            scheme = get_scheme(dataset.get("scheme", "pe"))

        split_cfg = dict(data.get("split") or {})
        split = SplitSpec(
            test_fraction=float(split_cfg.get("test_fraction", 0.2)),
            validation_fraction_of_train=float(
                split_cfg.get("validation_fraction_of_train", 0.1)
            ),
            seed=int(split_cfg.get("seed", derive_seed(seed, "split"))),
            stratified=bool(split_cfg.get("stratified", True)),
        )

        tok_cfg = dict(data.get("tokenizer") or {"preset": scheme.name})
        if "preset" in tok_cfg:
            base = get_preset(tok_cfg["preset"])
            tokenizer = TokenizerConfig(
                max_len=int(tok_cfg.get("max_len", base.max_len)),
                truncate_side=tok_cfg.get("truncate_side", base.truncate_side),
                lowercase=bool(tok_cfg.get("lowercase", base.lowercase)),
            )
        else:
            tokenizer = TokenizerConfig(
                max_len=int(tok_cfg["max_len"]),
                truncate_side=tok_cfg.get("truncate_side", "right"),
                lowercase=bool(tok_cfg.get("lowercase", True)),
            )

        aug_cfg = data.get("augment")
        lexicon_path = None
        augment = None
        if aug_cfg:
            aug_cfg = dict(aug_cfg)
            lexicon_path = aug_cfg.pop("lexicon", None)
            aug_max = aug_cfg.get("aug_max")
            augment = AugmentConfig(
                mode=aug_cfg.get("mode", "synonym_replacement"),
                p_replace=float(aug_cfg.get("p_replace", 0.8)),
                p_swap=float(aug_cfg.get("p_swap", 0.2)),
                aug_min=int(aug_cfg.get("aug_min", 30)),
                aug_max=int(aug_max) if aug_max is not None else None,
                n=int(aug_cfg.get("n", 0)),
                seed=int(aug_cfg.get("seed", derive_seed(seed, "augment"))),
            )

        emb_cfg = dict(data.get("embedding") or {"kind": "hashed"})
        embedding = EmbeddingProviderSpec(
            kind=emb_cfg.get("kind", "hashed"),
            dim=int(emb_cfg.get("dim", 768)),
            seed=int(emb_cfg.get("seed", derive_seed(seed, "embed"))),
            path=emb_cfg.get("path"),
        )

        clf_cfg = dict(data.get("classifier") or {"kind": "bilstm"})
        classifier = ClassifierSpec(
            kind=clf_cfg.get("kind", "bilstm"),
            input_dim=int(clf_cfg.get("input_dim", embedding.dim)),
            hidden_size=int(clf_cfg.get("hidden_size", 256)),
            num_layers=int(clf_cfg.get("num_layers", 2)),
            num_classes=int(clf_cfg.get("num_classes", scheme.num_classes)),
        )

        train_cfg = dict(data.get("train") or {})
        train_config = TrainConfig(
            learning_rate=float(train_cfg.get("learning_rate", 0.1)),
            epochs=int(train_cfg.get("epochs", 5)),
            batch_size=int(train_cfg.get("batch_size", 32)),
            seed=int(train_cfg.get("seed", derive_seed(seed, "train"))),
            early_stop_patience=int(train_cfg.get("early_stop_patience", 0)),
        )

        ruleset = data.get("ruleset")
        if scheme.name == "pe" and preset is not None and ruleset is None:
            ruleset = BUILTIN_RULESET
        if ruleset is not None and scheme.num_classes != 2:
            raise ConfigError(
                "rule scoring and hybrid combination apply only to the binary task; "
                f"scheme '{scheme.name}' has {scheme.num_classes} classes"
            )

        hyb_cfg = dict(data.get("hybrid") or {})
        hybrid = HybridConfig(
            negative_confidence_cutoff=float(hyb_cfg.get("negative_confidence_cutoff", 0.95)),
            rule_score_cutoff=int(hyb_cfg.get("rule_score_cutoff", 2)),
            negative_class=int(hyb_cfg.get("negative_class", 0)),
        )

        if classifier.input_dim != embedding.dim:
            raise ConfigError(
                f"classifier input_dim {classifier.input_dim} != embedding dim {embedding.dim}"
            )
        if classifier.num_classes != scheme.num_classes:
            raise ConfigError(
                f"classifier num_classes {classifier.num_classes} != "
                f"scheme classes {scheme.num_classes}"
            )

        raw = {
            "dataset": dataset,
            "scheme": scheme.name,
            "split": asdict(split),
            "tokenizer": asdict(tokenizer),
            "augment": (asdict(augment) | {"lexicon": lexicon_path}) if augment else None,
            "embedding": asdict(embedding),
            "classifier": asdict(classifier),
            "train": asdict(train_config),
            "ruleset": ruleset,
            "hybrid": asdict(hybrid),
            "output_dir": output_dir,
            "seed": seed,
            "figures": figures,
        }
        return cls(
            dataset=dataset,
            scheme=scheme,
            split=split,
            tokenizer=tokenizer,
            augment=augment,
            lexicon_path=lexicon_path,
            embedding=embedding,
            classifier=classifier,
            train=train_config,
            ruleset=ruleset,
            hybrid=hybrid,
            output_dir=output_dir,
            seed=seed,
            figures=figures,
            raw=raw,
        )

    @property
    def rules_enabled(self) -> bool:
        return self.ruleset is not None

    def stage_plan(self) -> list[str]:
        stages = list(CORE_STAGES)
        if self.rules_enabled:
            stages.extend(RULE_STAGES)
        return stages

    def config_hash(self) -> str:
        hashable = {k: v for k, v in self.raw.items() if k != "output_dir"}
        canonical = json.dumps(hashable, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _load_lexicon(path: str | None) -> SynonymLexicon:
    if path:
        return SynonymLexicon.from_tsv(path)
    return default_lexicon()


def _resolve_ruleset(name: str) -> RuleSet:
    if name == BUILTIN_RULESET:
        return demo_ruleset()
    return load_ruleset(name)


class _Run:
    """Mutable state threaded through the pipeline stages."""

    def __init__(self, config: RunConfig):
        self.config = config
        self.outdir = Path(config.output_dir)
        self.reports: list[Report] = []
        self.train_reports: list[Report] = []
        self.val_reports: list[Report] = []
        self.test_reports: list[Report] = []
        self.augmented: list[Report] = []
        self.sequences = {}
        self.embedded = {}
        self.model_path: Path | None = None
        self.history: list[dict] = []
        self.test_probs = None
        self.test_preds = None
        self.metric_rows: list[tuple] = []
        self.verdicts = {}

    def path(self, name: str) -> Path:
        return self.outdir / name


def _stage_corpus(run: _Run, record: dict):
    config = run.config
    if "path" in config.dataset and config.dataset.get("preset") is None:
        run.reports = load_corpus(config.dataset["path"], config.scheme)
        source = str(config.dataset["path"])
    else:
        spec = SynthSpec(
            n_reports=int(config.dataset["n_reports"]),
            class_proportions=tuple(config.dataset["class_proportions"]),
            mean_length_tokens=int(config.dataset["mean_length_tokens"]),
            negation_rate=float(config.dataset["negation_rate"]),
            seed=int(config.dataset["seed"]),
        )
        run.reports = generate_synthetic(spec, config.scheme)
        source = f"synthetic:{config.scheme.name}"
    path = run.path("corpus.jsonl")
    save_corpus(run.reports, path)
    record["outputs"].append(path.name)
    record["details"] = {"source": source, "n_reports": len(run.reports)}


def _stage_split(run: _Run, record: dict):
    run.reports = split_corpus(run.reports, run.config.split)
    run.train_reports = [r for r in run.reports if r.split == "train"]
    run.val_reports = [r for r in run.reports if r.split == "validation"]
    run.test_reports = [r for r in run.reports if r.split == "test"]
    path = run.path("corpus_split.jsonl")
    save_corpus(run.reports, path)
    record["outputs"].append(path.name)
    record["details"] = {
        "train_ids": [r.id for r in run.train_reports],
        "validation_ids": [r.id for r in run.val_reports],
        "test_ids": [r.id for r in run.test_reports],
        "counts": {
            "train": len(run.train_reports),
            "validation": len(run.val_reports),
            "test": len(run.test_reports),
        },
    }


def _stage_augment(run: _Run, record: dict):
    config = run.config
    if config.augment is None or config.augment.n == 0:
        record["details"] = {"n_added": 0, "added_ids": [], "source_ids": []}
        return
    lexicon = _load_lexicon(config.lexicon_path)
    run.augmented = augment_corpus(
        run.train_reports, config.scheme, config.augment, lexicon
    )
    path = run.path("augmented.jsonl")
    save_corpus(run.augmented, path)
    record["outputs"].append(path.name)
    record["details"] = {
        "n_added": len(run.augmented),
        "added_ids": [r.id for r in run.augmented],
        "source_ids": sorted({r.id.split("::", 1)[0] for r in run.augmented}),
    }


def _stage_tokenize(run: _Run, record: dict):
    config = run.config
    for report in run.reports + run.augmented:
        seq = tokenize(report.text, config.tokenizer)
        seq.source_id = report.id
        run.sequences[report.id] = seq
    record["details"] = {
        "n_sequences": len(run.sequences),
        "max_len": config.tokenizer.max_len,
        "truncate_side": config.tokenizer.truncate_side,
    }


def _stage_embed(run: _Run, record: dict):
    provider = make_provider(run.config.embedding)
    for rid, seq in run.sequences.items():
        run.embedded[rid] = provider.embed(seq)
    record["details"] = {
        "kind": run.config.embedding.kind,
        "dim": run.config.embedding.dim,
        "n_embedded": len(run.embedded),
    }


def _stage_train(run: _Run, record: dict):
    config = run.config
    train_pool = run.train_reports + run.augmented
    train_pairs = [(run.embedded[r.id], r.label) for r in train_pool]
    val_pairs = [(run.embedded[r.id], r.label) for r in run.val_reports]
    params, history = train(config.classifier, train_pairs, val_pairs, config.train)
    run.history = history

    meta = {
        "scheme": config.scheme.name,
        "tokenizer": asdict(config.tokenizer),
        "embedding": asdict(config.embedding),
        "config_hash": run.config.config_hash(),
    }
    run.model_path = run.path("model.bin")
    save_model(run.model_path, params, meta)
    record["outputs"].append(run.model_path.name)

    history_path = run.path("history.csv")
    with open(history_path, "w", encoding="utf-8") as handle:
        handle.write("epoch,train_loss,val_accuracy,val_weighted_f1\n")
        for row in history:
            handle.write(
                f"{row['epoch']},{row['train_loss']!r},"
                f"{row['val_accuracy']!r},{row['val_weighted_f1']!r}\n"
            )
    record["outputs"].append(history_path.name)
    if config.figures:
        fig_path = run.path("history.png")
        save_history_figure(history, fig_path)
        record["outputs"].append(fig_path.name)
    record["details"] = {
        "epochs_run": len(history),
        "input_ids": [r.id for r in train_pool] + [r.id for r in run.val_reports],
        "best_val_weighted_f1": max(h["val_weighted_f1"] for h in history),
    }


def _stage_evaluate(run: _Run, record: dict):
    config = run.config
    params, _ = load_model(run.model_path)
    test_embs = [run.embedded[r.id] for r in run.test_reports]
    run.test_probs = predict_batch(params, test_embs)
    run.test_preds = [int(p) for p in np.argmax(run.test_probs, axis=1)]
    truths = [r.label for r in run.test_reports]

    report = compute_metrics(truths, run.test_preds, config.scheme)
    attach_roc(report, truths, run.test_probs, config.scheme)
    run.metric_rows.append(("dl", report))

    pred_path = run.path("predictions.jsonl")
    with open(pred_path, "w", encoding="utf-8") as handle:
        for r, probs, pred in zip(run.test_reports, run.test_probs, run.test_preds):
            handle.write(
                json.dumps(
                    {
                        "id": r.id,
                        "truth": r.label,
                        "probabilities": [float(p) for p in probs],
                        "predicted": pred,
                    }
                )
                + "\n"
            )
    record["outputs"].append(pred_path.name)

    write_metrics_csv(run.metric_rows, run.path("metrics.csv"))
    write_roc_csv(report, run.path("roc_points.csv"))
    write_auc_csv(report, run.path("auc.csv"))
    record["outputs"].extend(["metrics.csv", "roc_points.csv", "auc.csv"])
    if config.figures:
        names = {cid: name for cid, name in config.scheme.classes}
        save_roc_figure(report, names, run.path("roc.png"), title="Test-set ROC")
        record["outputs"].append("roc.png")
    record["details"] = {
        "n_test": len(run.test_reports),
        "test_ids": [r.id for r in run.test_reports],
        "accuracy": report.accuracy,
        "weighted_f1": report.weighted_f1,
        "specificity": report.specificity,
    }


def _stage_rules(run: _Run, record: dict):
    config = run.config
    ruleset = _resolve_ruleset(config.ruleset)
    positive_class = 1 - config.hybrid.negative_class
    path = run.path("verdicts.jsonl")
    rule_preds = []
    with open(path, "w", encoding="utf-8") as handle:
        for report in run.test_reports:
            verdict = score_report(report.text, ruleset)
            run.verdicts[report.id] = verdict
            rule_preds.append(positive_class if verdict.positive else config.hybrid.negative_class)
            handle.write(
                json.dumps(
                    {
                        "id": report.id,
                        "report_score": verdict.report_score,
                        "positive": verdict.positive,
                        "sentence_scores": verdict.sentence_scores,
                    }
                )
                + "\n"
            )
    record["outputs"].append(path.name)

    truths = [r.label for r in run.test_reports]
    rule_report = compute_metrics(truths, rule_preds, config.scheme)
    run.metric_rows.append(("rule", rule_report))
    write_metrics_csv(run.metric_rows, run.path("metrics.csv"))
    record["details"] = {
        "ruleset": ruleset.name,
        "n_positive": sum(1 for v in run.verdicts.values() if v.positive),
        "accuracy": rule_report.accuracy,
    }


def _stage_hybrid(run: _Run, record: dict):
    config = run.config
    from .classifier import Prediction

    decisions = []
    final = []
    path = run.path("hybrid.jsonl")
    with open(path, "w", encoding="utf-8") as handle:
        for report, probs, pred in zip(run.test_reports, run.test_probs, run.test_preds):
            dl = Prediction(probabilities=probs, predicted_class=pred)
            decision = combine(dl, run.verdicts[report.id], config.hybrid)
            decisions.append(decision)
            final.append(decision.final_class)
            handle.write(
                json.dumps(
                    {
                        "id": report.id,
                        "dl_probs": [float(p) for p in probs],
                        "rule_score": decision.rule_verdict.report_score,
                        "final": decision.final_class,
                        "source": decision.source,
                    }
                )
                + "\n"
            )
    record["outputs"].append(path.name)

    truths = [r.label for r in run.test_reports]
    hybrid_report = compute_metrics(truths, final, config.scheme)
    run.metric_rows.append(("hybrid", hybrid_report))
    write_metrics_csv(run.metric_rows, run.path("metrics.csv"))
    table_path = run.path("comparison.txt")
    table_path.write_text(render_table(run.metric_rows) + "\n", encoding="utf-8")
    record["outputs"].append(table_path.name)

    by_source: dict[str, int] = {}
    for decision in decisions:
        by_source[decision.source] = by_source.get(decision.source, 0) + 1
    record["details"] = {
        "sources": by_source,
        "accuracy": hybrid_report.accuracy,
        "specificity": hybrid_report.specificity,
    }


_STAGE_FUNCS = {
    "corpus": _stage_corpus,
    "split": _stage_split,
    "augment": _stage_augment,
    "tokenize": _stage_tokenize,
    "embed": _stage_embed,
    "train": _stage_train,
    "evaluate": _stage_evaluate,
    "rules": _stage_rules,
    "hybrid": _stage_hybrid,
}


def run_pipeline(config: RunConfig, dry_run: bool = False) -> dict:
    """Execute the configured run; returns (and writes) the manifest."""
    plan = config.stage_plan()
    manifest = {
        "status": "dry_run" if dry_run else "running",
        "config": config.raw,
        "config_hash": config.config_hash(),
        "seed": config.seed,
        "versions": {
            "vtenlp": __version__,
            "python": sys.version.split()[0],
            "numpy": np.__version__,
        },
        "started_at": _now(),
        "finished_at": None,
        "stages": [
            {"name": name, "status": "planned", "details": {}, "outputs": []}
            for name in plan
        ],
        "outputs": [],
    }
    if dry_run:
        manifest["finished_at"] = _now()
        return manifest

    run = _Run(config)
    run.outdir.mkdir(parents=True, exist_ok=True)
    lock_path = run.outdir / ".lock"
    try:
        lock_fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise PipelineError(
            "lock", f"output directory {run.outdir} is in use (stale {lock_path.name}?)"
        ) from None
    os.close(lock_fd)

    failed_stage = None
    failure = None
    try:
        for record in manifest["stages"]:
            if failed_stage is not None:
                record["status"] = "not_run"
                continue
            try:
                _STAGE_FUNCS[record["name"]](run, record)
                record["status"] = "completed"
                manifest["outputs"].extend(record["outputs"])
            except VtenlpError as exc:
                record["status"] = "failed"
                record["details"] = {"error": str(exc)}
                failed_stage = record["name"]
                failure = exc
        manifest["status"] = "completed" if failed_stage is None else "incomplete"
        manifest["finished_at"] = _now()
        manifest_path = run.path("manifest.json")
        with open(manifest_path, "w", encoding="utf-8") as handle:
            json.dump(manifest, handle, indent=2, sort_keys=True)
            handle.write("\n")
        manifest["outputs"].append(manifest_path.name)
    finally:
        os.unlink(lock_path)

    if failed_stage is not None:
        raise PipelineError(failed_stage, str(failure))
    return manifest
