"""Command-line interface exposing every pipeline stage plus full runs.

Subcommands: corpus gen|split, augment, tokenize, embed, train, evaluate,
rules score, hybrid predict, apms run, pipeline run. Exit code 0 on
success; errors print stage-tagged diagnostics and exit nonzero. The
VTENLP_OUTPUT_ROOT environment variable sets the default output root.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .apms import Candidate, MetricSuite, render_leaderboard, run_selection
from .augment import AugmentConfig, SynonymLexicon, augment_corpus, default_lexicon
from .classifier import (
    ClassifierSpec,
    Prediction,
    TrainConfig,
    load_model,
    predict_batch,
    save_model,
    train,
)
from .corpus import (
    SplitSpec,
    SynthSpec,
    generate_synthetic,
    get_scheme,
    load_corpus,
    save_corpus,
    split_corpus,
)
from .embed import EmbeddingProviderSpec, make_provider, write_embeddings
from .errors import ConfigError, PipelineError, VtenlpError
from .figures import save_roc_figure
from .hybrid import HybridConfig, combine
from .metrics import (
    attach_roc,
    compute_metrics,
    render_table,
    write_auc_csv,
    write_metrics_csv,
    write_roc_csv,
)
from .pipeline import BUILTIN_RULESET, RunConfig, run_pipeline
from .rules import demo_ruleset, load_ruleset, score_report
from .tokenizer import TokenizerConfig, get_preset, tokenize

_MODE_ALIASES = {"synonym": "synonym_replacement", "swap": "random_swapping"}


def _output_root() -> Path:
    return Path(os.environ.get("VTENLP_OUTPUT_ROOT", "."))


def _out_dir(args, default_name: str) -> Path:
    out = Path(args.out) if args.out else _output_root() / default_name
    out.mkdir(parents=True, exist_ok=True)
    return out


def _tokenizer_from_args(args) -> TokenizerConfig:
    if getattr(args, "preset", None):
        base = get_preset(args.preset)
        if getattr(args, "max_len", None):
            return TokenizerConfig(
                max_len=args.max_len,
                truncate_side=base.truncate_side,
                lowercase=base.lowercase,
            )
        return base
    return TokenizerConfig(
        max_len=args.max_len or 512,
        truncate_side=getattr(args, "truncate_side", "right") or "right",
    )


def _featurize(reports, tok_config, provider):
    pairs = []
    for report in reports:
        seq = tokenize(report.text, tok_config)
        seq.source_id = report.id
        pairs.append((provider.embed(seq), report.label))
    return pairs


def _resolve_ruleset_arg(name: str):
    if name in (BUILTIN_RULESET, "pe-demo"):
        return demo_ruleset()
    return load_ruleset(name)


def _split_subset(reports, split_name):
    subset = [r for r in reports if r.split == split_name]
    if not subset:
        raise ConfigError(f"corpus has no reports with split '{split_name}'")
    return subset


# --- subcommand handlers -----------------------------------------------------

def _cmd_corpus_gen(args) -> int:
    scheme = get_scheme(args.scheme)
    proportions = (
        tuple(float(p) for p in args.proportions.split(","))
        if args.proportions
        else {"pe": (0.88, 0.12), "dvt": (0.78, 0.11, 0.11)}[args.scheme]
    )
    spec = SynthSpec(
        n_reports=args.n,
        class_proportions=proportions,
        mean_length_tokens=args.mean_len,
        negation_rate=args.negation_rate,
        seed=args.seed,
    )
    reports = generate_synthetic(spec, scheme)
    save_corpus(reports, args.out)
    print(f"wrote {len(reports)} reports to {args.out}")
    return 0


def _cmd_corpus_split(args) -> int:
    scheme = get_scheme(args.scheme)
    reports = load_corpus(args.input, scheme)
    spec = SplitSpec(
        test_fraction=args.test_frac,
        validation_fraction_of_train=args.val_frac,
        seed=args.seed,
        stratified=args.stratified,
    )
    split = split_corpus(reports, spec)
    save_corpus(split, args.out)
    counts = {name: sum(1 for r in split if r.split == name) for name in ("train", "validation", "test")}
    print(f"wrote {args.out}: {counts}")
    return 0


def _cmd_augment(args) -> int:
    scheme = get_scheme(args.scheme)
    reports = load_corpus(args.corpus, scheme)
    mode = _MODE_ALIASES.get(args.mode, args.mode)
    config = AugmentConfig(
        mode=mode,
        p_replace=args.p if mode == "synonym_replacement" else 0.8,
        p_swap=args.p if mode == "random_swapping" else 0.2,
        aug_min=args.aug_min,
        aug_max=args.aug_max,
        n=args.n,
        seed=args.seed,
    )
    lexicon = SynonymLexicon.from_tsv(args.lexicon) if args.lexicon else default_lexicon()
    additions = augment_corpus(reports, scheme, config, lexicon)
    save_corpus(additions, args.out)
    print(f"wrote {len(additions)} augmented reports to {args.out}")
    return 0


def _cmd_tokenize(args) -> int:
    scheme = get_scheme(args.scheme)
    reports = load_corpus(args.corpus, scheme)
    config = _tokenizer_from_args(args)
    handle = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        for report in reports:
            seq = tokenize(report.text, config)
            handle.write(
                json.dumps(
                    {
                        "id": report.id,
                        "tokens": seq.tokens,
                        "original_length": seq.original_length,
                        "pad_length": seq.pad_length,
                    }
                )
                + "\n"
            )
    finally:
        if args.out:
            handle.close()
    return 0


def _cmd_embed(args) -> int:
    scheme = get_scheme(args.scheme)
    reports = load_corpus(args.corpus, scheme)
    config = _tokenizer_from_args(args)
    spec = EmbeddingProviderSpec(
        kind=args.provider, dim=args.dim, seed=args.seed, path=args.path
    )
    provider = make_provider(spec)
    entries = {}
    for report in reports:
        seq = tokenize(report.text, config)
        seq.source_id = report.id
        entries[report.id] = provider.embed(seq).rows
    write_embeddings(args.out, entries)
    print(f"wrote {len(entries)} embedding entries to {args.out}")
    return 0


def _cmd_train(args) -> int:
    scheme = get_scheme(args.scheme)
    reports = load_corpus(args.corpus, scheme)
    tok_config = _tokenizer_from_args(args)
    emb_spec = EmbeddingProviderSpec(
        kind=args.provider, dim=args.dim, seed=args.embed_seed, path=args.path
    )
    provider = make_provider(emb_spec)
    train_pairs = _featurize(_split_subset(reports, "train"), tok_config, provider)
    val_pairs = _featurize(_split_subset(reports, "validation"), tok_config, provider)
    spec = ClassifierSpec(
        kind=args.model,
        input_dim=args.dim,
        hidden_size=args.hidden,
        num_layers=args.layers,
        num_classes=scheme.num_classes,
    )
    config = TrainConfig(
        learning_rate=args.lr, epochs=args.epochs, batch_size=args.batch, seed=args.seed
    )
    params, history = train(spec, train_pairs, val_pairs, config)
    meta = {
        "scheme": scheme.name,
        "tokenizer": asdict(tok_config),
        "embedding": asdict(emb_spec),
    }
    save_model(args.out, params, meta)
    best = max(h["val_weighted_f1"] for h in history)
    print(f"trained {args.model} for {len(history)} epoch(s); best val weighted F1 {best:.4f}")
    print(f"wrote model to {args.out}")
    return 0


def _load_model_bundle(path):
    params, meta = load_model(path)
    scheme = get_scheme(meta["scheme"])
    tok_config = TokenizerConfig(**meta["tokenizer"])
    provider = make_provider(EmbeddingProviderSpec(**meta["embedding"]))
    return params, scheme, tok_config, provider


def _cmd_evaluate(args) -> int:
    params, scheme, tok_config, provider = _load_model_bundle(args.model)
    reports = load_corpus(args.corpus, scheme)
    subset = _split_subset(reports, args.split) if args.split else reports
    pairs = _featurize(subset, tok_config, provider)
    probs = predict_batch(params, [emb for emb, _ in pairs])
    preds = [int(p) for p in np.argmax(probs, axis=1)]
    truths = [r.label for r in subset]
    report = compute_metrics(truths, preds, scheme)
    attach_roc(report, truths, probs, scheme)

    out = _out_dir(args, "evaluate")
    rows = [("dl", report)]
    write_metrics_csv(rows, out / "metrics.csv")
    write_roc_csv(report, out / "roc_points.csv")
    write_auc_csv(report, out / "auc.csv")
    if not args.no_figures:
        names = {cid: name for cid, name in scheme.classes}
        save_roc_figure(report, names, out / "roc.png", title="ROC")
    print(render_table(rows))
    print(f"wrote evaluation outputs to {out}")
    return 0


def _cmd_rules_score(args) -> int:
    ruleset = _resolve_ruleset_arg(args.ruleset)
    scheme = get_scheme(args.scheme)
    reports = load_corpus(args.corpus, scheme)
    handle = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    n_positive = 0
    try:
        for report in reports:
            verdict = score_report(report.text, ruleset)
            n_positive += int(verdict.positive)
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
    finally:
        if args.out:
            handle.close()
    if args.out:
        print(f"scored {len(reports)} reports ({n_positive} positive) -> {args.out}")
    return 0


def _cmd_hybrid_predict(args) -> int:
    params, scheme, tok_config, provider = _load_model_bundle(args.model)
    if scheme.num_classes != 2:
        raise ConfigError("hybrid prediction is defined for the binary task only")
    ruleset = _resolve_ruleset_arg(args.ruleset)
    reports = load_corpus(args.corpus, scheme)
    subset = _split_subset(reports, args.split) if args.split else reports
    pairs = _featurize(subset, tok_config, provider)
    probs = predict_batch(params, [emb for emb, _ in pairs])
    config = HybridConfig(
        negative_confidence_cutoff=args.cutoff,
        rule_score_cutoff=args.score_cutoff,
        negative_class=args.negative_class,
    )
    out = _out_dir(args, "hybrid")
    path = out / "hybrid.jsonl"
    finals = []
    truths = [r.label for r in subset]
    with open(path, "w", encoding="utf-8") as handle:
        for report, p in zip(subset, probs):
            dl = Prediction(probabilities=p, predicted_class=int(np.argmax(p)))
            decision = combine(dl, score_report(report.text, ruleset), config)
            finals.append(decision.final_class)
            handle.write(
                json.dumps(
                    {
                        "id": report.id,
                        "dl_probs": [float(v) for v in p],
                        "rule_score": decision.rule_verdict.report_score,
                        "final": decision.final_class,
                        "source": decision.source,
                    }
                )
                + "\n"
            )
    if all(t is not None for t in truths):
        rows = [("hybrid", compute_metrics(truths, finals, scheme))]
        write_metrics_csv(rows, out / "metrics.csv")
        print(render_table(rows))
    print(f"wrote hybrid decisions to {path}")
    return 0


def _cmd_apms_run(args) -> int:
    with open(args.config, encoding="utf-8") as handle:
        data = json.load(handle)
    scheme = get_scheme(data.get("scheme", "pe"))
    tok_cfg = data.get("tokenizer") or {"preset": scheme.name}
    if "preset" in tok_cfg:
        tok_config = get_preset(tok_cfg["preset"])
    else:
        tok_config = TokenizerConfig(**tok_cfg)
    weights = data.get("suite_weights")
    suite = MetricSuite(
        metrics=tuple(data["suite"]),
        weights=tuple(weights) if weights else None,
    )
    candidates = [
        Candidate(
            id=entry["id"],
            embedding=EmbeddingProviderSpec(**entry["embedding"]),
            classifier=ClassifierSpec(
                num_classes=scheme.num_classes, **entry["classifier"]
            ),
            train_config=TrainConfig(**entry["train"]),
        )
        for entry in data["candidates"]
    ]
    reports = load_corpus(args.corpus, scheme)
    result = run_selection(candidates, reports, scheme, tok_config, suite)

    out = _out_dir(args, "apms")
    leaderboard = render_leaderboard(result, suite)
    (out / "leaderboard.txt").write_text(leaderboard + "\n", encoding="utf-8")
    payload = {
        "winner": result.winner,
        "outcomes": [
            {
                "candidate_id": o.candidate_id,
                "metric_values": o.metric_values,
                "total": o.total,
                "failed": o.failed,
                "error": o.error,
            }
            for o in result.outcomes
        ],
        "winner_test_metrics": {
            "accuracy": result.winner_test_metrics.accuracy,
            "sensitivity": result.winner_test_metrics.sensitivity,
            "specificity": result.winner_test_metrics.specificity,
            "weighted_precision": result.winner_test_metrics.weighted_precision,
            "weighted_recall": result.winner_test_metrics.weighted_recall,
            "weighted_f1": result.winner_test_metrics.weighted_f1,
            "per_class_auc": result.winner_test_metrics.per_class_auc,
        },
    }
    with open(out / "selection.json", "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")
    save_model(out / "winner.bin", result.winner_params)
    print(leaderboard)
    print(f"winner: {result.winner}; outputs in {out}")
    return 0


def _cmd_pipeline_run(args) -> int:
    with open(args.config, encoding="utf-8") as handle:
        data = json.load(handle)
    if args.seed is not None:
        data["seed"] = args.seed
    if args.out:
        data["output_dir"] = args.out
    elif "output_dir" not in data:
        data["output_dir"] = str(_output_root() / "run")
    config = RunConfig.from_dict(data)
    manifest = run_pipeline(config, dry_run=args.dry_run)
    if args.dry_run:
        print(f"config ok (hash {manifest['config_hash'][:12]}); stage plan:")
        for stage in manifest["stages"]:
            print(f"  {stage['name']}")
        return 0
    print(f"run completed; manifest at {Path(config.output_dir) / 'manifest.json'}")
    for stage in manifest["stages"]:
        detail = ""
        if stage["name"] == "evaluate":
            detail = f" (accuracy {stage['details'].get('accuracy', float('nan')):.3f})"
        print(f"  {stage['name']}: {stage['status']}{detail}")
    return 0


# --- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vtenlp", description="Radiology-report classification pipeline"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    corpus = sub.add_parser("corpus", help="generate or split corpora")
    corpus_sub = corpus.add_subparsers(dest="subcommand", required=True)
    gen = corpus_sub.add_parser("gen", help="generate a synthetic corpus")
    gen.add_argument("--scheme", choices=("pe", "dvt"), default="pe")
    gen.add_argument("--n", type=int, default=300)
    gen.add_argument("--proportions", help="comma-separated class proportions")
    gen.add_argument("--mean-len", type=int, default=80)
    gen.add_argument("--negation-rate", type=float, default=0.7)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=_cmd_corpus_gen)

    csplit = corpus_sub.add_parser("split", help="assign train/validation/test splits")
    csplit.add_argument("--in", dest="input", required=True)
    csplit.add_argument("--scheme", choices=("pe", "dvt"), default="pe")
    csplit.add_argument("--test-frac", type=float, default=0.2)
    csplit.add_argument("--val-frac", type=float, default=0.1)
    csplit.add_argument("--seed", type=int, default=0)
    csplit.add_argument("--stratified", action=argparse.BooleanOptionalAction, default=True)
    csplit.add_argument("--out", required=True)
    csplit.set_defaults(func=_cmd_corpus_split)

    aug = sub.add_parser("augment", help="generate minority-class augmentations")
    aug.add_argument("--corpus", required=True)
    aug.add_argument("--scheme", choices=("pe", "dvt"), default="pe")
    aug.add_argument("--mode", choices=("synonym", "swap"), default="synonym")
    aug.add_argument("--n", type=int, default=200)
    aug.add_argument("--p", type=float, default=0.8)
    aug.add_argument("--aug-min", type=int, default=30)
    aug.add_argument("--aug-max", type=int, default=None)
    aug.add_argument("--seed", type=int, default=0)
    aug.add_argument("--lexicon", help="TSV lexicon path (default: packaged)")
    aug.add_argument("--out", required=True)
    aug.set_defaults(func=_cmd_augment)

    tok = sub.add_parser("tokenize", help="emit token sequences for inspection")
    tok.add_argument("--corpus", required=True)
    tok.add_argument("--scheme", choices=("pe", "dvt"), default="pe")
    tok.add_argument("--preset", choices=("dvt", "pe"))
    tok.add_argument("--max-len", type=int)
    tok.add_argument("--out")
    tok.set_defaults(func=_cmd_tokenize)

    emb = sub.add_parser("embed", help="write embeddings in the precomputed format")
    emb.add_argument("--corpus", required=True)
    emb.add_argument("--scheme", choices=("pe", "dvt"), default="pe")
    emb.add_argument("--provider", choices=("hashed", "precomputed", "constant"), default="hashed")
    emb.add_argument("--dim", type=int, default=768)
    emb.add_argument("--seed", type=int, default=0)
    emb.add_argument("--path", help="source file for the precomputed provider")
    emb.add_argument("--preset", choices=("dvt", "pe"))
    emb.add_argument("--max-len", type=int)
    emb.add_argument("--out", required=True)
    emb.set_defaults(func=_cmd_embed)

    tr = sub.add_parser("train", help="train a classifier on a split corpus")
    tr.add_argument("--corpus", required=True)
    tr.add_argument("--scheme", choices=("pe", "dvt"), default="pe")
    tr.add_argument("--model", choices=("bilstm", "lstm", "linear"), default="bilstm")
    tr.add_argument("--epochs", type=int, default=5)
    tr.add_argument("--lr", type=float, default=0.1)
    tr.add_argument("--batch", type=int, default=32)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--preset", choices=("dvt", "pe"))
    tr.add_argument("--max-len", type=int)
    tr.add_argument("--provider", choices=("hashed", "precomputed", "constant"), default="hashed")
    tr.add_argument("--dim", type=int, default=768)
    tr.add_argument("--embed-seed", type=int, default=0)
    tr.add_argument("--path", help="source file for the precomputed provider")
    tr.add_argument("--hidden", type=int, default=256)
    tr.add_argument("--layers", type=int, default=2)
    tr.add_argument("--out", required=True)
    tr.set_defaults(func=_cmd_train)

    ev = sub.add_parser("evaluate", help="evaluate a trained model on a corpus split")
    ev.add_argument("--model", required=True)
    ev.add_argument("--corpus", required=True)
    ev.add_argument("--split", default="test")
    ev.add_argument("--out")
    ev.add_argument("--no-figures", action="store_true")
    ev.set_defaults(func=_cmd_evaluate)

    rl = sub.add_parser("rules", help="rule-based scoring")
    rl_sub = rl.add_subparsers(dest="subcommand", required=True)
    score = rl_sub.add_parser("score", help="score a corpus with a ruleset")
    score.add_argument("--ruleset", default="pe-demo", help="path or 'pe-demo'")
    score.add_argument("--corpus", required=True)
    score.add_argument("--scheme", choices=("pe", "dvt"), default="pe")
    score.add_argument("--out")
    score.set_defaults(func=_cmd_rules_score)

    hy = sub.add_parser("hybrid", help="combine model and rule predictions")
    hy_sub = hy.add_subparsers(dest="subcommand", required=True)
    hp = hy_sub.add_parser("predict", help="emit hybrid decisions for a corpus")
    hp.add_argument("--model", required=True)
    hp.add_argument("--ruleset", default="pe-demo")
    hp.add_argument("--corpus", required=True)
    hp.add_argument("--split", default=None)
    hp.add_argument("--cutoff", type=float, default=0.95)
    hp.add_argument("--score-cutoff", type=int, default=2)
    hp.add_argument("--negative-class", type=int, default=0)
    hp.add_argument("--out")
    hp.set_defaults(func=_cmd_hybrid_predict)

    ap = sub.add_parser("apms", help="adaptive candidate selection")
    ap_sub = ap.add_subparsers(dest="subcommand", required=True)
    ar = ap_sub.add_parser("run", help="run a candidate sweep from a config file")
    ar.add_argument("--config", required=True)
    ar.add_argument("--corpus", required=True)
    ar.add_argument("--out")
    ar.set_defaults(func=_cmd_apms_run)

    pl = sub.add_parser("pipeline", help="end-to-end runs")
    pl_sub = pl.add_subparsers(dest="subcommand", required=True)
    pr = pl_sub.add_parser("run", help="execute a full run from a config file")
    pr.add_argument("--config", required=True)
    pr.add_argument("--seed", type=int, default=None)
    pr.add_argument("--out")
    pr.add_argument("--dry-run", action="store_true")
    pr.set_defaults(func=_cmd_pipeline_run)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PipelineError as exc:
        print(f"error [{exc.stage}]: {exc}", file=sys.stderr)
        return 2
    except VtenlpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
