"""Command-line entry point.

Subcommands: featurize, train, predict, evaluate, ablate, stats, gradcheck.
Exit codes: 0 success, 1 usage/config error, 2 data validation error,
3 numerical failure.

Configuration precedence: CLI flags override the config file, which
overrides the built-in defaults.  The config file is flat ``key = value``
text; its keys mirror the published hyperparameter names
(``batch_size``, ``num_warm_up_steps``, ``learning_rate``, ``max_epochs``,
``beta_1``, ``delta``, ``beta_2``, ``early_stopping_patience``,
``weight_decay``, ``tf_idf_error``, ``validation_split_ratio``,
``training_split_ratio``) plus ``loss``, ``seed``, ``scaling``,
``fusion_mode``, ``target_mode`` and the architecture keys ``d_model``,
``heads``, ``ffn_ratio``, ``bilstm_hidden``, ``dense_widths``,
``head_widths``, ``dropout``.

Every run writes a ``run_manifest.json`` capturing the effective
configuration, the seed, and SHA-256 hashes of the input files; runs with
equal manifests produce byte-identical outputs.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields
from pathlib import Path

from . import __version__
from .checkpoint import file_sha256, load_bundle, save_bundle
from .corpus import TARGET_NAMES, load_corpus, write_predictions
from .diagnostics import standard_gradient_report
from .errors import (
    ConfigError,
    GazePredError,
    NumericalError,
    ParseError,
    SchemaError,
    ValidationError,
)
from .evaluation import (
    drop_one_subsets,
    evaluate,
    run_ablation,
    scatter_data,
    single_feature_subsets,
    target_correlations,
    write_correlations_csv,
    write_group_stats_csv,
    write_scatter_csv,
)
from .features import (
    SidecarLemmatizer,
    SidecarTagger,
    build_feature_matrix,
    write_feature_csv,
)
from .model import (
    ModelConfig,
    SidecarEmbeddings,
    load_embeddings,
    predict,
    random_embeddings,
)
from .training import TrainConfig, train

# Config-file keys (published hyperparameter names) -> TrainConfig fields.
_TRAIN_KEYS = {
    "batch_size": ("batch_size", int),
    "num_warm_up_steps": ("warmup_steps", int),
    "learning_rate": ("lr", float),
    "max_epochs": ("max_epochs", int),
    "beta_1": ("beta1", float),
    "delta": ("early_stop_delta", float),
    "beta_2": ("beta2", float),
    "early_stopping_patience": ("early_stop_patience", int),
    "weight_decay": ("weight_decay", float),
    "tf_idf_error": ("tfidf_error", float),
    "validation_split_ratio": ("val_ratio", float),
    "training_split_ratio": ("train_ratio", float),
    "loss": ("loss", str),
    "seed": ("seed", int),
    "scaling": ("scaling", str),
    "fusion_mode": ("fusion_mode", str),
    "target_mode": ("target_mode", str),
}

_MODEL_KEYS = {
    "d_model": ("d_model", int),
    "heads": ("heads", int),
    "ffn_ratio": ("ffn_ratio", int),
    "bilstm_hidden": ("bilstm_hidden", int),
    "dense_widths": ("feature_dense_widths", "widths"),
    "head_widths": ("head_widths", "widths"),
    "dropout": ("dropout", float),
}


def _parse_widths(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in str(text).split(",") if part != "")
    except ValueError:
        raise ConfigError(f"bad width list {text!r}; expected e.g. 64,128") \
            from None


def parse_config_file(path: str | Path) -> dict[str, str]:
    """Flat ``key = value`` text; blank lines and ``#`` comments ignored."""
    values: dict[str, str] = {}
    for line_number, line in enumerate(
            Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(
                f"{path}: line {line_number}: expected 'key = value'")
        key, _, value = stripped.partition("=")
        values[key.strip()] = value.strip()
    return values


def effective_configs(args) -> tuple[TrainConfig, ModelConfig]:
    """Merge defaults, config file, and CLI flags into the two configs."""
    train_values: dict = {}
    model_values: dict = {}
    if getattr(args, "config", None):
        for key, raw in parse_config_file(args.config).items():
            if key in _TRAIN_KEYS:
                field_name, cast = _TRAIN_KEYS[key]
                train_values[field_name] = cast(raw)
            elif key in _MODEL_KEYS:
                field_name, cast = _MODEL_KEYS[key]
                model_values[field_name] = (_parse_widths(raw)
                                            if cast == "widths" else cast(raw))
            else:
                raise ConfigError(f"unknown config key {key!r}")
    for key, (field_name, cast) in _TRAIN_KEYS.items():
        flag = getattr(args, field_name, None)
        if flag is not None:
            train_values[field_name] = flag
    for key, (field_name, cast) in _MODEL_KEYS.items():
        flag = getattr(args, field_name, None)
        if flag is not None:
            model_values[field_name] = (_parse_widths(flag)
                                        if cast == "widths" else flag)
    try:
        train_cfg = TrainConfig(**train_values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    if "d_model" in model_values and "feature_dense_widths" not in model_values:
        model_values["feature_dense_widths"] = (model_values["d_model"],)
    model_cfg = ModelConfig(**model_values)
    return train_cfg, model_cfg


def _add_train_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key=value config file")
    group = parser.add_argument_group("hyperparameters")
    group.add_argument("--batch-size", dest="batch_size", type=int)
    group.add_argument("--num-warm-up-steps", "--warmup-steps",
                       dest="warmup_steps", type=int)
    group.add_argument("--learning-rate", "--lr", dest="lr", type=float)
    group.add_argument("--max-epochs", dest="max_epochs", type=int)
    group.add_argument("--beta1", dest="beta1", type=float)
    group.add_argument("--beta2", dest="beta2", type=float)
    group.add_argument("--delta", dest="early_stop_delta", type=float)
    group.add_argument("--patience", dest="early_stop_patience", type=int)
    group.add_argument("--weight-decay", dest="weight_decay", type=float)
    group.add_argument("--tfidf-error", dest="tfidf_error", type=float)
    group.add_argument("--val-ratio", dest="val_ratio", type=float)
    group.add_argument("--train-ratio", dest="train_ratio", type=float)
    group.add_argument("--loss", dest="loss", choices=("mse", "mae"))
    group.add_argument("--seed", dest="seed", type=int)
    group.add_argument("--scaling", dest="scaling",
                       choices=("min_max", "standard", "none"))
    group.add_argument("--fusion-mode", dest="fusion_mode",
                       choices=("representation_mean", "prediction_mean"))
    group.add_argument("--target-mode", dest="target_mode",
                       choices=("multi", "single"))
    arch = parser.add_argument_group("architecture")
    arch.add_argument("--d-model", dest="d_model", type=int)
    arch.add_argument("--heads", dest="heads", type=int)
    arch.add_argument("--ffn-ratio", dest="ffn_ratio", type=int)
    arch.add_argument("--bilstm-hidden", dest="bilstm_hidden", type=int)
    arch.add_argument("--dense-widths", dest="feature_dense_widths")
    arch.add_argument("--head-widths", dest="head_widths")
    arch.add_argument("--dropout", dest="dropout", type=float)


def _add_embedding_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("embeddings (choose one)")
    group.add_argument("--embeddings", help="text embedding file")
    group.add_argument("--random-embeddings", type=int, metavar="DIM",
                       help="seeded random vectors over the corpus "
                            "vocabulary")
    group.add_argument("--contextual-sidecar",
                       help="CSV of precomputed per-token vectors keyed by "
                            "sentence_id,word_id")


def _add_sidecar_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--pos-sidecar",
                        help="CSV sentence_id,word_id,tag with fine POS tags")
    parser.add_argument("--lemma-sidecar",
                        help="CSV sentence_id,word_id,lemma")


def _sidecars(args):
    tagger = SidecarTagger.from_csv(args.pos_sidecar) \
        if getattr(args, "pos_sidecar", None) else None
    lemmatizer = SidecarLemmatizer.from_csv(args.lemma_sidecar) \
        if getattr(args, "lemma_sidecar", None) else None
    return tagger, lemmatizer


def _embeddings_for(args, corpus, seed: int):
    chosen = [name for name in ("embeddings", "random_embeddings",
                                "contextual_sidecar")
              if getattr(args, name, None) is not None]
    if len(chosen) != 1:
        raise ConfigError("choose exactly one of --embeddings, "
                          "--random-embeddings, --contextual-sidecar")
    if args.embeddings:
        return load_embeddings(args.embeddings)
    if args.contextual_sidecar:
        return SidecarEmbeddings.from_csv(args.contextual_sidecar)
    tokens = [t.text for t in corpus.tokens()]
    return random_embeddings(tokens, dim=args.random_embeddings, seed=seed)


def _input_hashes(paths: dict[str, str | None]) -> dict[str, dict]:
    hashes = {}
    for role, path in paths.items():
        if path is not None:
            hashes[role] = {"path": str(path), "sha256": file_sha256(path)}
    return hashes


def _write_manifest(where: Path, command: str, config: dict,
                    seed: int | None, inputs: dict) -> None:
    manifest = {
        "tool": "gazepred",
        "version": __version__,
        "command": command,
        "config": config,
        "seed": seed,
        "inputs": inputs,
    }
    where.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                     encoding="utf-8")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_featurize(args) -> int:
    corpus = load_corpus(args.input, expect_targets=False)
    tagger, lemmatizer = _sidecars(args)
    tfidf_error = args.tfidf_error if args.tfidf_error is not None else 0.1
    features = build_feature_matrix(corpus, tagger=tagger,
                                    lemmatizer=lemmatizer,
                                    tfidf_error=tfidf_error)
    if args.features:
        features = features.select(args.features.split(","))
    output = Path(args.output)
    write_feature_csv(output, corpus, features)
    _write_manifest(
        output.parent / (output.name + ".manifest.json"), "featurize",
        {"tfidf_error": tfidf_error,
         "features": list(features.columns)},
        None,
        _input_hashes({"input": args.input, "pos_sidecar": args.pos_sidecar,
                       "lemma_sidecar": args.lemma_sidecar}))
    print(f"wrote {features.matrix.shape[0]} rows x "
          f"{features.n_features} feature columns to {output}")
    return 0


def cmd_train(args) -> int:
    train_cfg, model_cfg = effective_configs(args)
    corpus = load_corpus(args.input, expect_targets=True)
    tagger, lemmatizer = _sidecars(args)
    embeddings = _embeddings_for(args, corpus, train_cfg.seed)
    feature_names = args.features.split(",") if args.features else None

    result = train(corpus, train_cfg, model_cfg, embeddings, tagger=tagger,
                   lemmatizer=lemmatizer, feature_names=feature_names)

    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    save_bundle(outdir, result.pipeline, train_config=train_cfg.to_dict())
    if train_cfg.target_mode == "multi":
        result.histories["multi"].to_csv(outdir / "history.csv")
    else:
        for name, history in result.histories.items():
            history.to_csv(outdir / f"history_{name}.csv")
    _write_manifest(
        outdir / "run_manifest.json", "train",
        {"train": train_cfg.to_dict(),
         "model": result.pipeline.model_config.to_dict(),
         "features": list(result.pipeline.feature_columns),
         "random_embeddings": args.random_embeddings},
        train_cfg.seed,
        _input_hashes({"input": args.input, "config": args.config,
                       "embeddings": args.embeddings,
                       "contextual_sidecar": args.contextual_sidecar,
                       "pos_sidecar": args.pos_sidecar,
                       "lemma_sidecar": args.lemma_sidecar}))
    for name, history in result.histories.items():
        print(f"[{name}] best epoch {history.best_epoch}, stopped at "
              f"{history.stopped_epoch}, best val loss "
              f"{min(history.val_loss):.6f}")
    print(f"checkpoint bundle written to {outdir}")
    return 0


def cmd_predict(args) -> int:
    pipeline = load_bundle(args.bundle)
    tagger, lemmatizer = _sidecars(args)
    if tagger is not None:
        pipeline.tagger = tagger
    if lemmatizer is not None:
        pipeline.lemmatizer = lemmatizer
    if args.contextual_sidecar:
        pipeline.embeddings = SidecarEmbeddings.from_csv(
            args.contextual_sidecar)
    corpus = load_corpus(args.input, expect_targets=False)
    predictions = predict(corpus, pipeline)
    output = Path(args.output)
    write_predictions(output, corpus, predictions)
    _write_manifest(
        output.parent / (output.name + ".manifest.json"), "predict",
        {"model": pipeline.model_config.to_dict(),
         "features": list(pipeline.feature_columns)},
        None,
        _input_hashes({"input": args.input,
                       "bundle_params": _bundle_params_path(args.bundle),
                       "pos_sidecar": args.pos_sidecar,
                       "lemma_sidecar": args.lemma_sidecar,
                       "contextual_sidecar": args.contextual_sidecar}))
    print(f"wrote {len(predictions)} prediction rows to {output}")
    return 0


def _bundle_params_path(bundle: str) -> str:
    directory = Path(bundle)
    single = directory / "params.bin"
    if single.exists():
        return str(single)
    return str(directory / f"params_{TARGET_NAMES[0]}.bin")


def cmd_evaluate(args) -> int:
    pred_corpus = load_corpus(args.predictions, expect_targets=True)
    gold_corpus = load_corpus(args.gold, expect_targets=True)
    pred_keys = [(t.sentence_id, t.word_id) for t in pred_corpus.tokens()]
    gold_keys = [(t.sentence_id, t.word_id) for t in gold_corpus.tokens()]
    if pred_keys != gold_keys:
        raise ValidationError(
            "prediction and gold files are not aligned: token keys differ")
    predictions = [t for s in pred_corpus.sentences for t in s.targets]
    metrics = evaluate(predictions, gold_corpus)
    output = Path(args.output)
    metrics.to_csv(output)
    _write_manifest(
        output.parent / (output.name + ".manifest.json"), "evaluate", {},
        None,
        _input_hashes({"predictions": args.predictions, "gold": args.gold}))
    for name in TARGET_NAMES:
        print(f"{name}: MAE={metrics.per_target_mae[name]:.4f} "
              f"R2={metrics.per_target_r2[name]:.4f}")
    print(f"mean R2 = {metrics.mean_r2:.4f} (std {metrics.std_r2:.4f})")
    return 0


def cmd_ablate(args) -> int:
    train_cfg, model_cfg = effective_configs(args)
    corpus = load_corpus(args.input, expect_targets=True)
    tagger, lemmatizer = _sidecars(args)
    embeddings = _embeddings_for(args, corpus, train_cfg.seed)

    subsets: list[tuple[str, list[str]]] = []
    if args.each_single:
        subsets += single_feature_subsets()
    if args.drop_one:
        subsets += drop_one_subsets()
    for spec_text in args.subset or []:
        if "=" not in spec_text:
            raise ConfigError(
                f"--subset expects NAME=feature1,feature2, got {spec_text!r}")
        name, _, features_text = spec_text.partition("=")
        subsets.append((name, features_text.split(",")))
    if not subsets:
        raise ConfigError("no subsets requested: use --each-single, "
                          "--drop-one, or --subset")

    report = run_ablation(corpus, train_cfg, model_cfg, embeddings, subsets,
                          tagger=tagger, lemmatizer=lemmatizer)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    report.to_csv(outdir / "ablation.csv")
    _write_manifest(
        outdir / "run_manifest.json", "ablate",
        {"train": train_cfg.to_dict(), "model": model_cfg.to_dict(),
         "subsets": [[name, names] for name, names in subsets],
         "random_embeddings": args.random_embeddings},
        train_cfg.seed,
        _input_hashes({"input": args.input, "config": args.config,
                       "embeddings": args.embeddings}))
    for row in report.rows:
        print(f"{row['subset']}: mean R2 = {row['mean_r2']:.4f} "
              f"(std {row['std_r2']:.4f})")
    print(f"ablation report written to {outdir / 'ablation.csv'}")
    return 0


def cmd_stats(args) -> int:
    corpus = load_corpus(args.input, expect_targets=True)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    write_correlations_csv(outdir / "correlations.csv",
                           target_correlations(corpus))
    write_group_stats_csv(outdir / "groupmeans.csv", corpus)
    for target in TARGET_NAMES:
        pairs = scatter_data(corpus, "word_len", target)
        write_scatter_csv(outdir / f"scatter_word_len_{target}.csv", pairs,
                          "word_len", target)
    _write_manifest(outdir / "run_manifest.json", "stats", {}, None,
                    _input_hashes({"input": args.input}))
    print(f"statistics written to {outdir}: correlations.csv, "
          f"groupmeans.csv, scatter_word_len_<target>.csv")
    return 0


def cmd_gradcheck(args) -> int:
    cases = standard_gradient_report(inject_fault=args.inject_fault)
    all_passed = True
    for case in cases:
        status = "PASS" if case.passed else "FAIL"
        print(f"{case.name:28s} max_rel_err={case.error:.3e} "
              f"threshold={case.threshold:g} {status}")
        all_passed = all_passed and case.passed
    if args.report:
        payload = [{"name": c.name, "max_rel_err": c.error,
                    "threshold": c.threshold, "passed": c.passed}
                   for c in cases]
        Path(args.report).write_text(json.dumps(payload, indent=2) + "\n",
                                     encoding="utf-8")
    if not all_passed:
        print("gradient check FAILED", file=sys.stderr)
        return 3
    print("all gradient checks passed")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gazepred",
        description="Predict per-token eye-tracking features from sentences.")
    parser.add_argument("--version", action="version",
                        version=f"gazepred {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("featurize", help="compute the engineered features")
    p.add_argument("input", help="corpus CSV")
    p.add_argument("--output", required=True, help="feature CSV to write")
    p.add_argument("--features", help="comma list restricting the columns")
    p.add_argument("--tfidf-error", dest="tfidf_error", type=float)
    _add_sidecar_flags(p)
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("train", help="train the two-path model")
    p.add_argument("input", help="training corpus CSV with targets")
    p.add_argument("--outdir", required=True, help="checkpoint bundle dir")
    p.add_argument("--features", help="comma list restricting the columns")
    _add_train_flags(p)
    _add_embedding_flags(p)
    _add_sidecar_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict with a trained bundle")
    p.add_argument("input", help="corpus CSV (targets optional)")
    p.add_argument("--bundle", required=True, help="checkpoint bundle dir")
    p.add_argument("--output", required=True, help="prediction CSV to write")
    p.add_argument("--contextual-sidecar")
    _add_sidecar_flags(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score predictions against gold")
    p.add_argument("predictions", help="prediction CSV")
    p.add_argument("gold", help="gold CSV with targets")
    p.add_argument("--output", required=True, help="metrics CSV to write")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="feature-subset ablation study")
    p.add_argument("input", help="training corpus CSV with targets")
    p.add_argument("--outdir", required=True)
    p.add_argument("--each-single", action="store_true",
                   help="one row per single feature group")
    p.add_argument("--drop-one", action="store_true",
                   help="one row per left-out feature group")
    p.add_argument("--subset", action="append",
                   help="NAME=feat1,feat2 (repeatable)")
    _add_train_flags(p)
    _add_embedding_flags(p)
    _add_sidecar_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("stats", help="exploratory statistics emitters")
    p.add_argument("input", help="corpus CSV with targets")
    p.add_argument("--outdir", required=True)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("gradcheck", help="finite-difference gradient report")
    p.add_argument("--inject-fault", action="store_true",
                   help="sabotage one backward pass (negative control)")
    p.add_argument("--report", help="JSON report path")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses exit code 2 for usage errors; remap to 1
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (SchemaError, ParseError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except GazePredError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
