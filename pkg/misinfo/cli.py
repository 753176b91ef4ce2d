"""
misinfo: Arabic misinformation detection pipeline.

  misinfo preprocess  --input tweets.jsonl --output tokens.jsonl
  misinfo embed-train --input tokens.jsonl --output vectors.txt --mode fasttext
  misinfo split       --input tweets.jsonl --output-dir splits/
  misinfo featurize   --input tokens.jsonl --features tfidf-uni --output-dir features/
  misinfo train       --input tokens.jsonl --model gbt --features fasttext --embeddings vectors.txt
  misinfo grid-search --input tokens.jsonl --model rf --features tfidf-uni --grid grid.json
  misinfo evaluate    --model models/gbt.json --input test_tokens.jsonl
  misinfo stats       --input tweets.jsonl
  misinfo report      runs/*/metrics.json --output reports/comparison.csv
  misinfo configure   Create config/misinfo.yaml from the example
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import Any, Callable, NoReturn, Sequence

import numpy as np
from pydantic import ValidationError

from misinfo import __version__
from misinfo.arabic_text import PreprocessConfig, Preprocessor, TokenSequence
from misinfo.classifiers import FeatureMatrix, ModelSpec, load_model, load_model_metadata, predict_labels, save_model, train
from misinfo.config import RunConfig, ensure_run_config, get_run_config, load_run_config
from misinfo.corpus import (
    LabeledDataset,
    dataset_stats,
    load_dataset,
    load_records,
    read_token_file,
    require_labels,
    split,
    split_indices,
    write_dataset,
    write_token_file,
)
from misinfo.embeddings import EmbeddingTable, load_table, save_table, train_embeddings, tweet_matrix
from misinfo.errors import ConfigError, DataError, MisinfoError, TrainingError, UsageError
from misinfo.evaluation import compute_metrics, grid_search, roc_auc, write_grid_csv, write_metrics_json, write_roc_csv
from misinfo.features import TfidfConfig, Vocabulary, fit_vocabulary, load_vocabulary, save_vocabulary, to_matrix, transform_corpus, write_libsvm

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_DATA = 2
EXIT_USAGE = 64
EXIT_INTERNAL = 70

FEATURE_KINDS = ("tfidf-uni", "tfidf-ngram", "cbow", "fasttext")
CLASSICAL_MODELS = ("nb", "sgd", "svm", "rf", "gbt")
LOSS_FLAGS = {"ce": "cross_entropy", "auc": "auc_surrogate"}

_EPILOG = """
Exit codes: 0 success, 2 data/config/training error, 64 usage error, 70 internal error.
Flags override config/misinfo.yaml (or --config FILE) for one run; every artifact
records the resolved configuration and seed.
"""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> NoReturn:
        raise UsageError("%s: %s" % (self.prog, message))


# --- shared helpers ---


# Configured paths each command reads; they must exist before the run starts.
PATHS_READ: dict[str, tuple[str, ...]] = {
    "preprocess": ("stoplist",),
    "stats": ("stoplist",),
    "featurize": ("embeddings",),
    "train": ("embeddings",),
    "grid-search": ("embeddings",),
    "evaluate": ("embeddings",),
}


def _run_config(args: argparse.Namespace) -> RunConfig:
    """Config file plus flag overrides; --seed also seeds the train/test split."""
    cfg = load_run_config(args.config) if args.config else get_run_config()
    cfg = cfg.with_overrides(**{"seed": args.seed, "split.seed": args.seed, "n_jobs": args.n_jobs, "log_level": args.log_level})
    cfg.check_paths(*PATHS_READ.get(args.command, ()))
    return cfg


def _preprocess_config(cfg: RunConfig) -> PreprocessConfig:
    pre_cfg = cfg.preprocess
    if cfg.paths.stoplist and not pre_cfg.stoplist_path:
        pre_cfg = pre_cfg.model_copy(update={"stoplist_path": cfg.paths.stoplist})
    return pre_cfg


def _context(cfg: RunConfig, **extra: Any) -> dict[str, Any]:
    """Run context embedded in artifacts."""
    return {"config": cfg.model_dump(mode="json"), "seed": cfg.seed, **extra}


def _tfidf_config(kind: str, cfg: RunConfig) -> TfidfConfig:
    mode = "unigram" if kind == "tfidf-uni" else "bi_tri"
    return cfg.tfidf.model_copy(update={"ngram_mode": mode})


def _embedding_table(path: str | None, cfg: RunConfig, kind: str) -> EmbeddingTable:
    path = path or cfg.paths.embeddings
    if not path:
        raise UsageError("--features %s needs --embeddings (or paths.embeddings in the config)" % kind)
    table = load_table(path)
    if table.mode != kind:
        logger.warning("features %s requested but %s holds %s vectors", kind, path, table.mode)
    return table


class Featurizer:
    """Feature construction fitted on training tokens and replayed on other splits."""

    def __init__(self, kind: str, cfg: RunConfig, embeddings: str | None = None, vocab: Vocabulary | None = None) -> None:
        if kind not in FEATURE_KINDS:
            raise UsageError("unknown feature kind %r" % kind)
        self.kind = kind
        self.cfg = cfg
        self.vocab = vocab
        self.embeddings_path = embeddings or cfg.paths.embeddings
        self.table = _embedding_table(embeddings, cfg, kind) if kind in ("cbow", "fasttext") else None

    @property
    def is_tfidf(self) -> bool:
        return self.table is None

    def fit(self, seqs: Sequence[TokenSequence]) -> "Featurizer":
        if self.is_tfidf and self.vocab is None:
            self.vocab = fit_vocabulary(seqs, _tfidf_config(self.kind, self.cfg))
        return self

    def matrix(self, seqs: Sequence[TokenSequence]) -> Any:
        if self.is_tfidf:
            return to_matrix(transform_corpus(seqs, self.vocab), len(self.vocab))
        return tweet_matrix(self.table, seqs)

    def features(self, seqs: Sequence[TokenSequence], labels: np.ndarray) -> FeatureMatrix:
        return FeatureMatrix(self.matrix(seqs), labels)


def _labelled_tokens(path: str) -> tuple[list[TokenSequence], np.ndarray]:
    seqs, labels = read_token_file(path)
    return seqs, require_labels(labels, str(path))


def _write_json(path: Path, doc: dict) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")
    return path


def _read_params(path: str | None) -> dict[str, Any]:
    if not path:
        return {}
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError("cannot parse %s: %s" % (path, e.msg)) from e
    if not isinstance(data, dict):
        raise ConfigError("%s must hold a JSON object" % path)
    return data


def _print_summary(doc: dict) -> None:
    print(json.dumps(doc, sort_keys=True, ensure_ascii=False))


# --- commands ---


def cmd_preprocess(args: argparse.Namespace, cfg: RunConfig) -> int:
    pre_cfg = _preprocess_config(cfg)
    if args.stemmer:
        pre_cfg = pre_cfg.model_copy(update={"stemmer": args.stemmer})
    if args.no_stoplist:
        pre_cfg = pre_cfg.model_copy(update={"use_stoplist": False})
    pre = Preprocessor(pre_cfg)
    records = load_records(args.input, args.format)
    if not records:
        raise DataError("no records in %s" % args.input)
    seqs = [pre(r.text, r.id) for r in records]
    empty = sum(1 for s in seqs if not len(s))
    if empty:
        logger.warning("%d of %d tweets are empty after preprocessing", empty, len(seqs))
    write_token_file(args.output, seqs, [r.label for r in records])
    logger.info("wrote %d token records to %s", len(seqs), args.output)
    _print_summary({"records": len(seqs), "empty": empty, "output": str(args.output)})
    return EXIT_OK


def cmd_embed_train(args: argparse.Namespace, cfg: RunConfig) -> int:
    updates = {
        k: v
        for k, v in {
            "mode": args.mode,
            "dim": args.dim,
            "window": args.window,
            "epochs": args.epochs,
            "min_count": args.min_count,
            "negatives": args.negatives,
            "workers": args.workers,
        }.items()
        if v is not None
    }
    if args.seed is not None:
        updates["seed"] = args.seed
    embed_cfg = cfg.embed.model_validate({**cfg.embed.model_dump(), **updates})
    seqs, _ = read_token_file(args.input)
    table = train_embeddings(seqs, embed_cfg)
    save_table(table, args.output)
    history_path = Path(str(args.output) + ".history.json")
    _write_json(history_path, {"history": table.history, "embed": embed_cfg.model_dump(mode="json"), "seed": embed_cfg.seed})
    logger.info("wrote %d %s vectors (dim %d) to %s", len(table), embed_cfg.mode, table.dim, args.output)
    _print_summary({"words": len(table), "dim": table.dim, "mode": embed_cfg.mode, "output": str(args.output)})
    return EXIT_OK


def cmd_split(args: argparse.Namespace, cfg: RunConfig) -> int:
    spec = cfg.split
    if args.fractions:
        spec = spec.model_validate({**spec.model_dump(), "fractions": [float(x) for x in args.fractions.split(",")]})
    if args.seed is not None:
        spec = spec.model_copy(update={"seed": args.seed})
    ds = load_dataset(args.input, args.format)
    parts = split(ds, spec)
    names = {2: ["train", "test"], 3: ["train", "valid", "test"]}.get(len(parts)) or ["part%d" % i for i in range(len(parts))]
    out = Path(args.output_dir)
    written = {}
    for name, part in zip(names, parts):
        path = write_dataset(part, out / ("%s.jsonl" % name))
        written[name] = {"path": str(path), "records": len(part), "positive": part.positive_count}
    _write_json(out / "split.json", {"split": spec.model_dump(mode="json"), "parts": written})
    _print_summary(written)
    return EXIT_OK


def cmd_featurize(args: argparse.Namespace, cfg: RunConfig) -> int:
    kind = args.features or cfg.feature_kind
    seqs, labels = read_token_file(args.input)
    vocab = load_vocabulary(args.vocab) if args.vocab else None
    featurizer = Featurizer(kind, cfg, args.embeddings, vocab).fit(seqs)
    out = Path(args.output_dir)
    ids = [s.source_id for s in seqs]
    if featurizer.is_tfidf:
        if args.vocab is None:
            save_vocabulary(featurizer.vocab, out / "vocabulary.tsv")
        write_libsvm(out / "features.libsvm", ids, labels, transform_corpus(seqs, featurizer.vocab))
        dim = len(featurizer.vocab)
    else:
        X = featurizer.matrix(seqs)
        out.mkdir(parents=True, exist_ok=True)
        lab = np.asarray([-1 if v is None else v for v in labels], dtype=np.int64)
        np.savez_compressed(out / "features.npz", X=X, labels=lab, ids=np.asarray(ids))
        dim = X.shape[1]
    _write_json(out / "featurize.json", _context(cfg, features=kind, rows=len(seqs), dim=dim))
    _print_summary({"features": kind, "rows": len(seqs), "dim": dim, "output_dir": str(out)})
    return EXIT_OK


def _train_test(args: argparse.Namespace, cfg: RunConfig) -> tuple[list[TokenSequence], np.ndarray, list[TokenSequence] | None, np.ndarray | None, list[TokenSequence], np.ndarray]:
    """(train, valid or None, test) token sets, from --test or by splitting --input."""
    seqs, labels = _labelled_tokens(args.input)
    if args.test:
        test_seqs, test_labels = _labelled_tokens(args.test)
        return seqs, labels, None, None, test_seqs, test_labels
    parts = split_indices(labels, cfg.split.fractions, cfg.split.seed, cfg.split.stratified)
    if len(parts) not in (2, 3):
        raise ConfigError("split.fractions must have 2 (train/test) or 3 (train/valid/test) parts for training")
    def pick(idx: np.ndarray) -> tuple[list[TokenSequence], np.ndarray]:
        return [seqs[i] for i in idx], labels[idx]

    tr, te = pick(parts[0]), pick(parts[-1])
    va = pick(parts[1]) if len(parts) == 3 else (None, None)
    return tr[0], tr[1], va[0], va[1], te[0], te[1]


def _evaluate_scores(labels: np.ndarray, scores: np.ndarray, label_scores: np.ndarray, threshold: float, out: Path, context: dict) -> dict:
    report = compute_metrics(labels, scores, threshold, label_scores)
    curve, _ = roc_auc(labels, scores)
    write_roc_csv(curve, out / "roc.csv")
    write_metrics_json(report, out / "metrics.json", context)
    return report.to_dict()


def _train_cnn(args: argparse.Namespace, cfg: RunConfig, data: tuple, out: Path) -> int:
    from misinfo.neural import build_cnn, build_token_index, encode, predict_scores, save_checkpoint, train_cnn, write_history_csv

    tr_s, tr_y, va_s, va_y, te_s, te_y = data
    updates: dict[str, Any] = {"seed": cfg.seed}
    if args.embed_init:
        updates["embed_init"] = args.embed_init
    if args.loss:
        updates["loss"] = LOSS_FLAGS[args.loss]
    if args.epochs is not None:
        updates["epochs"] = args.epochs
    cnn_cfg = cfg.cnn.model_validate({**cfg.cnn.model_dump(), **updates})
    index = build_token_index(tr_s, cnn_cfg.vocab_size)
    table = None
    if cnn_cfg.embed_init != "random":
        table = _embedding_table(args.embeddings, cfg, cnn_cfg.embed_init)
    model = build_cnn(cnn_cfg, table, index)
    L = cnn_cfg.max_sequence_length
    valid = encode(va_s, index, L, va_y) if va_s is not None else None
    model, history = train_cnn(model, encode(tr_s, index, L, tr_y), valid, cnn_cfg)
    write_history_csv(history, out / "history.csv")
    context = _context(cfg.with_overrides(**{"cnn": cnn_cfg.model_dump()}), model="cnn", features="tokens:%s" % cnn_cfg.embed_init)
    save_checkpoint(model, out / "model.cnn", context)
    scores = predict_scores(model, encode(te_s, index, L, te_y))
    metrics = _evaluate_scores(te_y, scores, scores, 0.5, out, context)
    _print_summary({"model": "cnn", "metrics": metrics, "output_dir": str(out)})
    return EXIT_OK


def cmd_train(args: argparse.Namespace, cfg: RunConfig) -> int:
    kind = args.model or cfg.model.kind
    out = Path(args.output_dir or Path(cfg.paths.models) / kind)
    data = _train_test(args, cfg)
    if kind == "cnn":
        return _train_cnn(args, cfg, data, out)
    if kind not in CLASSICAL_MODELS:
        raise UsageError("unknown model kind %r" % kind)
    features = args.features or cfg.feature_kind
    params = {**(cfg.model.params if cfg.model.kind == kind else {}), **_read_params(args.params)}
    cfg = cfg.with_overrides(**{"model.kind": kind, "model.params": params, "feature_kind": features})
    if kind == "rf" and "n_jobs" not in params:
        params = {**params, "n_jobs": cfg.n_jobs}
    spec = ModelSpec(kind=kind, hyperparameters=params, seed=cfg.seed)
    spec.params()
    tr_s, tr_y, _, _, te_s, te_y = data
    featurizer = Featurizer(features, cfg, args.embeddings).fit(tr_s)
    model = train(spec, featurizer.features(tr_s, tr_y))
    artifacts: dict[str, Any] = {"features": features, "model": kind}
    if featurizer.is_tfidf:
        artifacts["vocabulary"] = str(save_vocabulary(featurizer.vocab, out / "vocabulary.tsv"))
    else:
        artifacts["embeddings"] = str(Path(featurizer.embeddings_path).resolve())
    context = _context(cfg, **artifacts)
    save_model(model, out / "model.json", context)
    X_test = featurizer.matrix(te_s)
    metrics = _evaluate_scores(te_y, model.scores(X_test), model.label_scores(X_test), model.default_threshold, out, context)
    _print_summary({"model": kind, "features": features, "metrics": metrics, "output_dir": str(out)})
    return EXIT_OK


def cmd_grid_search(args: argparse.Namespace, cfg: RunConfig) -> int:
    kind = args.model or cfg.model.kind
    if kind not in CLASSICAL_MODELS:
        raise UsageError("grid search supports %s, got %r" % (", ".join(CLASSICAL_MODELS), kind))
    features = args.features or cfg.feature_kind
    grid = _read_params(args.grid)
    if not all(isinstance(v, list) for v in grid.values()):
        raise ConfigError("grid file must map each parameter name to a list of values")
    seqs, labels = _labelled_tokens(args.input)
    featurizer = Featurizer(features, cfg, args.embeddings).fit(seqs)
    result = grid_search(featurizer.features(seqs, labels), kind, grid, k=args.k, seed=cfg.seed, n_jobs=cfg.n_jobs, refit=False)
    out = Path(args.output_dir or Path(cfg.paths.reports) / ("grid-%s" % kind))
    write_grid_csv(result, out / "grid.csv")
    best = result.rows[result.best_index]
    _write_json(out / "best_spec.json", {
        "spec": result.best_spec.model_dump(),
        "mean_auc": best.mean_auc,
        "std_auc": best.std_auc,
        **_context(cfg, features=features, model=kind, grid=grid, k=args.k),
    })
    _print_summary({"best": best.params, "mean_auc": best.mean_auc, "points": len(result.rows), "output_dir": str(out)})
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace, cfg: RunConfig) -> int:
    seqs, labels = _labelled_tokens(args.input)
    out = Path(args.output_dir) if args.output_dir else Path(args.model).parent
    if str(args.model).endswith(".cnn"):
        from misinfo.neural import encode, load_checkpoint, predict_scores

        model, meta = load_checkpoint(args.model)
        if model.token_index is None:
            raise DataError("checkpoint %s carries no token index" % args.model)
        scores = predict_scores(model, encode(seqs, model.token_index, model.cfg.max_sequence_length, labels))
        metrics = _evaluate_scores(labels, scores, scores, args.threshold if args.threshold is not None else 0.5, out, {**meta, "evaluated": str(args.input)})
    else:
        model = load_model(args.model)
        meta = load_model_metadata(args.model)
        features = meta.get("features")
        if features is None:
            raise DataError("model %s does not record its feature kind" % args.model)
        vocab = load_vocabulary(meta["vocabulary"]) if meta.get("vocabulary") else None
        featurizer = Featurizer(features, cfg, args.embeddings or meta.get("embeddings"), vocab)
        X = featurizer.matrix(seqs)
        threshold = model.default_threshold if args.threshold is None else args.threshold
        metrics = _evaluate_scores(labels, model.scores(X), model.label_scores(X), threshold, out, {**meta, "evaluated": str(args.input)})
        if args.predictions:
            _write_predictions(Path(args.predictions), seqs, model.scores(X), predict_labels(model, X, threshold))
    _print_summary({"metrics": metrics, "output_dir": str(out)})
    return EXIT_OK


def _write_predictions(path: Path, seqs: Sequence[TokenSequence], scores: np.ndarray, labels: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["id", "score", "label"])
        for s, score, lab in zip(seqs, scores, labels):
            w.writerow([s.source_id, repr(float(score)), int(lab)])


def cmd_stats(args: argparse.Namespace, cfg: RunConfig) -> int:
    ds: LabeledDataset = load_dataset(args.input, args.format)
    stats = dataset_stats(ds, _preprocess_config(cfg))
    _print_summary(stats.to_dict())
    return EXIT_OK


REPORT_COLUMNS = ("model", "features", "accuracy", "auc", "precision", "recall", "f1")


def cmd_report(args: argparse.Namespace, cfg: RunConfig) -> int:
    rows = []
    for path in args.inputs:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        if "metrics" not in doc:
            raise DataError("%s is not a metrics file" % path)
        m = doc["metrics"]
        rows.append({"model": doc.get("model", "?"), "features": doc.get("features", "?"), **{k: m[k] for k in REPORT_COLUMNS[2:]}})
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="", encoding="utf-8") as f:
        w = csv.DictWriter(f, fieldnames=list(REPORT_COLUMNS))
        w.writeheader()
        for r in rows:
            w.writerow({k: (round(v, 4) if isinstance(v, float) else v) for k, v in r.items()})
    md = ["| " + " | ".join(REPORT_COLUMNS) + " |", "|" + "---|" * len(REPORT_COLUMNS)]
    for r in rows:
        md.append("| " + " | ".join(("%.3f" % r[k]) if isinstance(r[k], float) else str(r[k]) for k in REPORT_COLUMNS) + " |")
    out.with_suffix(".md").write_text("\n".join(md) + "\n", encoding="utf-8")
    _print_summary({"rows": len(rows), "output": str(out)})
    return EXIT_OK


def cmd_configure(args: argparse.Namespace, cfg: RunConfig | None) -> int:
    path, created = ensure_run_config()
    if created:
        print("Created %s. Edit it (paths, features, model, seed)." % path)
    else:
        print("%s already exists." % path)
    return EXIT_OK


# --- parser ---


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="Config YAML (default: $MISINFO_CONFIG_DIR/misinfo.yaml or config/misinfo.yaml)")
    common.add_argument("--seed", type=int, help="Override the run seed")
    common.add_argument("--n-jobs", dest="n_jobs", type=int, help="Worker threads for forests and grid search")
    common.add_argument("--log-level", dest="log_level", choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="Logging level (stderr)")

    parser = _Parser(
        prog="misinfo",
        description="Arabic misinformation detection: preprocessing, embeddings, classifiers and evaluation.",
        epilog=_EPILOG.strip(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="store_true", help="Show version")
    sub = parser.add_subparsers(dest="command", metavar="<command>", help="Command to run")

    p = sub.add_parser("preprocess", parents=[common], help="Clean, normalize, tokenize, stop-filter and stem a corpus")
    p.add_argument("--input", required=True, help="Corpus (JSONL or TSV)")
    p.add_argument("--output", required=True, help="Token JSONL")
    p.add_argument("--format", choices=["jsonl", "tsv"])
    p.add_argument("--stemmer", choices=["light", "none"])
    p.add_argument("--no-stoplist", action="store_true", help="Keep stop words")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("embed-train", parents=[common], help="Train CBOW or FastText word vectors on a token file")
    p.add_argument("--input", required=True, help="Token JSONL")
    p.add_argument("--output", required=True, help="Text vector file")
    p.add_argument("--mode", choices=["cbow", "fasttext"])
    p.add_argument("--dim", type=int)
    p.add_argument("--window", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--min-count", dest="min_count", type=int)
    p.add_argument("--negatives", type=int)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_embed_train)

    p = sub.add_parser("split", parents=[common], help="Write stratified train/test (or train/valid/test) files")
    p.add_argument("--input", required=True, help="Corpus (JSONL or TSV)")
    p.add_argument("--output-dir", dest="output_dir", required=True)
    p.add_argument("--fractions", help="Comma-separated, e.g. 0.8,0.2 or 0.6,0.2,0.2")
    p.add_argument("--format", choices=["jsonl", "tsv"])
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("featurize", parents=[common], help="Write TF-IDF vectors (libsvm) or tweet-vector matrices")
    p.add_argument("--input", required=True, help="Token JSONL")
    p.add_argument("--output-dir", dest="output_dir", required=True)
    p.add_argument("--features", choices=FEATURE_KINDS)
    p.add_argument("--embeddings", help="Vector file for cbow/fasttext features")
    p.add_argument("--vocab", help="Reuse a fitted vocabulary TSV instead of fitting one")
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("train", parents=[common], help="Split, featurize, train and evaluate on the held-out test part")
    p.add_argument("--input", required=True, help="Labelled token JSONL")
    p.add_argument("--test", help="Labelled token JSONL used as test set instead of splitting --input")
    p.add_argument("--model", choices=[*CLASSICAL_MODELS, "cnn"])
    p.add_argument("--features", choices=FEATURE_KINDS)
    p.add_argument("--params", help="JSON file with hyperparameters")
    p.add_argument("--embeddings", help="Vector file for cbow/fasttext features or CNN initialization")
    p.add_argument("--embed-init", dest="embed_init", choices=["random", "cbow", "fasttext"], help="CNN embedding initialization")
    p.add_argument("--loss", choices=sorted(LOSS_FLAGS), help="CNN loss: ce (cross-entropy) or auc (pairwise surrogate)")
    p.add_argument("--epochs", type=int, help="CNN epochs")
    p.add_argument("--output-dir", dest="output_dir")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("grid-search", parents=[common], help="Stratified k-fold AUC grid search")
    p.add_argument("--input", required=True, help="Labelled token JSONL")
    p.add_argument("--model", choices=CLASSICAL_MODELS)
    p.add_argument("--features", choices=FEATURE_KINDS)
    p.add_argument("--grid", required=True, help="JSON file: parameter name -> list of values")
    p.add_argument("--embeddings")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--output-dir", dest="output_dir")
    p.set_defaults(func=cmd_grid_search)

    p = sub.add_parser("evaluate", parents=[common], help="Score a saved model on a labelled token file")
    p.add_argument("--model", required=True, help="model.json or model.cnn")
    p.add_argument("--input", required=True, help="Labelled token JSONL")
    p.add_argument("--embeddings", help="Override the vector file recorded with the model")
    p.add_argument("--threshold", type=float)
    p.add_argument("--predictions", help="Also write per-tweet scores and labels (CSV)")
    p.add_argument("--output-dir", dest="output_dir")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("stats", parents=[common], help="Dataset statistics (JSON on stdout)")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=["jsonl", "tsv"])
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("report", parents=[common], help="Combine metrics JSON files into one comparison table")
    p.add_argument("inputs", nargs="+", help="metrics.json files")
    p.add_argument("--output", required=True, help="CSV path; a markdown table is written next to it")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("configure", help="Create config/misinfo.yaml from the example if missing")
    p.set_defaults(func=cmd_configure)
    return parser


def _setup_logging(level: str) -> None:
    logging.basicConfig(
        level=getattr(logging, level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print("error: %s" % e, file=sys.stderr)
        return EXIT_USAGE
    if args.version:
        print(__version__)
        return EXIT_OK
    if args.command is None:
        parser.print_help()
        return EXIT_OK

    func: Callable[[argparse.Namespace, Any], int] = args.func
    try:
        if func is cmd_configure:
            return cmd_configure(args, None)
        cfg = _run_config(args)
        _setup_logging(cfg.log_level)
        return func(args, cfg)
    except UsageError as e:
        print("error: %s" % e, file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ConfigError, TrainingError, ValidationError, OSError) as e:
        print("error: %s" % e, file=sys.stderr)
        return EXIT_DATA
    except MisinfoError as e:
        print("error: %s" % e, file=sys.stderr)
        return EXIT_DATA
    except Exception as e:  # noqa: BLE001
        logger.debug("internal error", exc_info=True)
        print("internal error: %s: %s" % (type(e).__name__, e), file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
