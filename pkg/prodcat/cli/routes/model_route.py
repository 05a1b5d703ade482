from pathlib import Path

import numpy as np
import pandas as pd

from ...corpus import LEVELS, label_space
from ...embedding_io import build_matrix, load_embedding_file
from ...losses_metrics import EvalReport, focal_curve
from ...models import ModelCheckpoint, build_model
from ...train import encode_split, evaluate as evaluate_checkpoint, majority_baseline, predict as predict_text
from ...train import retrain_with_val, train as fit
from ...utils.errors import EXIT_NUMERICAL, DataValidationError, InputFileError, UsageError
from ...utils.logger import logger
from ...utils.responses import fail_response, success_response
from ...vocab import Vocabulary, build_vocabulary
from ..router import CommandRouter, arg, read_input

router = CommandRouter(tag="model")

HEAD_KEYS = ("seg_f1", "cat_f1", "sub_f1", "prod_f1")


def _f1_metrics(report: EvalReport) -> dict:
    return {key: f1 for key, f1 in zip(HEAD_KEYS, report.head_f1())}


def _parse_floats(flag: str, value: str):
    try:
        values = [float(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"{flag} expects comma-separated numbers, got {value!r}") from None
    if not values:
        raise UsageError(f"{flag} needs at least one value")
    return values


@router.command(
    "train",
    help="train a classifier and write a checkpoint",
    arguments=[
        arg("--model", dest="arch", setting="model.arch", choices=("bilstm", "transformer"),
            help="architecture"),
        arg("--loss", setting="train.loss", choices=("ce", "focal"), help="training loss"),
        arg("--train", dest="train_path", required=True, help="cleaned training CSV"),
        arg("--val", dest="val_path", help="cleaned validation CSV; enables early stopping"),
        arg("--out", required=True, help="checkpoint to write"),
        arg("--vocab", help="existing vocabulary file; built from --train when omitted"),
        arg("--embeddings", help="pre-trained word vectors (word2vec/GloVe text)"),
        arg("--freeze-embeddings", action="store_const", const=True, default=None,
            setting="train.freeze_embeddings", help="keep the embedding matrix fixed"),
        arg("--history", help="per-epoch history CSV"),
        arg("--retrain-with-val", action="store_true",
            help="retrain from scratch on train+val for the best epoch count"),
        arg("--epochs", type=int, setting="train.max_epochs", help="maximum epochs"),
        arg("--lr", type=float, setting="train.lr", help="learning rate"),
        arg("--batch-size", type=int, setting="train.batch_size", help="mini-batch size"),
        arg("--precision", type=int, setting="train.precision", help="32 or 64"),
        arg("--clip-norm", type=float, setting="train.clip_norm", help="global gradient norm cap"),
    ],
)
def train(args, settings):
    """Fit on --train, select the best epoch on --val, save the checkpoint"""
    arch = settings.model.arch
    cfg = settings.train_config(arch)
    dtype = np.float64 if cfg.precision == 64 else np.float32
    logger.info("Train request received: arch=%s loss=%s train=%s", arch, cfg.loss, args.train_path)

    train_corpus, _ = read_input(settings, args.train_path)
    if args.vocab:
        vocab = Vocabulary.load(args.vocab, max_words=settings.vocab.max_words)
    else:
        vocab = build_vocabulary(train_corpus.texts(), max_words=settings.vocab.max_words)
    labels = label_space(train_corpus)
    max_len = settings.vocab.max_len
    train_split = encode_split(train_corpus, vocab, labels, max_len, threads=settings.threads)

    val_split = None
    skipped = 0
    if args.val_path:
        val_corpus, _ = read_input(settings, args.val_path)
        known, _ = labels.split_known(val_corpus)
        skipped = len(val_corpus) - len(known)
        if skipped:
            logger.warning("%s validation records have labels absent from training and were skipped", skipped)
        val_split = encode_split(known, vocab, labels, max_len, threads=settings.threads)
    elif args.retrain_with_val:
        raise UsageError("--retrain-with-val needs --val")

    embedding = None
    coverage = None
    embed_dim = None
    if args.embeddings:
        aligned = build_matrix(load_embedding_file(args.embeddings), vocab, seed=settings.seed)
        embedding, coverage, embed_dim = aligned.matrix, aligned.coverage, aligned.shape[1]

    config = settings.resolve_model(vocab_size=len(vocab), max_len=max_len,
                                    head_sizes=labels.sizes(), embed_dim=embed_dim)
    model = build_model(config, seed=settings.seed, dtype=dtype, embedding=embedding)
    result = fit(model, train_split, val_split, cfg, vocab, labels, norm=settings.norm)
    best_val_f1 = None
    if val_split is not None and result.best_epoch:
        best_val_f1 = next(r.val_macro_f1_mean for r in result.history if r.epoch == result.best_epoch)

    if args.retrain_with_val and not result.diverged:
        epochs = result.best_epoch or result.epochs_run
        fresh = build_model(config, seed=settings.seed, dtype=dtype, embedding=embedding)
        retrained = retrain_with_val(fresh, train_split, val_split, cfg, vocab, labels, epochs,
                                     norm=settings.norm)
        retrained.checkpoint.meta["retrained_epochs"] = epochs
        retrained.history = result.history
        result = retrained

    result.checkpoint.save(args.out)
    if args.history:
        result.write_history(args.history)

    data = {
        "out": args.out, "arch": arch, "loss": cfg.loss, "optimizer": cfg.optimizer,
        "parameters": model.num_parameters(), "vocab_size": len(vocab), "vocab_sha256": vocab.digest(),
        "labels": dict(zip(LEVELS, labels.sizes())), "best_epoch": result.best_epoch,
        "epochs_run": result.epochs_run, "skipped_validation_records": skipped,
    }
    if coverage is not None:
        data["embedding_coverage"] = coverage
    if result.diverged:
        return fail_response(EXIT_NUMERICAL, "training diverged; last good parameters were saved", data)

    metrics = {"epochs": result.epochs_run, "best_epoch": result.best_epoch}
    if best_val_f1 is not None:
        metrics["val_macro_f1"] = best_val_f1
    return success_response("train", "Model trained successfully", data=data, metrics=metrics)


@router.command(
    "evaluate",
    help="per-head macro-F1 of a checkpoint on a labeled CSV",
    arguments=[
        arg("--model", dest="checkpoint", required=True, help="checkpoint file"),
        arg("--data", required=True, help="cleaned labeled CSV"),
        arg("--report", help="JSON report to write"),
        arg("--vocab", help="vocabulary file that must match the checkpoint"),
        arg("--baseline", action="store_true", help="also score the majority-class baseline"),
        arg("--train", dest="train_path", help="training CSV for --baseline"),
    ],
)
def evaluate(args, settings):
    if args.baseline and not args.train_path:
        raise UsageError("--baseline needs --train")
    digest = Vocabulary.load(args.vocab).digest() if args.vocab else None
    checkpoint = ModelCheckpoint.load(args.checkpoint, vocab_digest=digest)
    corpus, _ = read_input(settings, args.data)
    report, unseen = evaluate_checkpoint(checkpoint, corpus, threads=settings.threads)
    if args.report:
        out = Path(args.report)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(report.to_json(), encoding="utf-8")

    data = {"report": args.report, "n_samples": report.n_samples, "macro_f1_mean": report.macro_f1_mean,
            **_f1_metrics(report), "unseen_labels": [list(u) for u in unseen]}
    if args.baseline:
        train_corpus, _ = read_input(settings, args.train_path)
        baseline = majority_baseline(train_corpus, corpus, checkpoint.labels)
        data["baseline"] = {"macro_f1_mean": baseline.macro_f1_mean, **_f1_metrics(baseline)}
    return success_response("evaluate", "Checkpoint evaluated", data=data, metrics=_f1_metrics(report))


@router.command(
    "predict",
    help="classify one product description",
    arguments=[
        arg("--model", dest="checkpoint", required=True, help="checkpoint file"),
        arg("--text", required=True, help="raw description"),
    ],
)
def predict(args, settings):
    checkpoint = ModelCheckpoint.load(args.checkpoint)
    prediction = predict_text(checkpoint, args.text)
    if not prediction.classifiable:
        logger.warning("text normalized to nothing: %r", args.text)
        return success_response("predict", "Text is unclassifiable", data=prediction.as_dict(),
                                metrics={"result": "unclassifiable"})
    metrics = {level: prediction.picks[level].label for level in LEVELS}
    return success_response("predict", "Text classified", data=prediction.as_dict(), metrics=metrics)


@router.command(
    "summarize",
    help="compare evaluation reports side by side",
    arguments=[
        arg("--reports", nargs="+", required=True, help="EvalReport JSON files"),
        arg("--out", help="optional CSV copy of the table"),
    ],
)
def summarize(args, settings):
    """One row per report: per-head macro-F1 x100, one decimal"""
    rows = []
    for path in args.reports:
        source = Path(path)
        if not source.is_file():
            raise InputFileError(f"report not found: {source}", source)
        try:
            report = EvalReport.from_json(source.read_text(encoding="utf-8"))
        except ValueError as e:
            raise DataValidationError(f"{source} is not an evaluation report", {"path": str(source),
                                      "error": str(e).splitlines()[0]}) from None
        rows.append([source.stem] + [round(f1 * 100, 1) for f1 in report.head_f1()]
                    + [round(report.macro_f1_mean * 100, 1)])

    frame = pd.DataFrame(rows, columns=["run", *LEVELS, "mean"])
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(args.out, index=False, float_format="%.1f", lineterminator="\n")
    table = frame.to_string(index=False, float_format=lambda v: f"{v:.1f}")
    return success_response("summarize", "Reports summarized",
                            data={"table": table.splitlines(), "rows": frame.to_dict(orient="records")},
                            metrics={"reports": len(rows)})


@router.command(
    "focal-curve",
    help="tabulate focal loss against p_t for several gammas",
    arguments=[
        arg("--gammas", default="0,0.5,1,2,5", help="comma-separated focusing parameters"),
        arg("--points", type=int, default=100, help="number of p_t samples in (0, 1]"),
        arg("--alpha", type=float, default=1.0, help="balancing factor"),
        arg("--out", help="optional CSV with one column per gamma"),
    ],
)
def focal_curve_table(args, settings):
    gammas = _parse_floats("--gammas", args.gammas)
    if any(g < 0 for g in gammas):
        raise UsageError("--gammas must be >= 0")
    if args.points < 2:
        raise UsageError("--points must be >= 2")
    if not 0.0 < args.alpha <= 1.0:
        raise UsageError("--alpha must be in (0, 1]")
    p = np.linspace(1.0 / args.points, 1.0, args.points)
    curves = focal_curve(p, gammas, alpha=args.alpha)
    frame = pd.DataFrame({"p_t": p, **{f"gamma_{g:g}": curves[i] for i, g in enumerate(gammas)}})
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(args.out, index=False, float_format="%.10g", lineterminator="\n")
    at_half = {f"gamma_{g:g}": float(curves[i][np.argmin(np.abs(p - 0.5))]) for i, g in enumerate(gammas)}
    return success_response("focal-curve", "Focal loss curves computed",
                            data={"out": args.out, "gammas": gammas, "points": args.points,
                                  "alpha": args.alpha, "loss_near_half": at_half},
                            metrics={"gammas": len(gammas), "points": args.points})
