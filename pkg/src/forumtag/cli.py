"""Command-line interface.

Subcommands cover the whole pipeline: splitting raw posts into threads,
agreement scoring, gold-corpus construction, training, evaluation, tagging
new threads, error analysis, gradient verification, and synthetic corpus
generation.  Exit codes: 0 success, 1 input/validation error, 2 internal
error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import traceback

import numpy as np

from . import __version__
from .agreement import (
    AgreementUndefinedError,
    MergePolicy,
    agreement_report,
    build_dataset,
    read_annotations,
    write_report,
)
from .checkpoint import CheckpointError, load_checkpoint
from .corpus import (
    CorpusFormatError,
    SpanError,
    TaggedSentence,
    Thread,
    read_tagged_corpus,
    read_threads,
    split_sentences,
    unfold_thread,
    write_tagged_corpus,
    write_threads,
)
from .encoders import VectorFormatError, read_vector_vocab
from .evaluation import ErrorCategory, config_hash, evaluate
from .features import FeatureCrfModel
from .synth import SynthSpec, generate, write_corpus
from .tagger import (
    VARIANTS,
    TaggerConfig,
    TaggerModel,
    cross_validate,
    gradcheck_model,
    train_variant,
)


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


_CONFIG_FLAGS = {
    # flag/JSON name -> TaggerConfig field
    "learning_rate": "learning_rate",
    "batch_size": "batch_size",
    "max_epochs": "max_epochs",
    "patience": "patience",
    "val_fraction": "val_fraction",
    "context_cap": "context_cap",
    "word_dim": "word_dim",
    "char_dim": "char_dim",
    "char_hidden": "char_hidden",
    "hidden": "hidden",
    "context_hidden": "context_hidden",
    "l2": "l2",
    "stop_f1": "stop_f1",
}


def _load_config(args, variant=None) -> TaggerConfig:
    """Defaults, then config file, then variant switches, then flags."""
    cfg = TaggerConfig()
    if getattr(args, "config", None):
        with open(args.config, "r", encoding="utf-8") as fh:
            values = json.load(fh)
        known = {f.name for f in dataclasses.fields(TaggerConfig)}
        bad = sorted(set(values) - known)
        if bad:
            raise UsageError(f"unknown config fields in {args.config}: {bad}")
        cfg = dataclasses.replace(cfg, **values)
    if variant:
        switches = TaggerConfig.for_variant(variant)
        cfg = dataclasses.replace(
            cfg,
            use_crf=switches.use_crf,
            use_char_encoder=switches.use_char_encoder,
            use_context_attention=switches.use_context_attention,
        )
    for flag, field in _CONFIG_FLAGS.items():
        value = getattr(args, flag, None)
        if value is not None:
            cfg = dataclasses.replace(cfg, **{field: value})
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg.validate()


def _emit(args, payload: dict, text: str):
    if getattr(args, "json", False):
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        print(text, end="" if text.endswith("\n") else "\n")


# -- subcommand handlers ------------------------------------------------------


def cmd_corpus_build(args):
    threads = []
    with open(args.input, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"{args.input}:{lineno}: invalid JSON ({exc.msg})")
            if "thread_id" not in obj or "posts" not in obj:
                raise CorpusFormatError(
                    f"{args.input}:{lineno}: expected thread_id and posts"
                )
            posts = obj["posts"]
            if not isinstance(posts, list) or not all(isinstance(p, str) for p in posts):
                raise CorpusFormatError(
                    f"{args.input}:{lineno}: posts must be raw post strings"
                )
            split = [split_sentences(p) for p in posts]
            split = [s if s else [] for s in split]
            if not any(split):
                raise CorpusFormatError(
                    f"{args.input}:{lineno}: thread has no sentences after splitting"
                )
            threads.append(
                Thread(str(obj["thread_id"]), split, str(obj.get("course_id", "")))
            )
    write_threads(args.out, threads)
    n_sent = sum(len(p) for t in threads for p in t.posts)
    _emit(
        args,
        {"threads": len(threads), "sentences": n_sent},
        f"wrote {len(threads)} threads ({n_sent} sentences) to {args.out}",
    )
    return 0


def _format_agreement_table(table):
    lines = [
        f"{'type':<14}{'g1':>8}{'g2':>8}{'agreed':>8}{'union':>8}{'p_pos':>8}"
    ]
    for name, row in table.items():
        p = "n/a" if row["p_pos"] is None else f"{row['p_pos']:.3f}"
        lines.append(
            f"{name:<14}{row['g1']:>8}{row['g2']:>8}{row['agreed']:>8}"
            f"{row['union']:>8}{p:>8}"
        )
    return "\n".join(lines)


def cmd_agreement(args):
    g1 = read_annotations(args.g1, "g1")
    g2 = read_annotations(args.g2, "g2")
    report = agreement_report(g1, g2)
    if args.out:
        write_report(args.out, report)
    _emit(args, report, _format_agreement_table(report["table"]))
    return 0


def cmd_dataset_build(args):
    threads = read_threads(args.threads)
    g1 = read_annotations(args.g1, "g1")
    g2 = read_annotations(args.g2, "g2")
    policy = MergePolicy(args.policy)
    result = build_dataset(threads, g1, g2, policy)
    write_tagged_corpus(args.out, result.sentences)
    report = {
        "policy": policy.value,
        "sentences": len(result.sentences),
        "examples": len(result.examples),
        "gold_mentions": len(result.mentions),
        "union_arithmetic": result.counts.union_size,
        "agreement_cases": {
            "agreement": result.counts.ag,
            "type_disagreement": result.counts.td,
            "g1_only": result.counts.g1_only,
            "g2_only": result.counts.g2_only,
        },
        "table": agreement_report(g1, g2)["table"],
        "warnings": result.warnings,
    }
    if args.report:
        write_report(args.report, report)
    for w in result.warnings:
        print(f"warning: {w}", file=sys.stderr)
    _emit(
        args,
        report,
        f"wrote {len(result.sentences)} sentences "
        f"({len(result.examples)} with mentions, "
        f"{len(result.mentions)} gold mentions) to {args.out}",
    )
    return 0


def cmd_train(args):
    corpus = read_tagged_corpus(args.corpus)
    examples = [s for s in corpus if s.has_mention]
    if not examples:
        raise UsageError(f"{args.corpus}: no sentences with mentions to train on")
    config = _load_config(args, args.variant)
    if args.folds:
        scores = cross_validate(examples, config, args.folds, args.pretrained)
        payload = {
            "folds": [
                {"precision": p, "recall": r, "f1": f} for p, r, f in scores
            ],
            "mean_f1": float(np.mean([f for _p, _r, f in scores])),
        }
        text = "\n".join(
            f"fold {i}: P={p:.4f} R={r:.4f} F1={f:.4f}"
            for i, (p, r, f) in enumerate(scores)
        ) + f"\nmean F1: {payload['mean_f1']:.4f}"
        _emit(args, payload, text)
    result = train_variant(args.variant, examples, config, args.pretrained)
    result.model.save(args.model)
    if args.log:
        with open(args.log, "w", encoding="utf-8") as fh:
            for entry in result.log:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")
    fitted = result.fit
    summary = {
        "variant": args.variant,
        "examples": len(examples),
        "epochs_run": len(result.log),
        "best_epoch": fitted.best_epoch,
        "best_val_f1": fitted.best_val_f1,
        "val_is_train": fitted.val_is_train,
        "stopped": fitted.stopped,
        "model": args.model,
    }
    _emit(
        args,
        summary,
        f"trained {args.variant} on {len(examples)} examples; "
        f"best epoch {fitted.best_epoch} "
        f"(val F1 {fitted.best_val_f1:.4f}, {fitted.stopped}); saved {args.model}",
    )
    return 0


def _load_any_model(path):
    _tensors, config = load_checkpoint(path)
    kind = config.get("kind")
    if kind == "neural":
        return TaggerModel.load(path), config
    if kind == "feature-crf":
        return FeatureCrfModel.load(path), config
    raise CheckpointError(f"{path}: unknown model kind {kind!r}")


def _predict_corpus(model, examples):
    cache = {}
    preds = []
    for ex in examples:
        if isinstance(model, TaggerModel):
            preds.append(model.tag_sentence(ex.sentence, ex.context, cache).tags)
        else:
            preds.append(model.tag_sentence(ex.sentence).tags)
    return preds


def cmd_evaluate(args):
    corpus = read_tagged_corpus(args.corpus)
    examples = [s for s in corpus if s.has_mention]
    if not examples:
        raise UsageError(f"{args.corpus}: no sentences with mentions to evaluate")
    model, ckpt_config = _load_any_model(args.model)
    vocab = read_vector_vocab(args.pretrained) if args.pretrained else None
    preds = _predict_corpus(model, examples)
    report = evaluate(examples, preds, vocab, config_hash(ckpt_config))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(report.to_json() if args.json else report.to_text())
    _emit(args, report.to_dict(), report.to_text())
    return 0


def cmd_tag(args):
    threads = read_threads(args.threads)
    model, _config = _load_any_model(args.model)
    tagged = []
    attention_rows = []
    cache = {}
    for thread in threads:
        sentences = unfold_thread(thread)
        for i, sent in enumerate(sentences):
            context = tuple(sentences[:i])
            if isinstance(model, TaggerModel):
                pred = model.tag_sentence(sent, context, cache)
            else:
                pred = model.tag_sentence(sent)
            tagged.append(TaggedSentence(thread.thread_id, sent, tuple(pred.tags), context))
            if args.attention and pred.attention is not None:
                attention_rows.append(
                    {
                        "thread_id": thread.thread_id,
                        "sentence": sent.sentence_index,
                        "tokens": [t.text for t in sent.tokens],
                        "forward": [w.tolist() for w in pred.attention["forward"]],
                        "backward": [w.tolist() for w in pred.attention["backward"]],
                    }
                )
    write_tagged_corpus(args.out, tagged)
    if args.attention:
        with open(args.attention, "w", encoding="utf-8") as fh:
            for row in attention_rows:
                fh.write(json.dumps(row, sort_keys=True) + "\n")
    _emit(
        args,
        {"threads": len(threads), "sentences": len(tagged)},
        f"tagged {len(tagged)} sentences from {len(threads)} threads into {args.out}",
    )
    return 0


def cmd_analyze_errors(args):
    corpus = read_tagged_corpus(args.corpus)
    examples = [s for s in corpus if s.has_mention]
    if not examples:
        raise UsageError(f"{args.corpus}: no sentences with mentions to analyze")
    model, ckpt_config = _load_any_model(args.model)
    vocab = read_vector_vocab(args.pretrained) if args.pretrained else None
    preds = _predict_corpus(model, examples)
    report = evaluate(examples, preds, vocab, config_hash(ckpt_config))
    payload = {
        "errors": report.error_counts,
        "errors_by_type": report.error_counts_by_type,
    }
    lines = ["mention outcomes:"]
    total = sum(report.error_counts.values())
    for cat in ErrorCategory:
        n = report.error_counts.get(cat.value, 0)
        share = n / total if total else 0.0
        lines.append(f"  {cat.value:<22}{n:>6}  ({share:.1%})")
    if report.oov is not None:
        payload["oov"] = report.to_dict()["oov"]
        lines.append("")
        lines.append(
            f"out-of-vocabulary mentions exactly correct: "
            f"{report.oov.oov.correct}/{report.oov.oov.total} = {report.oov.oov.ratio:.4f}"
        )
    if args.out:
        write_report(args.out, payload)
    _emit(args, payload, "\n".join(lines))
    return 0


def cmd_gradcheck(args):
    config = None
    if args.variant != "blstm-crf-ce-ca" or args.config:
        config = _load_config(args, args.variant)
        config = dataclasses.replace(
            config,
            word_dim=8, char_dim=6, char_hidden=5, hidden=7,
            context_hidden=6, attn_dim=5, dtype="float64",
        ).validate()
    worst, per_param = gradcheck_model(config, sample=args.sample, seed=args.seed or 0)
    ok = worst < args.tolerance
    payload = {
        "max_relative_error": worst,
        "tolerance": args.tolerance,
        "passed": ok,
        "per_parameter": per_param,
    }
    lines = [
        f"{name:<24}{err:.3e}" for name, err in sorted(per_param.items())
    ]
    lines.append(f"max relative error {worst:.3e} ({'OK' if ok else 'FAIL'})")
    _emit(args, payload, "\n".join(lines))
    return 0 if ok else 1


def cmd_synth_gen(args):
    spec = SynthSpec(
        threads=args.threads,
        mention_slots=args.slots,
        oov_rate=args.oov_rate,
        anaphora_rate=args.anaphora_rate,
        anaphora_valid_rate=args.anaphora_valid_rate,
        distractor_rate=args.distractor_rate,
        perturbation=args.perturbation,
        context_window=args.context_window,
        vector_dim=args.vector_dim,
        seed=args.seed if args.seed is not None else 0,
    )
    result = generate(spec)
    paths = write_corpus(args.out_dir, result)
    payload = {"paths": paths, "counts": result.meta["counts"]}
    counts = result.meta["counts"]
    _emit(
        args,
        payload,
        f"generated {counts['threads']} threads, {counts['mentions']} mentions "
        f"({counts['by_kind']}) in {args.out_dir}",
    )
    return 0


# -- parser ------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="forumtag", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        p.add_argument("--seed", type=int, default=None, help="random seed")
        p.add_argument("--json", action="store_true", help="machine-readable output")
        if config:
            p.add_argument("--config", help="JSON file with config fields")

    p = sub.add_parser("corpus-build", help="split raw posts into sentence threads")
    p.add_argument("--input", required=True, help="JSONL with raw post strings")
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_corpus_build)

    p = sub.add_parser("agreement", help="score inter-annotator agreement")
    p.add_argument("--g1", required=True, help="first group standoff TSV")
    p.add_argument("--g2", required=True, help="second group standoff TSV")
    p.add_argument("--out", help="write the JSON report here")
    common(p)
    p.set_defaults(func=cmd_agreement)

    p = sub.add_parser("dataset-build", help="reconcile annotations into a corpus")
    p.add_argument("--threads", required=True)
    p.add_argument("--g1", required=True)
    p.add_argument("--g2", required=True)
    p.add_argument(
        "--policy",
        required=True,
        choices=[m.value for m in MergePolicy],
        help="form-m keeps agreed mentions, form-l keeps everything",
    )
    p.add_argument("--out", required=True)
    p.add_argument("--report", help="write a JSON build report here")
    common(p)
    p.set_defaults(func=cmd_dataset_build)

    p = sub.add_parser("train", help="train a tagger variant")
    p.add_argument("--corpus", required=True, help="tagged column file")
    p.add_argument("--variant", required=True, choices=list(VARIANTS))
    p.add_argument("--model", required=True, help="checkpoint output path")
    p.add_argument("--log", help="JSONL epoch log output path")
    p.add_argument("--pretrained", help="pretrained word vector file")
    p.add_argument("--folds", type=int, help="run k-fold cross-validation first")
    for flag in _CONFIG_FLAGS:
        p.add_argument(
            f"--{flag.replace('_', '-')}",
            dest=flag,
            type=float if flag in ("learning_rate", "val_fraction", "l2", "stop_f1") else int,
            default=None,
        )
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a model on a tagged corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--pretrained", help="vector file for OOV analysis")
    p.add_argument("--out", help="write the report here")
    common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("tag", help="tag raw threads with a trained model")
    p.add_argument("--threads", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--attention", help="JSONL dump of attention weights")
    common(p)
    p.set_defaults(func=cmd_tag)

    p = sub.add_parser("analyze-errors", help="mention-level error taxonomy")
    p.add_argument("--corpus", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--pretrained", help="vector file for OOV analysis")
    p.add_argument("--out", help="write the JSON report here")
    common(p)
    p.set_defaults(func=cmd_analyze_errors)

    p = sub.add_parser("gradcheck", help="verify model gradients numerically")
    p.add_argument("--variant", default="blstm-crf-ce-ca",
                   choices=[v for v in VARIANTS if v != "crf"])
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--sample", type=int, default=None,
                   help="probe at most this many coordinates per parameter")
    common(p)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("synth-gen", help="generate a synthetic corpus")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--threads", type=int, default=100)
    p.add_argument("--slots", type=int, default=4)
    p.add_argument("--oov-rate", type=float, default=0.3)
    p.add_argument("--anaphora-rate", type=float, default=0.3)
    p.add_argument("--anaphora-valid-rate", type=float, default=0.6)
    p.add_argument("--distractor-rate", type=float, default=0.3)
    p.add_argument("--perturbation", type=float, default=0.0)
    p.add_argument("--context-window", type=int, default=2)
    p.add_argument("--vector-dim", type=int, default=32)
    common(p, config=False)
    p.set_defaults(func=cmd_synth_gen)

    return parser


_VALIDATION_ERRORS = (
    UsageError,
    CorpusFormatError,
    SpanError,
    VectorFormatError,
    CheckpointError,
    AgreementUndefinedError,
    FileNotFoundError,
    IsADirectoryError,
    NotADirectoryError,
    PermissionError,
    ValueError,
)


def main(argv=None) -> int:
    try:
        parser = build_parser()
        args = parser.parse_args(argv)
        return args.func(args)
    except _VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
