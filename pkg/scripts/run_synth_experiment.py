#!/usr/bin/env python3
"""Ablation comparison on a synthetic corpus.

Trains BLSTM-CRF, +CE, and +CE-CA on one generated corpus and reports,
per variant: test micro-F1, the exact-match ratio on out-of-vocabulary
mentions (what the character encoder should help with), and token recall
on anaphoric mentions (what context attention should help with).
"""

import argparse
import json
import tempfile
import time

from forumtag.agreement import MergePolicy, build_dataset
from forumtag.encoders import read_vector_vocab
from forumtag.evaluation import micro_prf, oov_report, subset_token_recall
from forumtag.synth import SynthSpec, generate, write_corpus
from forumtag.tagger import TaggerConfig, train


def experiment_corpus(args):
    spec = SynthSpec(
        threads=args.threads,
        oov_rate=args.oov_rate,
        anaphora_rate=args.anaphora_rate,
        anaphora_valid_rate=args.anaphora_valid_rate,
        context_window=2,
        vector_dim=args.word_dim,
        seed=args.corpus_seed,
    )
    result = generate(spec)
    built = build_dataset(result.threads, result.gold, result.group2, MergePolicy.UNION)
    examples = built.examples
    need = args.train_sentences + args.test_sentences
    if len(examples) < need:
        raise SystemExit(
            f"corpus too small: {len(examples)} example sentences, need {need}; "
            f"raise --threads"
        )
    train_ex = examples[: args.train_sentences]
    test_ex = examples[args.train_sentences : need]
    paths = write_corpus(tempfile.mkdtemp(prefix="synthexp-"), result)
    kinds = {
        (m["thread_id"], m["sentence"], m["start"], m["end"]): m["kind"]
        for m in result.meta["mentions"]
    }
    return train_ex, test_ex, paths, kinds


def variant_config(variant, args):
    return TaggerConfig.for_variant(
        variant,
        word_dim=args.word_dim, char_dim=12, char_hidden=12, hidden=48,
        context_hidden=16, attn_dim=16, context_cap=2, batch_size=8,
        learning_rate=args.learning_rate, max_epochs=args.epochs,
        val_fraction=0.0, patience=args.epochs, seed=args.seed,
    )


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--threads", type=int, default=600)
    ap.add_argument("--train-sentences", type=int, default=2000)
    ap.add_argument("--test-sentences", type=int, default=400)
    ap.add_argument("--oov-rate", type=float, default=0.3)
    ap.add_argument("--anaphora-rate", type=float, default=0.3)
    ap.add_argument("--anaphora-valid-rate", type=float, default=0.75)
    ap.add_argument("--epochs", type=int, default=25)
    ap.add_argument("--learning-rate", type=float, default=0.02)
    ap.add_argument("--word-dim", type=int, default=24)
    ap.add_argument("--seed", type=int, default=0, help="training seed")
    ap.add_argument("--corpus-seed", type=int, default=11)
    ap.add_argument(
        "--variants", nargs="+",
        default=["blstm-crf", "blstm-crf-ce", "blstm-crf-ce-ca"],
    )
    ap.add_argument("--json", action="store_true")
    args = ap.parse_args()

    train_ex, test_ex, paths, kinds = experiment_corpus(args)
    vocab = read_vector_vocab(paths["vectors"])

    def kind_of(ex, mention):
        key = (ex.thread_id, mention.span.sentence_index, mention.span.start, mention.span.end)
        return kinds.get(key)

    rows = []
    for variant in args.variants:
        config = variant_config(variant, args)
        start = time.time()
        result = train(train_ex, config, paths["vectors"])
        took = time.time() - start
        cache = {}
        preds = [
            result.model.tag_sentence(ex.sentence, ex.context, cache).tags
            for ex in test_ex
        ]
        _p, _r, f1 = micro_prf([list(ex.tags) for ex in test_ex], preds)
        oov = oov_report(test_ex, preds, vocab)
        anaphora = subset_token_recall(
            test_ex, preds, lambda ex, m: kind_of(ex, m) == "anaphoric"
        )
        rows.append(
            {
                "variant": variant,
                "test_f1": round(f1, 4),
                "oov_exact": round(oov.oov.ratio, 4),
                "in_vocab_exact": round(oov.in_vocab.ratio, 4),
                "anaphora_recall": round(anaphora, 4),
                "epochs": len(result.log),
                "seconds": round(took, 1),
            }
        )
        if not args.json:
            r = rows[-1]
            print(
                f"{variant:<16} F1 {r['test_f1']:.4f}  "
                f"oov-exact {r['oov_exact']:.4f}  "
                f"anaphora-recall {r['anaphora_recall']:.4f}  "
                f"({r['seconds']:.0f}s)",
                flush=True,
            )
    if args.json:
        print(json.dumps({"corpus": paths, "results": rows}, indent=2))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
