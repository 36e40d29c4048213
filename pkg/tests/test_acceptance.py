"""Acceptance gate: one test per headline guarantee of the toolkit.

Each test asserts its guarantee at the stated tolerance and runtime bound
and prints a single summary line (visible with ``pytest -s`` or ``-rP``),
so the suite output doubles as a checklist.  The synthetic-corpus test at
the end trains three variants at full size and dominates the runtime.
"""

import filecmp
import random
import time

import numpy as np
import pytest

from forumtag.agreement import MergePolicy, agreement_table, build_dataset
from forumtag.cli import main
from forumtag.corpus import (
    AnnotatedMention,
    ResourceType,
    Sentence,
    Span,
    Tag,
    Token,
    bio_decode,
    bio_encode,
)
from forumtag.crf import brute_force_oracle, log_partition, viterbi_decode
from forumtag.evaluation import (
    ErrorCategory,
    categorize_prediction,
    f1_from_pr,
    micro_prf,
    oov_report,
    subset_token_recall,
)
from forumtag.synth import SynthSpec, generate, write_corpus
from forumtag.tagger import (
    VARIANTS,
    TaggerConfig,
    gradcheck_model,
    train,
    train_variant,
)


def _ok(label: str, detail: str) -> None:
    print(f"PASS {label}: {detail}")


# ---------------------------------------------------------------------------
# 1. Agreement arithmetic on a frozen reference table


def test_agreement_table_reproduces_reference_counts():
    """Fixed per-type (g1, g2, agreed) counts give known unions and p_pos."""
    start = time.monotonic()
    table = agreement_table(
        {
            ResourceType.ASSESSMENTS: {"g1": 8047, "g2": 8520, "agreed": 5451},
            ResourceType.EXAMS: {"g1": 1891, "g2": 3624, "agreed": 1146},
            ResourceType.VIDEOS: {"g1": 1852, "g2": 3037, "agreed": 1236},
            ResourceType.COURSEWARES: {"g1": 3281, "g2": 4286, "agreed": 1557},
        }
    )
    expected = {
        "Assessments": (11116, 0.658),
        "Exams": (4369, 0.416),
        "Videos": (3653, 0.506),
        "Coursewares": (6010, 0.412),
        "Total": (25148, 0.544),
    }
    for name, (union, p_pos) in expected.items():
        assert table[name]["union"] == union, name
        assert abs(table[name]["p_pos"] - p_pos) <= 0.001, (
            f"{name}: p_pos {table[name]['p_pos']:.4f} vs {p_pos}"
        )
    elapsed = time.monotonic() - start
    assert elapsed < 1.0
    _ok(
        "agreement table",
        f"5 unions exact, 5 p_pos within 0.001, {elapsed:.3f}s",
    )


# ---------------------------------------------------------------------------
# 2. Micro metric identities


def test_micro_metrics_match_hand_computations():
    a_b, a_i = Tag.begin(ResourceType.ASSESSMENTS), Tag.inside(ResourceType.ASSESSMENTS)
    v_b = Tag.begin(ResourceType.VIDEOS)
    e_b = Tag.begin(ResourceType.EXAMS)
    c_b = Tag.begin(ResourceType.COURSEWARES)

    # TP=2 (tokens 0-1), token 2 missed, token 3 spurious, token 4 wrong
    # type (counts as both FP and FN): P = R = 2/4.
    gold = [[a_b, a_i, v_b, Tag.O, e_b, Tag.O]]
    pred = [[a_b, a_i, Tag.O, c_b, v_b, Tag.O]]
    assert micro_prf(gold, pred) == (0.5, 0.5, 0.5)

    # TP=3, FP=1, FN=2.
    gold = [[a_b, a_i, a_i, v_b, e_b]]
    pred = [[a_b, a_i, a_i, Tag.O, c_b]]
    p, r, f1 = micro_prf(gold, pred)
    assert p == 0.75 and r == 0.6
    assert f1 == 2.0 * 0.75 * 0.6 / (0.75 + 0.6)

    combined = f1_from_pr(0.7291, 0.7920)
    assert combined == pytest.approx(0.7592, abs=0.0005)
    _ok(
        "micro metrics",
        f"hand counts exact; f1(0.7291, 0.7920) = {combined:.4f} within 0.0005 of 0.7592",
    )


# ---------------------------------------------------------------------------
# 3. CRF dynamic programs against exhaustive enumeration


def test_crf_dynamic_programs_match_enumeration():
    rng = np.random.default_rng(33)
    start = time.monotonic()
    worst = 0.0
    for _ in range(200):
        t_len = int(rng.integers(1, 6))
        k = int(rng.integers(1, 6))
        emissions = rng.normal(size=(t_len, k))
        transitions = rng.normal(size=(k + 2, k + 2))
        ref_log_z, ref_path, _ref_score = brute_force_oracle(emissions, transitions)
        log_z = float(log_partition(emissions, transitions).data)
        worst = max(worst, abs(log_z - ref_log_z))
        assert abs(log_z - ref_log_z) < 1e-8, f"T={t_len} K={k}"
        path, _score = viterbi_decode(emissions, transitions)
        assert path == ref_path, f"T={t_len} K={k}"
    elapsed = time.monotonic() - start
    assert elapsed < 30.0
    _ok(
        "crf oracle",
        f"200 instances, worst |dlogZ| {worst:.2e} < 1e-8, paths exact, {elapsed:.1f}s",
    )


# ---------------------------------------------------------------------------
# 4. Gradients of the full variant


def test_full_variant_gradients_match_finite_differences():
    """Every coordinate of every parameter, double precision, central diff."""
    start = time.monotonic()
    worst, per_param = gradcheck_model()
    elapsed = time.monotonic() - start
    assert worst < 1e-4, f"max relative error {worst:.3e}"
    assert elapsed < 60.0
    _ok(
        "gradient check",
        f"{len(per_param)} parameters, max rel err {worst:.2e} < 1e-4, {elapsed:.1f}s",
    )


# ---------------------------------------------------------------------------
# 5. Every variant overfits a small corpus


def _toy_corpus(n=50, seed=0):
    spec = SynthSpec(
        threads=max(8, n),
        mention_slots=2,
        seed=seed,
        vector_dim=8,
        anaphora_rate=0.0,
    )
    result = generate(spec)
    built = build_dataset(result.threads, result.gold, result.group2, MergePolicy.UNION)
    assert len(built.examples) >= n
    return built.examples[:n]


def _overfit_config(variant: str, seed=0) -> TaggerConfig:
    return TaggerConfig.for_variant(
        variant,
        word_dim=16,
        char_dim=8,
        char_hidden=8,
        hidden=24,
        context_hidden=16,
        attn_dim=8,
        context_cap=3,
        batch_size=8,
        learning_rate=0.5 if variant == "crf" else 0.02,
        max_epochs=200,
        val_fraction=0.0,
        patience=200,
        stop_f1=0.99,
        seed=seed,
    )


def test_every_variant_overfits_toy_corpus():
    start = time.monotonic()
    examples = _toy_corpus()
    gold = [list(ex.tags) for ex in examples]
    scores = {}
    preds_by_variant = {}
    for variant in VARIANTS:
        result = train_variant(variant, examples, _overfit_config(variant))
        assert len(result.log) <= 200
        preds = [
            result.model.tag_sentence(ex.sentence, ex.context).tags for ex in examples
        ]
        _p, _r, f1 = micro_prf(gold, preds)
        assert f1 >= 0.99, f"{variant}: train F1 {f1:.4f} after {len(result.log)} epochs"
        scores[variant] = f1
        preds_by_variant[variant] = preds

    repeat = train_variant("blstm", examples, _overfit_config("blstm"))
    repeat_preds = [
        repeat.model.tag_sentence(ex.sentence, ex.context).tags for ex in examples
    ]
    assert repeat_preds == preds_by_variant["blstm"], "same seed, different tags"

    elapsed = time.monotonic() - start
    assert elapsed < 600.0
    listing = ", ".join(f"{v}={scores[v]:.3f}" for v in VARIANTS)
    _ok("overfit", f"{listing}; repeat run identical; {elapsed:.0f}s")


# ---------------------------------------------------------------------------
# 7. BIO roundtrip and outcome partition under fuzzing


def _random_mentions(rng, n_tokens, sentence_index=0, thread_id="t"):
    mentions = []
    pos = 0
    while pos < n_tokens:
        if rng.random() < 0.35:
            length = rng.randint(1, min(3, n_tokens - pos))
            rtype = rng.choice(list(ResourceType))
            mentions.append(
                AnnotatedMention(
                    thread_id, Span(sentence_index, pos, pos + length), rtype, ""
                )
            )
            pos += length + 1
        else:
            pos += 1
    return mentions


def test_bio_roundtrip_and_outcome_partition():
    rng = random.Random(7)
    start = time.monotonic()
    for _ in range(10_000):
        n = rng.randint(1, 14)
        tokens = []
        pos = 0
        for i in range(n):
            text = f"w{i}"
            tokens.append(Token(text, pos, pos + len(text)))
            pos += len(text) + 1
        sentence = Sentence(tuple(tokens), 0, 0)
        mentions = _random_mentions(rng, n)
        tags = bio_encode(sentence, mentions)
        decoded, warnings = bio_decode(tags, 0, "t")
        assert not warnings
        assert [(m.span.start, m.span.end, m.rtype) for m in decoded] == [
            (m.span.start, m.span.end, m.rtype) for m in mentions
        ]

    for _ in range(10_000):
        n = rng.randint(1, 14)
        gold = _random_mentions(rng, n)
        pred = _random_mentions(rng, n)
        cases = categorize_prediction(gold, pred)
        gold_seen = [id(c.gold) for c in cases if c.gold is not None]
        pred_seen = [id(c.pred) for c in cases if c.pred is not None]
        assert sorted(gold_seen) == sorted(id(m) for m in gold)
        assert sorted(pred_seen) == sorted(id(m) for m in pred)
        assert all(isinstance(c.category, ErrorCategory) for c in cases)
    elapsed = time.monotonic() - start
    _ok(
        "bio roundtrip / outcome partition",
        f"10000 roundtrips exact, 10000 partitions exhaustive and exclusive, {elapsed:.1f}s",
    )


# ---------------------------------------------------------------------------
# 8. End-to-end determinism of the command line


def _run_pipeline(root):
    synth = root / "synth"
    corpus = root / "corpus.tsv"
    model = root / "model.npz"
    log = root / "train.jsonl"
    report = root / "report.json"
    assert main([
        "synth-gen", "--out-dir", str(synth), "--threads", "12", "--slots", "3",
        "--vector-dim", "8", "--seed", "5",
    ]) == 0
    assert main([
        "dataset-build",
        "--threads", str(synth / "threads.jsonl"),
        "--g1", str(synth / "annotations_g1.tsv"),
        "--g2", str(synth / "annotations_g2.tsv"),
        "--policy", "form-l",
        "--out", str(corpus),
    ]) == 0
    assert main([
        "train", "--corpus", str(corpus), "--variant", "blstm-crf",
        "--model", str(model), "--log", str(log),
        "--word-dim", "8", "--hidden", "8", "--max-epochs", "2",
        "--val-fraction", "0", "--learning-rate", "0.05", "--seed", "0",
    ]) == 0
    assert main([
        "evaluate", "--corpus", str(corpus), "--model", str(model),
        "--pretrained", str(synth / "vectors.txt"),
        "--out", str(report),
    ]) == 0
    return {"report": report, "log": log, "corpus": corpus}


def test_identical_seeds_give_identical_reports(tmp_path):
    first = _run_pipeline(tmp_path / "a")
    second = _run_pipeline(tmp_path / "b")
    for name in ("corpus", "log", "report"):
        assert filecmp.cmp(first[name], second[name], shallow=False), name
    _ok(
        "determinism",
        "two pipeline runs: corpus, training log, and report byte-identical",
    )


# ---------------------------------------------------------------------------
# 6. Encoder ablations move their targeted subsets (the long pole: trains
#    three variants on a 2000/400 synthetic split)

_EXPERIMENT_SPEC = dict(
    threads=600,
    seed=11,
    context_window=2,
    vector_dim=24,
    oov_rate=0.3,
    anaphora_rate=0.3,
    anaphora_valid_rate=0.75,
)

_EXPERIMENT_DIMS = dict(
    word_dim=24,
    char_dim=12,
    char_hidden=12,
    hidden=48,
    context_hidden=16,
    attn_dim=16,
    context_cap=2,
    batch_size=8,
    learning_rate=0.02,
    val_fraction=0.0,
    patience=1000,
    seed=0,
)

_EXPERIMENT_EPOCHS = {"blstm-crf": 25, "blstm-crf-ce": 25, "blstm-crf-ce-ca": 25}


def test_char_and_context_encoders_lift_targeted_subsets(tmp_path):
    start = time.monotonic()
    spec = SynthSpec(**_EXPERIMENT_SPEC)
    result = generate(spec)
    built = build_dataset(result.threads, result.gold, result.group2, MergePolicy.UNION)
    assert len(built.examples) >= 2400
    train_ex, test_ex = built.examples[:2000], built.examples[2000:2400]
    paths = write_corpus(tmp_path / "synth", result)
    vocab = set(result.vector_words)
    kinds = {
        (m["thread_id"], m["sentence"], m["start"], m["end"]): m["kind"]
        for m in result.meta["mentions"]
    }

    def anaphoric(ex, mention):
        key = (ex.thread_id, mention.span.sentence_index,
               mention.span.start, mention.span.end)
        return kinds.get(key) == "anaphoric"

    scores = {}
    for variant, epochs in _EXPERIMENT_EPOCHS.items():
        config = TaggerConfig.for_variant(
            variant, max_epochs=epochs, **_EXPERIMENT_DIMS
        )
        trained = train(train_ex, config, paths["vectors"])
        cache = {}
        preds = [
            trained.model.tag_sentence(ex.sentence, ex.context, cache).tags
            for ex in test_ex
        ]
        scores[variant] = {
            "oov_exact": oov_report(test_ex, preds, vocab).oov.ratio,
            "anaphora_recall": subset_token_recall(test_ex, preds, anaphoric),
        }

    oov_gain = scores["blstm-crf-ce"]["oov_exact"] - scores["blstm-crf"]["oov_exact"]
    ana_gain = (
        scores["blstm-crf-ce-ca"]["anaphora_recall"]
        - scores["blstm-crf-ce"]["anaphora_recall"]
    )
    elapsed = time.monotonic() - start
    assert oov_gain >= 0.05, f"char encoder OOV gain {oov_gain:.3f} < 0.05: {scores}"
    assert ana_gain >= 0.05, (
        f"context attention anaphora gain {ana_gain:.3f} < 0.05: {scores}"
    )
    assert elapsed < 3600.0
    _ok(
        "encoder ablations",
        f"OOV exact-match gain {oov_gain:.3f} >= 0.05, "
        f"anaphora recall gain {ana_gain:.3f} >= 0.05, {elapsed:.0f}s",
    )
