"""Evaluation: token-level micro metrics, per-tag F1, and error taxonomy.

Token-level scores treat every non-O tag prediction as a retrieval event.
Mention-level analysis aligns decoded gold and predicted mentions by greedy
maximal overlap (the same procedure used for annotator agreement) and sorts
each prediction into one of six exhaustive, mutually exclusive outcome
categories.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum

from .agreement import greedy_overlap_pairs
from .corpus import Tag, bio_decode


class ErrorCategory(Enum):
    EXACTLY_CORRECT = "ExactlyCorrect"
    MISSING = "Missing"
    WRONGLY_EXTRACTED = "WronglyExtracted"
    SCOPE_WRONG_TYPE_RIGHT = "ScopeWrongTypeRight"
    SCOPE_RIGHT_TYPE_WRONG = "ScopeRightTypeWrong"
    SCOPE_WRONG_TYPE_WRONG = "ScopeWrongTypeWrong"


@dataclass
class TagConfusion:
    """Counts of (gold tag, predicted tag) pairs."""

    counts: dict = field(default_factory=dict)

    @classmethod
    def from_sequences(cls, gold_seqs, pred_seqs):
        conf = cls()
        for gold, pred in zip(gold_seqs, pred_seqs, strict=True):
            if len(gold) != len(pred):
                raise ValueError(
                    f"sequence lengths differ: {len(gold)} gold vs {len(pred)} predicted"
                )
            for g, p in zip(gold, pred):
                key = (g, p)
                conf.counts[key] = conf.counts.get(key, 0) + 1
        return conf

    def totals(self):
        """(tp, fp, fn) over non-O tags, counting exact tag matches."""
        tp = fp = fn = 0
        for (g, p), n in self.counts.items():
            if p is not Tag.O:
                if g == p:
                    tp += n
                else:
                    fp += n
            if g is not Tag.O and g != p:
                fn += n
        return tp, fp, fn


def f1_from_pr(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def prf_from_counts(tp: int, fp: int, fn: int):
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return precision, recall, f1_from_pr(precision, recall)


def micro_prf(gold_seqs, pred_seqs):
    """Micro precision/recall/F1 over tokens with non-O tags.

    A token predicted with the wrong non-O tag counts as both a false
    positive and (when gold is non-O) a false negative.
    """
    tp = fp = fn = 0
    for gold, pred in zip(gold_seqs, pred_seqs, strict=True):
        if len(gold) != len(pred):
            raise ValueError(
                f"sequence lengths differ: {len(gold)} gold vs {len(pred)} predicted"
            )
        for g, p in zip(gold, pred):
            if p is not Tag.O:
                if g == p:
                    tp += 1
                else:
                    fp += 1
            if g is not Tag.O and g != p:
                fn += 1
    return prf_from_counts(tp, fp, fn)


@dataclass
class PerTagScore:
    precision: float
    recall: float
    f1: float
    support: int
    predicted: int
    no_support: bool


def per_tag_f1(gold_seqs, pred_seqs):
    """One-vs-rest scores per non-O tag.

    Tags that occur in neither gold nor prediction get zero scores with
    ``no_support`` set, so report formatting can show them as undefined.
    """
    conf = TagConfusion.from_sequences(gold_seqs, pred_seqs)
    out = {}
    for tag in Tag:
        if tag is Tag.O:
            continue
        tp = conf.counts.get((tag, tag), 0)
        support = sum(n for (g, _p), n in conf.counts.items() if g == tag)
        predicted = sum(n for (_g, p), n in conf.counts.items() if p == tag)
        precision, recall, f1 = prf_from_counts(tp, predicted - tp, support - tp)
        out[tag] = PerTagScore(
            precision, recall, f1, support, predicted, support == 0 and predicted == 0
        )
    return out


@dataclass(frozen=True)
class CategorizedCase:
    category: ErrorCategory
    gold: object = None  # AnnotatedMention
    pred: object = None


def categorize_prediction(gold_mentions, pred_mentions):
    """Assign each gold/predicted mention to one outcome category.

    Mentions are aligned one-to-one by greedy maximal overlap; aligned pairs
    split on span exactness and type match, unaligned gold mentions are
    Missing, unaligned predictions are WronglyExtracted.  Every input
    mention lands in exactly one case.
    """
    pairs, gold_only, pred_only = greedy_overlap_pairs(
        list(gold_mentions), list(pred_mentions)
    )
    cases = []
    for g, p, _ov in pairs:
        same_span = g.span == p.span
        same_type = g.rtype == p.rtype
        if same_span and same_type:
            cat = ErrorCategory.EXACTLY_CORRECT
        elif same_type:
            cat = ErrorCategory.SCOPE_WRONG_TYPE_RIGHT
        elif same_span:
            cat = ErrorCategory.SCOPE_RIGHT_TYPE_WRONG
        else:
            cat = ErrorCategory.SCOPE_WRONG_TYPE_WRONG
        cases.append(CategorizedCase(cat, g, p))
    cases.extend(CategorizedCase(ErrorCategory.MISSING, gold=g) for g in gold_only)
    cases.extend(CategorizedCase(ErrorCategory.WRONGLY_EXTRACTED, pred=p) for p in pred_only)
    return cases


def categorize_corpus(examples, pred_seqs):
    """Mention-level cases for every example sentence.

    Returns a list of (example, CategorizedCase) so callers can inspect the
    tokens behind each mention.
    """
    out = []
    for ex, pred in zip(examples, pred_seqs, strict=True):
        si = ex.sentence.sentence_index
        gold_mentions, _ = bio_decode(ex.tags, si, ex.thread_id, "gold")
        pred_mentions, _ = bio_decode(pred, si, ex.thread_id, "pred")
        for case in categorize_prediction(gold_mentions, pred_mentions):
            out.append((ex, case))
    return out


@dataclass
class RatioRow:
    correct: int
    total: int

    @property
    def ratio(self):
        return self.correct / self.total if self.total else 0.0


@dataclass
class OovReport:
    """Exact-match rates split by pretrained-vocabulary coverage.

    A mention is out-of-vocabulary when at least one of its tokens is
    missing from the pretrained vector vocabulary; correctness means the
    mention was ExactlyCorrect.
    """

    all: RatioRow
    in_vocab: RatioRow
    oov: RatioRow


def _mention_tokens(example, mention):
    return [t.text for t in example.sentence.tokens[mention.span.start : mention.span.end]]


def mention_is_oov(example, mention, vector_vocab, fold_case=True) -> bool:
    for text in _mention_tokens(example, mention):
        key = text.lower() if fold_case else text
        if key not in vector_vocab:
            return True
    return False


def oov_report(examples, pred_seqs, vector_vocab, fold_case=True) -> OovReport:
    rows = {"all": [0, 0], "in_vocab": [0, 0], "oov": [0, 0]}
    for ex, case in categorize_corpus(examples, pred_seqs):
        if case.gold is None:
            continue  # spurious predictions have no vocabulary status
        bucket = (
            "oov" if mention_is_oov(ex, case.gold, vector_vocab, fold_case) else "in_vocab"
        )
        correct = case.category is ErrorCategory.EXACTLY_CORRECT
        for key in ("all", bucket):
            rows[key][0] += int(correct)
            rows[key][1] += 1
    return OovReport(
        all=RatioRow(*rows["all"]),
        in_vocab=RatioRow(*rows["in_vocab"]),
        oov=RatioRow(*rows["oov"]),
    )


def subset_token_recall(examples, pred_seqs, keep) -> float:
    """Recall over tokens of gold mentions selected by ``keep(example, mention)``."""
    tp = fn = 0
    for ex, pred in zip(examples, pred_seqs, strict=True):
        mentions, _ = bio_decode(ex.tags, ex.sentence.sentence_index, ex.thread_id)
        for m in mentions:
            if not keep(ex, m):
                continue
            for k in range(m.span.start, m.span.end):
                if pred[k] == ex.tags[k]:
                    tp += 1
                else:
                    fn += 1
    return tp / (tp + fn) if tp + fn else 0.0


def corpus_fingerprint(examples) -> str:
    """Stable hash of sentences and tags, for report provenance."""
    h = hashlib.sha256()
    for ex in examples:
        h.update(ex.thread_id.encode("utf-8"))
        h.update(str(ex.sentence.sentence_index).encode())
        for tok, tag in zip(ex.sentence.tokens, ex.tags):
            h.update(b"\x00" + tok.text.encode("utf-8") + b"\x01" + tag.value.encode())
        h.update(b"\x02")
    return h.hexdigest()[:16]


def config_hash(config_dict: dict) -> str:
    blob = json.dumps(config_dict, sort_keys=True, default=str).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class EvaluationReport:
    micro_precision: float
    micro_recall: float
    micro_f1: float
    per_tag: dict
    error_counts: dict  # ErrorCategory value -> count
    error_counts_by_type: dict  # coarse type value -> {category value -> count}
    mention_precision: float
    mention_recall: float
    mention_f1: float
    n_sentences: int
    n_tokens: int
    oov: OovReport | None
    config_hash: str
    corpus_fingerprint: str

    def to_dict(self):
        out = {
            "micro": {
                "precision": self.micro_precision,
                "recall": self.micro_recall,
                "f1": self.micro_f1,
            },
            "per_tag": {
                tag.value: {
                    "precision": s.precision,
                    "recall": s.recall,
                    "f1": s.f1,
                    "support": s.support,
                    "no_support": s.no_support,
                }
                for tag, s in self.per_tag.items()
            },
            "errors": dict(self.error_counts),
            "errors_by_type": {k: dict(v) for k, v in self.error_counts_by_type.items()},
            "mention": {
                "precision": self.mention_precision,
                "recall": self.mention_recall,
                "f1": self.mention_f1,
            },
            "n_sentences": self.n_sentences,
            "n_tokens": self.n_tokens,
            "config_hash": self.config_hash,
            "corpus_fingerprint": self.corpus_fingerprint,
        }
        if self.oov is not None:
            out["oov"] = {
                name: {"correct": row.correct, "total": row.total, "ratio": row.ratio}
                for name, row in (
                    ("all", self.oov.all),
                    ("in_vocab", self.oov.in_vocab),
                    ("oov", self.oov.oov),
                )
            }
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        lines = [
            f"sentences: {self.n_sentences}   tokens: {self.n_tokens}",
            f"config: {self.config_hash}   corpus: {self.corpus_fingerprint}",
            "",
            f"micro    P={self.micro_precision:.4f}  R={self.micro_recall:.4f}  "
            f"F1={self.micro_f1:.4f}",
            f"mention  P={self.mention_precision:.4f}  R={self.mention_recall:.4f}  "
            f"F1={self.mention_f1:.4f}",
            "",
            "per-tag F1:",
        ]
        for tag, s in self.per_tag.items():
            shown = "    n/a" if s.no_support else f"{s.f1:7.4f}"
            lines.append(f"  {tag.value:<16}{shown}  (support {s.support})")
        lines.append("")
        lines.append("mention outcomes:")
        for cat in ErrorCategory:
            lines.append(f"  {cat.value:<22}{self.error_counts.get(cat.value, 0)}")
        if self.oov is not None:
            lines.append("")
            lines.append("exact-match rate by vector coverage:")
            for name, row in (
                ("all", self.oov.all),
                ("in-vocabulary", self.oov.in_vocab),
                ("out-of-vocabulary", self.oov.oov),
            ):
                lines.append(
                    f"  {name:<18}{row.correct}/{row.total} = {row.ratio:.4f}"
                )
        return "\n".join(lines) + "\n"


def evaluate(examples, pred_seqs, vector_vocab=None, config_digest="", fold_case=True):
    """Full report over example sentences and predicted tag sequences."""
    examples = list(examples)
    pred_seqs = [list(p) for p in pred_seqs]
    precision, recall, f1 = micro_prf([list(e.tags) for e in examples], pred_seqs)
    tags_scores = per_tag_f1([list(e.tags) for e in examples], pred_seqs)
    cases = categorize_corpus(examples, pred_seqs)
    error_counts = {cat.value: 0 for cat in ErrorCategory}
    by_type = {}
    n_gold = n_pred = n_exact = 0
    for _ex, case in cases:
        error_counts[case.category.value] += 1
        anchor = case.gold if case.gold is not None else case.pred
        bucket = by_type.setdefault(
            anchor.rtype.value, {cat.value: 0 for cat in ErrorCategory}
        )
        bucket[case.category.value] += 1
        if case.gold is not None:
            n_gold += 1
        if case.pred is not None:
            n_pred += 1
        if case.category is ErrorCategory.EXACTLY_CORRECT:
            n_exact += 1
    m_precision = n_exact / n_pred if n_pred else 0.0
    m_recall = n_exact / n_gold if n_gold else 0.0
    oov = (
        oov_report(examples, pred_seqs, vector_vocab, fold_case)
        if vector_vocab is not None
        else None
    )
    return EvaluationReport(
        micro_precision=precision,
        micro_recall=recall,
        micro_f1=f1,
        per_tag=tags_scores,
        error_counts=error_counts,
        error_counts_by_type=dict(sorted(by_type.items())),
        mention_precision=m_precision,
        mention_recall=m_recall,
        mention_f1=f1_from_pr(m_precision, m_recall),
        n_sentences=len(examples),
        n_tokens=sum(len(e.sentence.tokens) for e in examples),
        oov=oov,
        config_hash=config_digest,
        corpus_fingerprint=corpus_fingerprint(examples),
    )
