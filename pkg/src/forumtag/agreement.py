"""Dual-annotation reconciliation and gold-corpus construction.

Two annotator groups produce standoff mention annotations over the same
threads.  Mentions are aligned one-to-one by greedy maximal token overlap,
classified into agreement cases, scored with positive specific agreement,
and merged into a tagged corpus under one of two policies: the conservative
intersection corpus keeps only type-agreed mentions, the permissive union
corpus keeps everything either group marked.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

from .corpus import (
    AnnotatedMention,
    CorpusFormatError,
    ResourceType,
    ResourceTypeFine,
    Span,
    SpanError,
    TaggedSentence,
    bio_encode,
    collapse_type,
    unfold_thread,
)


class AgreementUndefinedError(ValueError):
    """Positive specific agreement is undefined when neither group annotated."""


class ComparisonCase(Enum):
    AGREEMENT = "AG"  # overlapping spans, same coarse type
    TYPE_DISAGREEMENT = "TD"  # overlapping spans, different coarse type
    G1_ONLY = "G1Only"
    G2_ONLY = "G2Only"


class MergePolicy(Enum):
    # Conservative corpus: only span unions of type-agreed pairs.
    INTERSECTION = "form-m"
    # Permissive corpus: everything either group marked; type disagreements
    # keep the first group's label.
    UNION = "form-l"


@dataclass(frozen=True)
class MatchedPair:
    case: ComparisonCase
    g1: AnnotatedMention | None
    g2: AnnotatedMention | None
    overlap: int = 0


@dataclass
class AgreementCounts:
    ag: int = 0
    td: int = 0
    g1_only: int = 0
    g2_only: int = 0

    @property
    def g1_total(self):
        return self.ag + self.td + self.g1_only

    @property
    def g2_total(self):
        return self.ag + self.td + self.g2_only

    @property
    def union_size(self):
        """Arithmetic union of the two annotation sets: g1 + g2 - agreed."""
        return self.g1_total + self.g2_total - self.ag

    @classmethod
    def from_totals(cls, ag: int, g1_total: int, g2_total: int) -> "AgreementCounts":
        """Build counts from published per-group totals (no TD breakdown)."""
        if ag > min(g1_total, g2_total):
            raise ValueError(
                f"agreed count {ag} exceeds a group total "
                f"({g1_total}, {g2_total})"
            )
        return cls(ag=ag, td=0, g1_only=g1_total - ag, g2_only=g2_total - ag)


def positive_specific_agreement(counts: AgreementCounts) -> float:
    """2 * agreed / (group1 total + group2 total).

    Equivalent to treating one group as reference and the other as response
    and averaging precision and recall of exact agreement.
    """
    denom = counts.g1_total + counts.g2_total
    if denom == 0:
        raise AgreementUndefinedError(
            "positive specific agreement undefined: both groups empty"
        )
    return 2.0 * counts.ag / denom


def greedy_overlap_pairs(group_a, group_b):
    """One-to-one alignment by descending token overlap.

    Candidate pairs must overlap by at least one token (hence share a
    sentence).  Ties break on earlier position, so the result is
    deterministic regardless of input order.  Returns
    (pairs, unmatched_a, unmatched_b) with pairs as (a, b, overlap).
    """
    candidates = []
    for i, a in enumerate(group_a):
        for j, b in enumerate(group_b):
            ov = a.span.overlap(b.span)
            if ov > 0:
                candidates.append(
                    (
                        -ov,
                        a.span.sentence_index,
                        a.span.start,
                        a.span.end,
                        b.span.start,
                        b.span.end,
                        i,
                        j,
                    )
                )
    candidates.sort()
    used_a = set()
    used_b = set()
    pairs = []
    for neg_ov, *_rest, i, j in candidates:
        if i in used_a or j in used_b:
            continue
        used_a.add(i)
        used_b.add(j)
        pairs.append((group_a[i], group_b[j], -neg_ov))
    unmatched_a = [a for i, a in enumerate(group_a) if i not in used_a]
    unmatched_b = [b for j, b in enumerate(group_b) if j not in used_b]
    return pairs, unmatched_a, unmatched_b


def match_annotations(g1, g2):
    """Align two groups' mentions for a single thread.

    Types are compared after collapsing to the coarse scheme.  Raises
    ValueError if the mentions span more than one thread.
    """
    tids = {m.thread_id for m in list(g1) + list(g2)}
    if len(tids) > 1:
        raise ValueError(f"match_annotations got mentions from threads {sorted(tids)}")
    pairs, only1, only2 = greedy_overlap_pairs(list(g1), list(g2))
    out = []
    for a, b, ov in pairs:
        same = collapse_type(a.rtype) == collapse_type(b.rtype)
        case = ComparisonCase.AGREEMENT if same else ComparisonCase.TYPE_DISAGREEMENT
        out.append(MatchedPair(case, a, b, ov))
    out.extend(MatchedPair(ComparisonCase.G1_ONLY, a, None) for a in only1)
    out.extend(MatchedPair(ComparisonCase.G2_ONLY, None, b) for b in only2)
    return out


def merge_span_union(s1: Span, s2: Span) -> Span:
    """Smallest span covering two overlapping spans of one sentence."""
    if s1.sentence_index != s2.sentence_index:
        raise SpanError(
            f"cannot merge spans from sentences {s1.sentence_index} "
            f"and {s2.sentence_index}"
        )
    if s1.overlap(s2) == 0:
        raise SpanError(f"cannot merge non-overlapping spans {s1} and {s2}")
    return Span(s1.sentence_index, min(s1.start, s2.start), max(s1.end, s2.end))


def _group_by_thread(mentions):
    by = {}
    for m in mentions:
        by.setdefault(m.thread_id, []).append(m)
    return by


def count_agreement(g1, g2):
    """Agreement counts over all threads.

    Returns (global AgreementCounts, per coarse type dict of
    {"g1", "g2", "agreed"}).
    """
    by1 = _group_by_thread(g1)
    by2 = _group_by_thread(g2)
    counts = AgreementCounts()
    per_type = {t: {"g1": 0, "g2": 0, "agreed": 0} for t in ResourceType}
    for m in g1:
        per_type[collapse_type(m.rtype)]["g1"] += 1
    for m in g2:
        per_type[collapse_type(m.rtype)]["g2"] += 1
    for tid in sorted(set(by1) | set(by2)):
        for pair in match_annotations(by1.get(tid, []), by2.get(tid, [])):
            if pair.case is ComparisonCase.AGREEMENT:
                counts.ag += 1
                per_type[collapse_type(pair.g1.rtype)]["agreed"] += 1
            elif pair.case is ComparisonCase.TYPE_DISAGREEMENT:
                counts.td += 1
            elif pair.case is ComparisonCase.G1_ONLY:
                counts.g1_only += 1
            else:
                counts.g2_only += 1
    return counts, per_type


def agreement_table(per_type_totals):
    """Per-type and total agreement rows from (g1, g2, agreed) triples.

    ``per_type_totals`` maps ResourceType (or its value string) to a dict
    with keys g1, g2, agreed.  Each output row carries the arithmetic union
    g1 + g2 - agreed and positive specific agreement (None when undefined).
    """
    rows = {}
    total = {"g1": 0, "g2": 0, "agreed": 0}
    for rtype in ResourceType:
        src = per_type_totals.get(rtype, per_type_totals.get(rtype.value))
        if src is None:
            continue
        counts = AgreementCounts.from_totals(src["agreed"], src["g1"], src["g2"])
        try:
            p_pos = positive_specific_agreement(counts)
        except AgreementUndefinedError:
            p_pos = None
        rows[rtype.value] = {
            "g1": src["g1"],
            "g2": src["g2"],
            "agreed": src["agreed"],
            "union": counts.union_size,
            "p_pos": p_pos,
        }
        for k in total:
            total[k] += src[k]
    total_counts = AgreementCounts.from_totals(total["agreed"], total["g1"], total["g2"])
    try:
        total_p = positive_specific_agreement(total_counts)
    except AgreementUndefinedError:
        total_p = None
    rows["Total"] = {
        "g1": total["g1"],
        "g2": total["g2"],
        "agreed": total["agreed"],
        "union": total_counts.union_size,
        "p_pos": total_p,
    }
    return rows


def agreement_report(g1, g2):
    """Full agreement report from raw mention lists."""
    counts, per_type = count_agreement(g1, g2)
    table = agreement_table(per_type)
    return {
        "table": table,
        "cases": {
            "agreement": counts.ag,
            "type_disagreement": counts.td,
            "g1_only": counts.g1_only,
            "g2_only": counts.g2_only,
        },
    }


@dataclass
class BuildResult:
    sentences: list  # every unfolded sentence, tagged (possibly all O)
    counts: AgreementCounts
    per_type: dict
    mentions: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def examples(self):
        """Sentences carrying at least one mention; the training units."""
        return [s for s in self.sentences if s.has_mention]


def _gold_mentions(pairs, policy, warnings, tid):
    gold = []
    for pair in pairs:
        if pair.case is ComparisonCase.AGREEMENT:
            span = merge_span_union(pair.g1.span, pair.g2.span)
            gold.append(
                AnnotatedMention(tid, span, collapse_type(pair.g1.rtype), "gold")
            )
        elif pair.case is ComparisonCase.TYPE_DISAGREEMENT:
            if policy is MergePolicy.UNION:
                span = merge_span_union(pair.g1.span, pair.g2.span)
                gold.append(
                    AnnotatedMention(tid, span, collapse_type(pair.g1.rtype), "gold")
                )
                warnings.append(
                    f"{tid}: type disagreement at sentence "
                    f"{span.sentence_index} tokens [{span.start}, {span.end}); "
                    f"kept first group's {collapse_type(pair.g1.rtype).value}"
                )
        elif policy is MergePolicy.UNION:
            m = pair.g1 or pair.g2
            gold.append(
                AnnotatedMention(tid, m.span, collapse_type(m.rtype), "gold")
            )
    return gold


def build_dataset(threads, g1, g2, policy: MergePolicy) -> BuildResult:
    """Reconcile annotations and tag every sentence of every thread.

    Gold mentions that still overlap after merging (possible under the union
    policy) are resolved deterministically: sort by position and drop the
    later mention, with a warning.  Annotations pointing at unknown threads
    raise ValueError.
    """
    thread_ids = {t.thread_id for t in threads}
    for m in list(g1) + list(g2):
        if m.thread_id not in thread_ids:
            raise ValueError(f"annotation references unknown thread {m.thread_id!r}")
    by1 = _group_by_thread(g1)
    by2 = _group_by_thread(g2)
    counts, per_type = count_agreement(g1, g2)
    warnings = []
    sentences = []
    all_gold = []
    for thread in threads:
        tid = thread.thread_id
        unfolded = unfold_thread(thread)
        pairs = match_annotations(by1.get(tid, []), by2.get(tid, []))
        gold = _gold_mentions(pairs, policy, warnings, tid)
        gold.sort(key=lambda m: (m.span.sentence_index, m.span.start, m.span.end))
        by_sent = {}
        prev_end = {}
        for m in gold:
            si = m.span.sentence_index
            if si >= len(unfolded):
                raise SpanError(
                    f"{tid}: mention sentence index {si} out of range "
                    f"({len(unfolded)} sentences)"
                )
            if m.span.start < prev_end.get(si, 0):
                warnings.append(
                    f"{tid}: dropped mention at sentence {si} tokens "
                    f"[{m.span.start}, {m.span.end}); overlaps an earlier one"
                )
                continue
            prev_end[si] = max(prev_end.get(si, 0), m.span.end)
            by_sent.setdefault(si, []).append(m)
            all_gold.append(m)
        for i, sent in enumerate(unfolded):
            tags = bio_encode(sent, by_sent.get(i, []))
            sentences.append(
                TaggedSentence(tid, sent, tuple(tags), tuple(unfolded[:i]))
            )
    return BuildResult(sentences, counts, per_type, all_gold, warnings)


# ---------------------------------------------------------------------------
# Standoff annotation files


def read_annotations(path, group: str):
    """Read tab-separated standoff mentions.

    Columns: thread_id, sentence index, token start, token end (half-open),
    resource type (fine or coarse name).
    """
    mentions = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 5:
                raise CorpusFormatError(
                    f"{path}:{lineno}: expected 5 tab-separated fields, "
                    f"got {len(parts)}"
                )
            tid, sent_s, start_s, end_s, type_s = parts
            try:
                sent, start, end = int(sent_s), int(start_s), int(end_s)
            except ValueError:
                raise CorpusFormatError(f"{path}:{lineno}: non-integer span field")
            rtype = None
            for enum_cls in (ResourceTypeFine, ResourceType):
                try:
                    rtype = enum_cls(type_s)
                    break
                except ValueError:
                    continue
            if rtype is None:
                raise CorpusFormatError(
                    f"{path}:{lineno}: unknown resource type {type_s!r}"
                )
            try:
                span = Span(sent, start, end)
            except SpanError as exc:
                raise CorpusFormatError(f"{path}:{lineno}: {exc}")
            mentions.append(AnnotatedMention(tid, span, rtype, group))
    return mentions


def write_annotations(path, mentions):
    with open(path, "w", encoding="utf-8") as fh:
        for m in mentions:
            fh.write(
                f"{m.thread_id}\t{m.span.sentence_index}\t{m.span.start}\t"
                f"{m.span.end}\t{m.rtype.value}\n"
            )


def write_report(path, report: dict):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
