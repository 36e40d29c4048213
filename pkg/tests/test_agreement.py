"""Dual-annotation comparison, agreement scoring, and corpus reconciliation."""

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from forumtag.agreement import (
    AgreementCounts,
    AgreementUndefinedError,
    ComparisonCase,
    MergePolicy,
    agreement_report,
    agreement_table,
    build_dataset,
    count_agreement,
    greedy_overlap_pairs,
    match_annotations,
    merge_span_union,
    positive_specific_agreement,
    read_annotations,
    write_annotations,
)
from forumtag.corpus import (
    AnnotatedMention,
    CorpusFormatError,
    ResourceType,
    ResourceTypeFine,
    Span,
    SpanError,
    Tag,
    Thread,
    collapse_type,
)

# Reference annotation tallies: for each type, both groups' mention counts,
# the agreed count, the arithmetic union, and positive specific agreement.
REFERENCE_ROWS = {
    ResourceType.ASSESSMENTS: (8047, 8520, 5451, 11116, 0.658),
    ResourceType.EXAMS: (1891, 3624, 1146, 4369, 0.416),
    ResourceType.VIDEOS: (1852, 3037, 1236, 3653, 0.506),
    ResourceType.COURSEWARES: (3281, 4286, 1557, 6010, 0.412),
}
REFERENCE_TOTAL = (15071, 19467, 9390, 25148, 0.544)


def mention(tid, sent, start, end, rtype, group=""):
    return AnnotatedMention(tid, Span(sent, start, end), rtype, group)


class TestPositiveSpecificAgreement:
    def test_reference_rows(self):
        for g1, g2, ag, union, p in list(REFERENCE_ROWS.values()) + [REFERENCE_TOTAL]:
            counts = AgreementCounts.from_totals(ag, g1, g2)
            assert positive_specific_agreement(counts) == pytest.approx(p, abs=1e-3)
            assert counts.union_size == union

    def test_perfect_and_zero(self):
        assert positive_specific_agreement(AgreementCounts(ag=5)) == 1.0
        none = AgreementCounts(ag=0, g1_only=3, g2_only=2)
        assert positive_specific_agreement(none) == 0.0

    def test_undefined_when_both_empty(self):
        with pytest.raises(AgreementUndefinedError):
            positive_specific_agreement(AgreementCounts())

    def test_td_counts_against_both_groups(self):
        counts = AgreementCounts(ag=1, td=1)
        # g1_total = g2_total = 2, so P_pos = 2*1 / 4.
        assert positive_specific_agreement(counts) == pytest.approx(0.5)

    def test_from_totals_validation(self):
        with pytest.raises(ValueError):
            AgreementCounts.from_totals(5, 3, 10)


class TestGreedyMatching:
    def test_prefers_larger_overlap(self):
        a = [mention("t", 0, 0, 3, ResourceType.EXAMS)]
        b = [
            mention("t", 0, 2, 3, ResourceType.EXAMS),
            mention("t", 0, 0, 3, ResourceType.EXAMS),
        ]
        pairs, only_a, only_b = greedy_overlap_pairs(a, b)
        assert len(pairs) == 1 and pairs[0][2] == 3
        assert pairs[0][1].span == Span(0, 0, 3)
        assert only_a == [] and only_b == [b[0]]

    def test_one_to_one(self):
        a = [
            mention("t", 0, 0, 2, ResourceType.EXAMS),
            mention("t", 0, 1, 3, ResourceType.EXAMS),
        ]
        b = [mention("t", 0, 0, 3, ResourceType.EXAMS)]
        pairs, only_a, only_b = greedy_overlap_pairs(a, b)
        assert len(pairs) == 1 and len(only_a) == 1 and only_b == []

    def test_no_cross_sentence_matches(self):
        a = [mention("t", 0, 0, 2, ResourceType.EXAMS)]
        b = [mention("t", 1, 0, 2, ResourceType.EXAMS)]
        pairs, only_a, only_b = greedy_overlap_pairs(a, b)
        assert pairs == [] and only_a == a and only_b == b

    @settings(max_examples=100, deadline=None)
    @given(st.data())
    def test_permutation_invariance(self, data):
        spans = st.tuples(st.integers(0, 2), st.integers(0, 6), st.integers(1, 4))
        def build(group):
            out = []
            for k, (sent, start, width) in enumerate(
                data.draw(st.lists(spans, max_size=6), label=group)
            ):
                out.append(
                    mention("t", sent, start, start + width, ResourceType.EXAMS, group)
                )
            return out

        a, b = build("a"), build("b")

        def canon(pairs):
            return sorted(
                (
                    (x.span.sentence_index, x.span.start, x.span.end),
                    (y.span.sentence_index, y.span.start, y.span.end),
                    ov,
                )
                for x, y, ov in pairs
            )

        reference = canon(greedy_overlap_pairs(a, b)[0])
        rng = random.Random(data.draw(st.integers(0, 999), label="shuffle"))
        a2, b2 = list(a), list(b)
        rng.shuffle(a2)
        rng.shuffle(b2)
        assert canon(greedy_overlap_pairs(a2, b2)[0]) == reference


class TestMatchAnnotations:
    def test_cases(self):
        g1 = [
            mention("t", 0, 0, 2, ResourceTypeFine.SLIDES, "g1"),
            mention("t", 1, 0, 1, ResourceTypeFine.EXAMS, "g1"),
            mention("t", 2, 0, 1, ResourceTypeFine.VIDEOS, "g1"),
        ]
        g2 = [
            mention("t", 0, 1, 3, ResourceTypeFine.READINGS, "g2"),
            mention("t", 1, 0, 1, ResourceTypeFine.VIDEOS, "g2"),
            mention("t", 3, 0, 1, ResourceTypeFine.EXAMS, "g2"),
        ]
        cases = {p.case for p in match_annotations(g1, g2)}
        assert cases == {
            ComparisonCase.AGREEMENT,  # Slides vs Readings both collapse
            ComparisonCase.TYPE_DISAGREEMENT,
            ComparisonCase.G1_ONLY,
            ComparisonCase.G2_ONLY,
        }

    def test_rejects_mixed_threads(self):
        g1 = [mention("a", 0, 0, 1, ResourceType.EXAMS)]
        g2 = [mention("b", 0, 0, 1, ResourceType.EXAMS)]
        with pytest.raises(ValueError, match="threads"):
            match_annotations(g1, g2)


class TestSpanUnion:
    def test_merge(self):
        assert merge_span_union(Span(0, 1, 4), Span(0, 2, 6)) == Span(0, 1, 6)
        assert merge_span_union(Span(0, 2, 3), Span(0, 2, 3)) == Span(0, 2, 3)

    def test_rejects_disjoint(self):
        with pytest.raises(SpanError, match="non-overlapping"):
            merge_span_union(Span(0, 0, 1), Span(0, 2, 3))

    def test_rejects_cross_sentence(self):
        with pytest.raises(SpanError, match="sentences"):
            merge_span_union(Span(0, 0, 2), Span(1, 0, 2))


class TestCountsAndTable:
    def test_count_agreement_multi_thread(self):
        g1 = [
            mention("a", 0, 0, 2, ResourceType.EXAMS, "g1"),
            mention("a", 1, 0, 1, ResourceType.VIDEOS, "g1"),
            mention("b", 0, 0, 1, ResourceType.ASSESSMENTS, "g1"),
        ]
        g2 = [
            mention("a", 0, 1, 3, ResourceType.EXAMS, "g2"),
            mention("a", 1, 0, 1, ResourceType.COURSEWARES, "g2"),
            mention("b", 2, 0, 1, ResourceType.ASSESSMENTS, "g2"),
        ]
        counts, per_type = count_agreement(g1, g2)
        assert (counts.ag, counts.td, counts.g1_only, counts.g2_only) == (1, 1, 1, 1)
        assert per_type[ResourceType.EXAMS] == {"g1": 1, "g2": 1, "agreed": 1}
        assert per_type[ResourceType.VIDEOS] == {"g1": 1, "g2": 0, "agreed": 0}
        assert counts.union_size == counts.g1_total + counts.g2_total - counts.ag

    def test_table_reference_values(self):
        per_type = {
            rtype: {"g1": g1, "g2": g2, "agreed": ag}
            for rtype, (g1, g2, ag, _, _) in REFERENCE_ROWS.items()
        }
        rows = agreement_table(per_type)
        for rtype, (g1, g2, ag, union, p) in REFERENCE_ROWS.items():
            row = rows[rtype.value]
            assert (row["g1"], row["g2"], row["agreed"]) == (g1, g2, ag)
            assert row["union"] == union
            assert row["p_pos"] == pytest.approx(p, abs=1e-3)
        total = rows["Total"]
        assert (total["g1"], total["g2"], total["agreed"]) == REFERENCE_TOTAL[:3]
        assert total["union"] == REFERENCE_TOTAL[3]
        assert total["p_pos"] == pytest.approx(REFERENCE_TOTAL[4], abs=1e-3)

    def test_table_handles_empty_type(self):
        per_type = {
            ResourceType.EXAMS: {"g1": 2, "g2": 2, "agreed": 2},
            ResourceType.VIDEOS: {"g1": 0, "g2": 0, "agreed": 0},
        }
        rows = agreement_table(per_type)
        assert rows["Videos"]["p_pos"] is None
        assert rows["Total"]["p_pos"] == 1.0

    def test_report_shape(self):
        g1 = [mention("a", 0, 0, 1, ResourceType.EXAMS, "g1")]
        g2 = [mention("a", 0, 0, 1, ResourceType.EXAMS, "g2")]
        report = agreement_report(g1, g2)
        assert report["cases"]["agreement"] == 1
        assert report["table"]["Total"]["p_pos"] == 1.0


def demo_thread():
    return Thread(
        "t1",
        [
            ["need help"],
            ["please check quiz 2 now.", "the slides also cover it."],
        ],
    )


class TestBuildDataset:
    # Sentence 1 is "please check quiz 2 now ." and sentence 2 is
    # "the slides also cover it ." after tokenization.

    def test_intersection_keeps_only_agreed(self):
        g1 = [
            mention("t1", 1, 2, 4, ResourceTypeFine.EXAMS, "g1"),
            mention("t1", 2, 0, 2, ResourceTypeFine.SLIDES, "g1"),
        ]
        g2 = [
            mention("t1", 1, 2, 5, ResourceTypeFine.EXAMS, "g2"),
            # no counterpart for the slides mention
        ]
        built = build_dataset([demo_thread()], g1, g2, MergePolicy.INTERSECTION)
        assert len(built.sentences) == 3
        assert len(built.mentions) == 1
        m = built.mentions[0]
        assert m.span == Span(1, 2, 5)  # span union of the agreed pair
        assert m.rtype is ResourceType.EXAMS
        ex = built.examples
        assert len(ex) == 1
        assert ex[0].tags == (
            Tag.O, Tag.O, Tag.EXAMS_B, Tag.EXAMS_I, Tag.EXAMS_I, Tag.O,
        )

    def test_union_keeps_singles_and_td(self):
        g1 = [mention("t1", 1, 2, 4, ResourceTypeFine.EXAMS, "g1")]
        g2 = [
            mention("t1", 1, 2, 4, ResourceTypeFine.ASSESSMENTS, "g2"),
            mention("t1", 2, 1, 2, ResourceTypeFine.SLIDES, "g2"),
        ]
        built = build_dataset([demo_thread()], g1, g2, MergePolicy.UNION)
        assert len(built.mentions) == 2
        td = built.mentions[0]
        # Type disagreement resolves to the first group's label.
        assert td.rtype is ResourceType.EXAMS
        assert any("type disagreement" in w for w in built.warnings)
        assert built.mentions[1].rtype is ResourceType.COURSEWARES

    def test_union_drops_post_merge_overlap_deterministically(self):
        g1 = [
            mention("t1", 1, 1, 3, ResourceTypeFine.EXAMS, "g1"),
            mention("t1", 1, 3, 5, ResourceTypeFine.VIDEOS, "g1"),
        ]
        g2 = [mention("t1", 1, 2, 4, ResourceTypeFine.EXAMS, "g2")]
        built = build_dataset([demo_thread()], g1, g2, MergePolicy.UNION)
        # The agreed pair merges to [1, 4); the leftover g1 mention [3, 5)
        # overlaps it and is dropped with a warning.
        assert [m.span for m in built.mentions] == [Span(1, 1, 4)]
        assert any("dropped" in w for w in built.warnings)

    def test_contexts_are_prior_sentences(self):
        built = build_dataset([demo_thread()], [], [], MergePolicy.UNION)
        ctx_lengths = [len(s.context) for s in built.sentences]
        assert ctx_lengths == [0, 1, 2]
        assert built.sentences[2].context[0] is built.sentences[0].sentence

    def test_unknown_thread_rejected(self):
        g1 = [mention("zzz", 0, 0, 1, ResourceType.EXAMS)]
        with pytest.raises(ValueError, match="unknown thread"):
            build_dataset([demo_thread()], g1, [], MergePolicy.UNION)

    def test_counts_survive_into_result(self):
        g1 = [mention("t1", 1, 2, 4, ResourceTypeFine.EXAMS, "g1")]
        g2 = [mention("t1", 1, 2, 4, ResourceTypeFine.EXAMS, "g2")]
        built = build_dataset([demo_thread()], g1, g2, MergePolicy.INTERSECTION)
        assert built.counts.ag == 1
        assert built.per_type[ResourceType.EXAMS]["agreed"] == 1


class TestannotationFiles:
    def test_roundtrip(self, tmp_path):
        # Type names shared by the fine and coarse schemes ("Exams") read
        # back as fine; the collapsed meaning is what must survive.
        path = str(tmp_path / "ann.tsv")
        ms = [
            mention("t1", 0, 0, 2, ResourceTypeFine.SLIDES, "g1"),
            mention("t2", 3, 1, 2, ResourceType.EXAMS, "g1"),
        ]
        write_annotations(path, ms)
        back = read_annotations(path, "g1")
        assert [(m.thread_id, m.span, collapse_type(m.rtype), m.group) for m in back] == [
            (m.thread_id, m.span, collapse_type(m.rtype), m.group) for m in ms
        ]
        assert back[0].rtype is ResourceTypeFine.SLIDES

    def test_comments_and_blanks_skipped(self, tmp_path):
        path = str(tmp_path / "ann.tsv")
        with open(path, "w") as fh:
            fh.write("# comment\n\nt1\t0\t0\t1\tExams\n")
        assert len(read_annotations(path, "g")) == 1

    @pytest.mark.parametrize(
        "line,marker",
        [
            ("t1\t0\t0\t1", ":1:"),  # four fields
            ("t1\t0\tx\t1\tExams", "non-integer"),
            ("t1\t0\t0\t1\tNotAType", "unknown resource type"),
            ("t1\t0\t2\t1\tExams", ":1:"),  # empty span
        ],
    )
    def test_malformed_lines(self, tmp_path, line, marker):
        path = str(tmp_path / "ann.tsv")
        with open(path, "w") as fh:
            fh.write(line + "\n")
        with pytest.raises(CorpusFormatError, match=marker):
            read_annotations(path, "g")
