"""Synthetic forum-thread generator with controllable difficulty.

Threads are assembled from token templates so gold mention spans are known
exactly.  Three mention kinds exercise specific model capabilities:

- plain: a type-revealing noun phrase ("quiz 3", "the lecture slides");
- oov: an id-like token ("hw4371", "deck88.ppt") that is deliberately left
  out of the generated vector file, so only character shape reveals the
  type; its carrier frames are shared across types and give nothing away;
- anaphoric: a short clause around the phrase "that one".  It is a mention
  (typed like its antecedent) only when a resource mention occurs within
  the context window; otherwise enough mention-free filler precedes it
  that the identical clause must be tagged O.  A valid anaphor is the only
  mention in its sentence, so nothing in the sentence itself reveals the
  type; an invalid one gets a plain second clause, which keeps the
  sentence inside the mention-bearing example set.

A second annotation group is derived from the gold one by seeded
perturbations (drops, type flips, span jitter); at rate zero the two groups
are identical and positive specific agreement is exactly 1.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass

import numpy as np

from .corpus import (
    AnnotatedMention,
    ResourceType,
    ResourceTypeFine,
    Span,
    Thread,
    collapse_type,
    tokenize,
)

_FINE_BY_COARSE = {
    ResourceType.ASSESSMENTS: [ResourceTypeFine.ASSESSMENTS],
    ResourceType.EXAMS: [ResourceTypeFine.EXAMS],
    ResourceType.VIDEOS: [ResourceTypeFine.VIDEOS],
    ResourceType.COURSEWARES: [
        ResourceTypeFine.READINGS,
        ResourceTypeFine.SLIDES,
        ResourceTypeFine.TRANSCRIPTS,
        ResourceTypeFine.ADDITIONAL_RESOURCES,
    ],
}

_COARSE = list(ResourceType)

# Noun phrases with type-revealing heads; "{n}" takes a small number.
_PLAIN_NP = {
    ResourceTypeFine.ASSESSMENTS: [
        ["assignment", "{n}"],
        ["homework", "{n}"],
        ["the", "programming", "project"],
        ["problem", "set", "{n}"],
    ],
    ResourceTypeFine.EXAMS: [
        ["quiz", "{n}"],
        ["the", "midterm"],
        ["the", "final", "exam"],
        ["exam", "{n}"],
    ],
    ResourceTypeFine.VIDEOS: [
        ["video", "{n}"],
        ["lecture", "video", "{n}"],
        ["the", "intro", "video"],
        ["recording", "{n}"],
    ],
    ResourceTypeFine.READINGS: [["chapter", "{n}"], ["the", "textbook"]],
    ResourceTypeFine.SLIDES: [["the", "lecture", "slides"], ["slide", "deck", "{n}"]],
    ResourceTypeFine.TRANSCRIPTS: [["the", "transcript"], ["transcript", "{n}"]],
    ResourceTypeFine.ADDITIONAL_RESOURCES: [
        ["the", "sample", "dataset"],
        ["the", "starter", "code"],
    ],
}

# Frames natural for each coarse type; "{m}" is the mention slot.
_PLAIN_FRAMES = {
    ResourceType.ASSESSMENTS: [
        (["i", "submitted", "{m}", "yesterday"], "."),
        (["is", "{m}", "due", "tonight"], "?"),
        (["{m}", "took", "me", "three", "hours"], "."),
        (["i", "got", "stuck", "on", "{m}", "again"], "."),
    ],
    ResourceType.EXAMS: [
        (["how", "hard", "is", "{m}", "going", "to", "be"], "?"),
        (["i", "am", "studying", "for", "{m}", "now"], "."),
        (["{m}", "covers", "the", "early", "material"], "."),
        (["when", "is", "{m}", "scheduled"], "?"),
    ],
    ResourceType.VIDEOS: [
        (["{m}", "keeps", "buffering", "for", "me"], "."),
        (["i", "watched", "{m}", "twice"], "."),
        (["the", "audio", "in", "{m}", "is", "out", "of", "sync"], "."),
        (["{m}", "was", "really", "clear"], "."),
    ],
    ResourceType.COURSEWARES: [
        (["i", "downloaded", "{m}", "already"], "."),
        (["{m}", "is", "missing", "a", "page"], "."),
        (["where", "can", "i", "find", "{m}"], "?"),
        (["{m}", "has", "a", "typo", "near", "the", "end"], "."),
    ],
}

# Short frames used for the sentence immediately before a valid anaphor.
# The mention sits last so a recurrent sentence summary reflects the type
# noun strongly even early in training.
_ANTECEDENT_FRAMES = [
    (["try", "{m}"], "."),
    (["see", "{m}"], "."),
    (["check", "{m}"], "."),
    (["start", "with", "{m}"], "."),
]

# Frames for id-like mentions: shared across all types on purpose.
_OOV_FRAMES = [
    (["does", "{m}", "open", "for", "anyone", "else"], "?"),
    (["i", "cannot", "open", "{m}", "at", "all"], "."),
    (["the", "link", "for", "{m}", "is", "broken"], "."),
    (["{m}", "gives", "me", "an", "error"], "."),
    (["has", "anyone", "tried", "{m}", "yet"], "?"),
]

_OOV_SHAPE = {
    ResourceTypeFine.ASSESSMENTS: "hw{i}",
    ResourceTypeFine.EXAMS: "q{i}",
    ResourceTypeFine.VIDEOS: "vid{i}",
    ResourceTypeFine.READINGS: "doc{i}.pdf",
    ResourceTypeFine.SLIDES: "deck{i}.ppt",
    ResourceTypeFine.TRANSCRIPTS: "tr{i}.txt",
    ResourceTypeFine.ADDITIONAL_RESOURCES: "data{i}.zip",
}

# Clauses containing the anaphor "that one"; (tokens, span start, span end).
_ANAPHOR_CLAUSES = [
    (["i", "could", "not", "open", "that", "one", "either"], 4, 6),
    (["that", "one", "did", "not", "load", "for", "me"], 0, 2),
    (["has", "anyone", "finished", "that", "one", "yet"], 3, 5),
    (["i", "think", "that", "one", "is", "broken"], 2, 4),
]

# Second clause of an invalid anaphor sentence; carries a plain mention.
_SECOND_CLAUSES = [
    ["{m}", "still", "works", "for", "me"],
    ["{m}", "opened", "fine"],
    ["at", "least", "{m}", "works"],
    ["{m}", "is", "fine", "though"],
]

_FILLERS = [
    ["thanks", "for", "the", "quick", "reply", "."],
    ["i", "will", "ask", "the", "professor", "about", "it", "."],
    ["same", "problem", "here", "."],
    ["did", "anyone", "else", "see", "this", "?"],
    ["my", "browser", "crashed", "twice", "today", "."],
    ["the", "schedule", "seems", "off", "to", "me", "."],
    ["hope", "this", "gets", "fixed", "soon", "."],
    ["i", "sent", "an", "email", "but", "got", "no", "answer", "."],
]

_TITLES = [
    ["help", "with", "week", "{n}"],
    ["question", "about", "the", "course"],
    ["confused", "about", "something"],
    ["is", "anyone", "else", "stuck"],
    ["need", "some", "advice"],
]


@dataclass
class SynthSpec:
    """Generator knobs; every random decision flows from the seed."""

    threads: int = 100
    mention_slots: int = 4  # mention-bearing construction points per thread
    oov_rate: float = 0.3
    anaphora_rate: float = 0.3
    anaphora_valid_rate: float = 0.6
    distractor_rate: float = 0.3  # chance of filler chatter between slots
    perturbation: float = 0.0  # second-group annotation noise
    context_window: int = 2  # mentions farther back do not license anaphors
    vector_dim: int = 32
    seed: int = 0

    def validate(self):
        for name in ("oov_rate", "anaphora_rate", "anaphora_valid_rate",
                     "distractor_rate", "perturbation"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.oov_rate + self.anaphora_rate > 1.0:
            raise ValueError("oov_rate + anaphora_rate must not exceed 1")
        if self.threads <= 0 or self.mention_slots <= 0:
            raise ValueError("threads and mention_slots must be positive")
        if self.context_window < 1:
            raise ValueError("context_window must be >= 1")
        return self


@dataclass
class SynthResult:
    spec: SynthSpec
    threads: list
    gold: list  # AnnotatedMention, fine types
    group2: list
    meta: dict
    vector_words: list


def _pick(rng, items):
    return items[int(rng.integers(len(items)))]


class _ThreadBuilder:
    def __init__(self, thread_id, rng, spec):
        self.thread_id = thread_id
        self.rng = rng
        self.spec = spec
        title = [
            tok.replace("{n}", str(int(rng.integers(1, 13))))
            for tok in _pick(rng, _TITLES)
        ]
        self.sentences = [title]  # token lists; index 0 is the title
        self.mentions = []  # (sentence_idx, start, end, fine, kind)
        self.mention_free = [True]

    def _add(self, tokens, mentions=()):
        idx = len(self.sentences)
        self.sentences.append(tokens)
        self.mention_free.append(not mentions)
        for start, end, fine, kind in mentions:
            self.mentions.append((idx, start, end, fine, kind))

    def _np_tokens(self, fine):
        np_tpl = _pick(self.rng, _PLAIN_NP[fine])
        return [t.replace("{n}", str(int(self.rng.integers(1, 13)))) for t in np_tpl]

    def _fill_frame(self, frame, terminal, np_tokens, kind, fine):
        tokens = []
        mention = None
        for t in frame:
            if t == "{m}":
                mention = (len(tokens), len(tokens) + len(np_tokens))
                tokens.extend(np_tokens)
            else:
                tokens.append(t)
        tokens.append(terminal)
        assert mention is not None
        return tokens, [(mention[0], mention[1], fine, kind)]

    def add_filler(self):
        self._add(list(_pick(self.rng, _FILLERS)))

    def add_plain(self, coarse=None, kind="plain", frames=None):
        """A sentence with one type-revealing mention; returns its fine type."""
        if coarse is None:
            coarse = _pick(self.rng, _COARSE)
        fine = _pick(self.rng, _FINE_BY_COARSE[coarse])
        frame, terminal = _pick(self.rng, frames if frames is not None else _PLAIN_FRAMES[coarse])
        tokens, mentions = self._fill_frame(frame, terminal, self._np_tokens(fine), kind, fine)
        self._add(tokens, mentions)
        return fine

    def add_oov(self, oov_tokens: set):
        coarse = _pick(self.rng, _COARSE)
        fine = _pick(self.rng, _FINE_BY_COARSE[coarse])
        surface = _OOV_SHAPE[fine].replace("{i}", str(int(self.rng.integers(1, 5001))))
        oov_tokens.add(surface)
        frame, terminal = _pick(self.rng, _OOV_FRAMES)
        tokens, mentions = self._fill_frame(frame, terminal, [surface], "oov", fine)
        self._add(tokens, mentions)

    def add_anaphoric(self, valid: bool):
        """Sentence built around the anaphor "that one".

        Valid: the immediately preceding sentence is a fresh antecedent and
        "that one" inherits its type; the anaphor is the only mention, so
        the type decision rests entirely on context.  Invalid: filler pads
        the context window so no mention precedes within reach, the anaphor
        stays O, and a plain second clause carries the sentence's mention.
        """
        clause, a_start, a_end = _pick(self.rng, _ANAPHOR_CLAUSES)
        if valid:
            if not self.mention_free[-1]:
                self.add_filler()
            antecedent_fine = self.add_plain(kind="plain", frames=_ANTECEDENT_FRAMES)
            tokens = list(clause) + ["."]
            self._add(tokens, [(a_start, a_end, antecedent_fine, "anaphoric")])
            return
        window = self.spec.context_window
        while not all(self.mention_free[-window:]):
            self.add_filler()
        second_fine = _pick(self.rng, _FINE_BY_COARSE[_pick(self.rng, _COARSE)])
        second = _pick(self.rng, _SECOND_CLAUSES)
        tokens = list(clause) + [","]
        mentions = []
        np_tokens = self._np_tokens(second_fine)
        for t in second:
            if t == "{m}":
                mentions.append(
                    (len(tokens), len(tokens) + len(np_tokens), second_fine, "plain")
                )
                tokens.extend(np_tokens)
            else:
                tokens.append(t)
        tokens.append(".")
        self._add(tokens, mentions)

    def build(self):
        for tokens in self.sentences:
            joined = " ".join(tokens)
            got = [t.text for t in tokenize(joined)]
            if got != tokens:
                raise AssertionError(
                    f"template tokens do not survive tokenization: {tokens} -> {got}"
                )
        body = self.sentences[1:]
        cut = int(self.rng.integers(1, len(body) + 1))
        posts = [[" ".join(self.sentences[0])]]
        posts.append([" ".join(t) for t in body[:cut]])
        if cut < len(body):
            posts.append([" ".join(t) for t in body[cut:]])
        thread = Thread(self.thread_id, posts)
        gold = [
            AnnotatedMention(self.thread_id, Span(idx, start, end), fine, "g1")
            for idx, start, end, fine, _kind in self.mentions
        ]
        meta = [
            {
                "thread_id": self.thread_id,
                "sentence": idx,
                "start": start,
                "end": end,
                "type": fine.value,
                "kind": kind,
            }
            for idx, start, end, fine, kind in self.mentions
        ]
        return thread, gold, meta


def _perturb(gold, sentence_lengths, rate, rng):
    """Noisy copy of the gold annotations: drop, flip type, or jitter span."""
    out = []
    for m in gold:
        if rng.random() >= rate:
            out.append(AnnotatedMention(m.thread_id, m.span, m.rtype, "g2"))
            continue
        op = _pick(rng, ["drop", "flip", "jitter"])
        if op == "drop":
            continue
        if op == "flip":
            own = collapse_type(m.rtype)
            choices = [f for f in ResourceTypeFine if collapse_type(f) is not own]
            out.append(
                AnnotatedMention(m.thread_id, m.span, _pick(rng, choices), "g2")
            )
            continue
        length = sentence_lengths[(m.thread_id, m.span.sentence_index)]
        span = m.span
        if span.end < length:
            span = Span(span.sentence_index, span.start, span.end + 1)
        elif span.end - span.start > 1:
            span = Span(span.sentence_index, span.start, span.end - 1)
        elif span.start > 0:
            span = Span(span.sentence_index, span.start - 1, span.end)
        out.append(AnnotatedMention(m.thread_id, span, m.rtype, "g2"))
    return out


def generate(spec: SynthSpec) -> SynthResult:
    """Build the full corpus; byte-identical for identical specs."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    threads = []
    gold = []
    meta_mentions = []
    oov_tokens: set = set()
    sentence_lengths = {}
    kind_counts = {"plain": 0, "oov": 0, "anaphoric": 0}
    for t in range(spec.threads):
        builder = _ThreadBuilder(f"synth-{t:05d}", rng, spec)
        for _slot in range(spec.mention_slots):
            if rng.random() < spec.distractor_rate:
                builder.add_filler()
            roll = rng.random()
            if roll < spec.oov_rate:
                builder.add_oov(oov_tokens)
            elif roll < spec.oov_rate + spec.anaphora_rate:
                builder.add_anaphoric(rng.random() < spec.anaphora_valid_rate)
            else:
                builder.add_plain()
        thread, thread_gold, thread_meta = builder.build()
        threads.append(thread)
        gold.extend(thread_gold)
        meta_mentions.extend(thread_meta)
        for idx, tokens in enumerate(builder.sentences):
            sentence_lengths[(thread.thread_id, idx)] = len(tokens)
        for item in thread_meta:
            kind_counts[item["kind"]] += 1
    group2 = _perturb(gold, sentence_lengths, spec.perturbation, rng)
    # Vector vocabulary: every corpus token except the deliberate OOV ids.
    seen = set()
    for thread in threads:
        for post in thread.posts:
            for sent in post:
                seen.update(sent.split(" "))
    words = sorted(seen - oov_tokens)
    meta = {
        "spec": asdict(spec),
        "mentions": meta_mentions,
        "oov_tokens": sorted(oov_tokens),
        "counts": {
            "threads": len(threads),
            "mentions": len(gold),
            "by_kind": kind_counts,
            "example_sentences": len({(m.thread_id, m.span.sentence_index) for m in gold}),
        },
    }
    return SynthResult(spec, threads, gold, group2, meta, words)


def write_vectors(path, words, dim, seed):
    """Small random embedding file in word2vec text layout (no header)."""
    rng = np.random.default_rng(seed)
    with open(path, "w", encoding="utf-8") as fh:
        for w in words:
            vec = rng.normal(0.0, 0.1, size=dim)
            fh.write(w + " " + " ".join(f"{v:.6f}" for v in vec) + "\n")


def write_corpus(out_dir, result: SynthResult):
    """Write threads, both annotation groups, vectors, and metadata."""
    from .agreement import write_annotations
    from .corpus import write_threads

    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "threads": os.path.join(out_dir, "threads.jsonl"),
        "g1": os.path.join(out_dir, "annotations_g1.tsv"),
        "g2": os.path.join(out_dir, "annotations_g2.tsv"),
        "vectors": os.path.join(out_dir, "vectors.txt"),
        "meta": os.path.join(out_dir, "meta.json"),
    }
    write_threads(paths["threads"], result.threads)
    write_annotations(paths["g1"], result.gold)
    write_annotations(paths["g2"], result.group2)
    write_vectors(paths["vectors"], result.vector_words,
                  result.spec.vector_dim, result.spec.seed)
    with open(paths["meta"], "w", encoding="utf-8") as fh:
        json.dump(result.meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return paths
