"""Thread corpus data model: tokenization, BIO tagging, serialization.

A thread is an ordered list of posts; post 0 is the title.  Posts are lists
of sentence strings.  Unfolding flattens a thread into one sentence sequence
so earlier sentences can serve as context for later ones.
"""

from __future__ import annotations

import json
import re
import string
from dataclasses import dataclass, field
from enum import Enum


class CorpusFormatError(ValueError):
    """Raised for malformed corpus files; message carries file:line."""


class SpanError(ValueError):
    """Raised for out-of-range or overlapping annotation spans."""


class ResourceTypeFine(Enum):
    ASSESSMENTS = "Assessments"
    EXAMS = "Exams"
    VIDEOS = "Videos"
    READINGS = "Readings"
    SLIDES = "Slides"
    TRANSCRIPTS = "Transcripts"
    ADDITIONAL_RESOURCES = "AdditionalResources"


class ResourceType(Enum):
    ASSESSMENTS = "Assessments"
    EXAMS = "Exams"
    VIDEOS = "Videos"
    COURSEWARES = "Coursewares"


# Fine categories that describe static course material all fold into
# Coursewares; the other three are already coarse.
_COLLAPSE = {
    ResourceTypeFine.ASSESSMENTS: ResourceType.ASSESSMENTS,
    ResourceTypeFine.EXAMS: ResourceType.EXAMS,
    ResourceTypeFine.VIDEOS: ResourceType.VIDEOS,
    ResourceTypeFine.READINGS: ResourceType.COURSEWARES,
    ResourceTypeFine.SLIDES: ResourceType.COURSEWARES,
    ResourceTypeFine.TRANSCRIPTS: ResourceType.COURSEWARES,
    ResourceTypeFine.ADDITIONAL_RESOURCES: ResourceType.COURSEWARES,
}


def collapse_type(fine) -> ResourceType:
    """Map a fine-grained resource type onto the coarse four-way scheme."""
    if isinstance(fine, ResourceType):
        return fine
    return _COLLAPSE[fine]


class Tag(Enum):
    """BIO tag set: O plus begin/inside for each coarse resource type."""

    O = "O"
    ASSESSMENTS_B = "Assessments_B"
    ASSESSMENTS_I = "Assessments_I"
    EXAMS_B = "Exams_B"
    EXAMS_I = "Exams_I"
    VIDEOS_B = "Videos_B"
    VIDEOS_I = "Videos_I"
    COURSEWARES_B = "Coursewares_B"
    COURSEWARES_I = "Coursewares_I"

    @property
    def resource_type(self):
        if self is Tag.O:
            return None
        return ResourceType(self.value.rsplit("_", 1)[0])

    @property
    def is_begin(self):
        return self.value.endswith("_B")

    @property
    def is_inside(self):
        return self.value.endswith("_I")

    @staticmethod
    def begin(rtype: ResourceType) -> "Tag":
        return Tag(f"{rtype.value}_B")

    @staticmethod
    def inside(rtype: ResourceType) -> "Tag":
        return Tag(f"{rtype.value}_I")


TAGS = list(Tag)
TAG_INDEX = {t: i for i, t in enumerate(TAGS)}
NUM_TAGS = len(TAGS)


@dataclass(frozen=True)
class Token:
    text: str
    char_start: int
    char_end: int  # half-open offset into the source sentence

    def __post_init__(self):
        if not self.text:
            raise ValueError("Token text must be non-empty")
        if self.char_end - self.char_start != len(self.text):
            raise ValueError(
                f"Token offsets [{self.char_start}, {self.char_end}) do not "
                f"span text {self.text!r}"
            )


@dataclass(frozen=True)
class Sentence:
    tokens: tuple
    post_index: int
    sentence_index: int  # position within the unfolded thread

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if not self.tokens:
            raise ValueError("Sentence must have at least one token")
        prev_end = -1
        for tok in self.tokens:
            if tok.char_start < prev_end:
                raise ValueError("Token offsets must be non-decreasing")
            prev_end = tok.char_end

    @property
    def texts(self):
        return [t.text for t in self.tokens]

    def __len__(self):
        return len(self.tokens)


@dataclass
class Thread:
    thread_id: str
    posts: list  # list of posts, each a list of sentence strings; post 0 is the title
    course_id: str = ""

    def __post_init__(self):
        if not self.posts:
            raise ValueError(f"Thread {self.thread_id!r} has no posts")


@dataclass(frozen=True)
class Span:
    """Half-open token span [start, end) inside one unfolded sentence."""

    sentence_index: int
    start: int
    end: int

    def __post_init__(self):
        if self.start < 0 or self.end <= self.start:
            raise SpanError(f"bad span [{self.start}, {self.end})")

    def overlap(self, other: "Span") -> int:
        if self.sentence_index != other.sentence_index:
            return 0
        return max(0, min(self.end, other.end) - max(self.start, other.start))

    def __len__(self):
        return self.end - self.start


@dataclass(frozen=True)
class AnnotatedMention:
    thread_id: str
    span: Span
    rtype: object  # ResourceType or ResourceTypeFine
    group: str = ""


@dataclass(frozen=True)
class TaggedSentence:
    """A sentence with gold tags and its preceding-sentence context."""

    thread_id: str
    sentence: Sentence
    tags: tuple
    context: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "tags", tuple(self.tags))
        object.__setattr__(self, "context", tuple(self.context))
        if len(self.tags) != len(self.sentence.tokens):
            raise ValueError(
                f"{len(self.tags)} tags for {len(self.sentence.tokens)} tokens"
            )

    @property
    def has_mention(self):
        return any(t is not Tag.O for t in self.tags)


_PUNCT = set(string.punctuation)
# A '.' or '/' with alphanumerics on both sides marks a filename-like token
# ("sgd.py", "week2/slides", "e.g") that must stay whole.
_PROTECTED = re.compile(r"[0-9A-Za-z][./][0-9A-Za-z]")


def _split_core(core: str, base: int):
    """Split a punctuation-free-boundary chunk into alnum runs and punct chars."""
    out = []
    i = 0
    n = len(core)
    while i < n:
        if core[i] in _PUNCT:
            out.append((core[i], base + i, base + i + 1))
            i += 1
        else:
            j = i
            while j < n and core[j] not in _PUNCT:
                j += 1
            out.append((core[i:j], base + i, base + j))
            i = j
    return out


def tokenize(text: str):
    """Whitespace + punctuation tokenizer that keeps filename-like tokens whole.

    Punctuation is split into its own tokens, except '.' and '/' flanked by
    alphanumerics: "ex2regm." yields ["ex2regm", "."], while
    "dishdetail.html" stays a single token.  Returns Token objects with
    half-open character offsets into ``text``.
    """
    tokens = []
    for m in re.finditer(r"\S+", text):
        start, end = m.span()
        # Peel punctuation off both edges; protection only guards interior
        # separators, and an edge character is never interior.
        lead = []
        while start < end and text[start] in _PUNCT:
            lead.append((text[start], start, start + 1))
            start += 1
        trail = []
        while end > start and text[end - 1] in _PUNCT:
            trail.append((text[end - 1], end - 1, end))
            end -= 1
        tokens.extend(lead)
        core = text[start:end]
        if core:
            if _PROTECTED.search(core):
                tokens.append((core, start, end))
            else:
                tokens.extend(_split_core(core, start))
        tokens.extend(reversed(trail))
    return [Token(t, s, e) for t, s, e in tokens]


_BOUNDARY = re.compile(r"[.!?]+(?=\s)")


def split_sentences(text: str):
    """Split a post into sentence strings on terminal punctuation.

    A period inside a word ("sgd.py", "e.g.") never ends a sentence.  The
    concatenation of the result equals the input modulo whitespace.
    """
    boundaries = []
    for m in _BOUNDARY.finditer(text):
        # Look at the whitespace-delimited word the punctuation run closes.
        w_start = m.start()
        while w_start > 0 and not text[w_start - 1].isspace():
            w_start -= 1
        word_core = text[w_start : m.start()]
        if "." in word_core:
            continue  # abbreviation or filename, not a sentence end
        boundaries.append(m.end())
    sentences = []
    prev = 0
    for b in boundaries + [len(text)]:
        piece = text[prev:b].strip()
        if piece:
            sentences.append(piece)
        prev = b
    return sentences


def unfold_thread(thread: Thread):
    """Flatten a thread into tokenized sentences with running indices."""
    sentences = []
    idx = 0
    for post_index, post in enumerate(thread.posts):
        for raw in post:
            toks = tokenize(raw)
            if not toks:
                continue
            sentences.append(Sentence(tuple(toks), post_index, idx))
            idx += 1
    return sentences


def context_window(sentences, i: int, cap: int):
    """Up to ``cap`` sentences immediately preceding position ``i``."""
    if cap <= 0:
        return []
    lo = max(0, i - cap)
    return list(sentences[lo:i])


def bio_encode(sentence: Sentence, mentions):
    """Tag a sentence from non-overlapping mention spans.

    Mentions must carry coarse types and live inside this sentence; overlap
    or out-of-range spans raise SpanError.
    """
    tags = [Tag.O] * len(sentence.tokens)
    ordered = sorted(mentions, key=lambda m: (m.span.start, m.span.end))
    prev_end = 0
    for m in ordered:
        span = m.span
        if span.sentence_index != sentence.sentence_index:
            raise SpanError(
                f"span sentence {span.sentence_index} does not match "
                f"sentence {sentence.sentence_index}"
            )
        if span.end > len(sentence.tokens):
            raise SpanError(
                f"span [{span.start}, {span.end}) exceeds sentence length "
                f"{len(sentence.tokens)}"
            )
        if span.start < prev_end:
            raise SpanError(
                f"overlapping mention spans at sentence {span.sentence_index}: "
                f"token {span.start} already covered"
            )
        if not isinstance(m.rtype, ResourceType):
            raise TypeError(
                f"bio_encode needs coarse types; collapse {m.rtype!r} first"
            )
        tags[span.start] = Tag.begin(m.rtype)
        for k in range(span.start + 1, span.end):
            tags[k] = Tag.inside(m.rtype)
        prev_end = span.end
    return tags


def bio_decode(tags, sentence_index: int = 0, thread_id: str = "", group: str = ""):
    """Recover mention spans from a tag sequence.

    Never rejects: an inside tag without a matching begin opens a new
    mention and adds a repair note.  Returns (mentions, warnings).
    """
    mentions = []
    warnings = []
    start = None
    rtype = None
    for i, tag in enumerate(list(tags) + [Tag.O]):
        t = tag.resource_type if isinstance(tag, Tag) else None
        if isinstance(tag, Tag) and tag.is_inside and t == rtype and start is not None:
            continue
        if start is not None:
            mentions.append(
                AnnotatedMention(
                    thread_id, Span(sentence_index, start, i), rtype, group
                )
            )
            start, rtype = None, None
        if isinstance(tag, Tag) and tag is not Tag.O:
            if tag.is_inside:
                warnings.append(
                    f"orphan inside tag {tag.value} at token {i}; treated as begin"
                )
            start, rtype = i, t
    return mentions, warnings


# ---------------------------------------------------------------------------
# Serialization


def read_threads(path):
    """Read threads from JSON lines: {thread_id, course_id, posts}."""
    threads = []
    seen = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"{path}:{lineno}: invalid JSON ({exc.msg})")
            if not isinstance(obj, dict) or "thread_id" not in obj or "posts" not in obj:
                raise CorpusFormatError(
                    f"{path}:{lineno}: expected object with thread_id and posts"
                )
            posts = obj["posts"]
            if (
                not isinstance(posts, list)
                or not posts
                or not all(
                    isinstance(p, list) and all(isinstance(s, str) for s in p)
                    for p in posts
                )
            ):
                raise CorpusFormatError(
                    f"{path}:{lineno}: posts must be a non-empty list of "
                    "lists of sentence strings"
                )
            tid = str(obj["thread_id"])
            if tid in seen:
                raise CorpusFormatError(f"{path}:{lineno}: duplicate thread_id {tid!r}")
            seen.add(tid)
            threads.append(Thread(tid, posts, str(obj.get("course_id", ""))))
    return threads


def write_threads(path, threads):
    with open(path, "w", encoding="utf-8") as fh:
        for t in threads:
            fh.write(
                json.dumps(
                    {"thread_id": t.thread_id, "course_id": t.course_id, "posts": t.posts},
                    sort_keys=True,
                )
                + "\n"
            )


_HEADER = re.compile(
    r"^# thread=(\S+) post=(\d+) sent=(\d+)(?: offsets=(\S+))?$"
)


def write_tagged_corpus(path, sentences):
    """Write one-token-per-line column files.

    Every sentence opens with a header comment recording its thread, post,
    unfolded index, and character offsets; token lines are "token<TAB>tag";
    sentences are blank-line separated.  Context is not written: it is
    recoverable because a thread's sentences appear in order.
    """
    with open(path, "w", encoding="utf-8") as fh:
        for ts in sentences:
            if re.search(r"\s", ts.thread_id):
                raise CorpusFormatError(
                    f"thread_id {ts.thread_id!r} contains whitespace"
                )
            offs = ",".join(
                f"{t.char_start}:{t.char_end}" for t in ts.sentence.tokens
            )
            fh.write(
                f"# thread={ts.thread_id} post={ts.sentence.post_index} "
                f"sent={ts.sentence.sentence_index} offsets={offs}\n"
            )
            for tok, tag in zip(ts.sentence.tokens, ts.tags):
                if "\t" in tok.text or "\n" in tok.text:
                    raise CorpusFormatError(
                        f"token {tok.text!r} contains a tab or newline"
                    )
                fh.write(f"{tok.text}\t{tag.value}\n")
            fh.write("\n")


def read_tagged_corpus(path):
    """Read a column file back into TaggedSentence objects.

    Context for each sentence is rebuilt as all earlier sentences of the
    same thread, in file order.  Malformed lines raise CorpusFormatError
    with the line number.
    """
    sentences = []
    by_thread = {}
    header = None
    toks = []
    tags = []
    start_line = 0

    def flush(lineno):
        nonlocal header, toks, tags
        if header is None:
            return
        tid, post, sent, offsets = header
        if offsets is not None and len(offsets) != len(toks):
            raise CorpusFormatError(
                f"{path}:{start_line}: {len(offsets)} offsets for {len(toks)} tokens"
            )
        built = []
        cursor = 0
        for k, text in enumerate(toks):
            if offsets is not None:
                s, e = offsets[k]
                if e - s != len(text):
                    raise CorpusFormatError(
                        f"{path}:{start_line}: offset {s}:{e} does not fit "
                        f"token {text!r}"
                    )
            else:
                s, e = cursor, cursor + len(text)
                cursor = e + 1
            built.append(Token(text, s, e))
        sentence = Sentence(tuple(built), post, sent)
        prior = by_thread.setdefault(tid, [])
        ts = TaggedSentence(tid, sentence, tuple(tags), tuple(prior))
        prior.append(sentence)
        sentences.append(ts)
        header, toks, tags = None, [], []

    with open(path, "r", encoding="utf-8") as fh:
        lineno = 0
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                flush(lineno)
                continue
            if line.startswith("#"):
                if header is not None:
                    flush(lineno)
                m = _HEADER.match(line)
                if not m:
                    raise CorpusFormatError(f"{path}:{lineno}: bad header {line!r}")
                offsets = None
                if m.group(4):
                    offsets = []
                    for pair in m.group(4).split(","):
                        try:
                            s, e = pair.split(":")
                            offsets.append((int(s), int(e)))
                        except ValueError:
                            raise CorpusFormatError(
                                f"{path}:{lineno}: bad offset {pair!r}"
                            )
                header = (m.group(1), int(m.group(2)), int(m.group(3)), offsets)
                start_line = lineno
                continue
            if header is None:
                raise CorpusFormatError(
                    f"{path}:{lineno}: token line before any sentence header"
                )
            parts = line.split("\t")
            if len(parts) != 2:
                raise CorpusFormatError(
                    f"{path}:{lineno}: expected token<TAB>tag, got {line!r}"
                )
            text, tag_str = parts
            if not text:
                raise CorpusFormatError(f"{path}:{lineno}: empty token")
            try:
                tag = Tag(tag_str)
            except ValueError:
                raise CorpusFormatError(f"{path}:{lineno}: unknown tag {tag_str!r}")
            toks.append(text)
            tags.append(tag)
        flush(lineno + 1)
    return sentences
