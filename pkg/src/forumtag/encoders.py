"""Token, character, and context encoders.

Word lookup is case-folded (pretrained vectors are lowercase); the character
encoder sees the original casing, which is most of the signal for ids like
"Q3" or "hw2".  Context sentences are each compressed to the final hidden
state of a shared GRU over a separate embedding table.
"""

from __future__ import annotations

import string
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .cells import GRUCell, LSTMCell
from .optim import init_params


class VectorFormatError(ValueError):
    """Raised for malformed pretrained vector files; carries file:line."""


class Vocabulary:
    """Token-to-id mapping with reserved padding and unknown entries."""

    PAD = "<pad>"
    UNK = "<unk>"

    def __init__(self, tokens, fold_case: bool = True):
        self.fold_case = fold_case
        self.tokens = [self.PAD, self.UNK]
        self._index = {self.PAD: 0, self.UNK: 1}
        for tok in tokens:
            key = tok.lower() if fold_case else tok
            if key not in self._index:
                self._index[key] = len(self.tokens)
                self.tokens.append(key)

    @classmethod
    def from_tagged_sentences(cls, sentences, fold_case: bool = True):
        """Vocabulary over example tokens and their context tokens."""

        def stream():
            seen = set()
            for ts in sentences:
                for sent in list(ts.context) + [ts.sentence]:
                    key = (ts.thread_id, sent.sentence_index)
                    if key in seen:
                        continue
                    seen.add(key)
                    yield from (t.text for t in sent.tokens)

        return cls(stream(), fold_case)

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return (token.lower() if self.fold_case else token) in self._index

    def id_of(self, token: str) -> int:
        key = token.lower() if self.fold_case else token
        return self._index.get(key, 1)

    @property
    def pad_id(self):
        return 0

    @property
    def unk_id(self):
        return 1


class CharAlphabet:
    """Character-to-id mapping over printable ASCII plus an unknown slot."""

    UNK_ID = 0

    def __init__(self, extra: str = ""):
        chars = string.printable.strip() + " "  # printable minus trailing whitespace controls
        self.chars = []
        self._index = {}
        for ch in chars + extra:
            if ch not in self._index:
                self._index[ch] = len(self.chars) + 1
                self.chars.append(ch)

    def __len__(self):
        return len(self.chars) + 1  # +1 for the unknown slot

    def ids(self, word: str):
        return [self._index.get(ch, self.UNK_ID) for ch in word]


@dataclass
class CoverageStats:
    vocab_size: int
    covered: int

    @property
    def uncovered(self):
        return self.vocab_size - self.covered

    @property
    def oov_rate(self):
        return self.uncovered / self.vocab_size if self.vocab_size else 0.0


def load_pretrained_vectors(path, vocab: Vocabulary, dim: int, rng, dtype=np.float32):
    """Build an embedding matrix from a whitespace text vector file.

    Rows for covered vocabulary entries come from the file; uncovered rows
    keep their random initialization.  The padding row is zeroed.  Returns
    (embedding Tensor of shape (len(vocab), dim), CoverageStats).
    """
    table = init_params((len(vocab), dim), rng, dtype, name="word_emb")
    table.data[vocab.pad_id] = 0.0
    covered = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split(" ")
            if len(parts) - 1 != dim:
                raise VectorFormatError(
                    f"{path}:{lineno}: expected {dim} values, got {len(parts) - 1}"
                )
            word = parts[0]
            try:
                values = np.array([float(v) for v in parts[1:]], dtype=dtype)
            except ValueError:
                raise VectorFormatError(f"{path}:{lineno}: non-numeric vector value")
            if word in vocab:
                wid = vocab.id_of(word)
                if wid not in (vocab.pad_id, vocab.unk_id):
                    table.data[wid] = values
                    covered.add(wid)
    # PAD and UNK are bookkeeping rows, not real words.
    return table, CoverageStats(len(vocab) - 2, len(covered))


def read_vector_vocab(path):
    """The set of words a vector file covers (first column)."""
    words = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line:
                words.add(line.split(" ", 1)[0])
    return words


class CharEncoder:
    """Bidirectional LSTM over characters; output is [h_fwd_last; h_bwd_last]."""

    def __init__(self, alphabet: CharAlphabet, char_dim, hidden, rng, dtype=np.float32):
        self.alphabet = alphabet
        self.char_dim = int(char_dim)
        self.hidden = int(hidden)
        self.emb = init_params((len(alphabet), self.char_dim), rng, dtype, name="char_emb")
        self.fwd = LSTMCell(self.char_dim, self.hidden, rng, dtype, name="char_fwd")
        self.bwd = LSTMCell(self.char_dim, self.hidden, rng, dtype, name="char_bwd")

    @property
    def output_dim(self):
        return 2 * self.hidden

    def encode(self, word: str, cache: dict | None = None):
        """Fixed-size character representation of one word."""
        if cache is not None and ("char", word) in cache:
            return cache[("char", word)]
        ids = self.alphabet.ids(word)
        if not ids:
            raise ValueError("cannot char-encode an empty word")
        emb_rows = ad.rows(self.emb, ids)
        xs = [
            ad.reshape(ad.narrow(emb_rows, (slice(i, i + 1), slice(None))), (self.char_dim,))
            for i in range(len(ids))
        ]
        h_fwd = self.fwd.run(xs)[-1]
        h_bwd = self.bwd.run(xs[::-1])[-1]
        out = ad.concat([h_fwd, h_bwd])
        if cache is not None:
            cache[("char", word)] = out
        return out

    def params(self):
        out = {"char_emb": self.emb}
        out.update(self.fwd.params())
        out.update(self.bwd.params())
        return out


class ContextEncoder:
    """One GRU, shared across context sentences, over its own embeddings."""

    def __init__(self, vocab: Vocabulary, word_dim, hidden, rng, dtype=np.float32):
        self.vocab = vocab
        self.word_dim = int(word_dim)
        self.hidden = int(hidden)
        self.emb = init_params((len(vocab), self.word_dim), rng, dtype, name="ctx_emb")
        self.emb.data[vocab.pad_id] = 0.0
        self.gru = GRUCell(self.word_dim, self.hidden, rng, dtype, name="ctx_gru")

    def encode_sentence(self, sentence, cache_key=None, cache: dict | None = None):
        """Final GRU state over the sentence's word embeddings."""
        if cache is not None and cache_key is not None and ("ctx", cache_key) in cache:
            return cache[("ctx", cache_key)]
        ids = [self.vocab.id_of(t.text) for t in sentence.tokens]
        emb_rows = ad.rows(self.emb, ids)
        h = self.gru.initial_state()
        for i in range(len(ids)):
            x = ad.reshape(
                ad.narrow(emb_rows, (slice(i, i + 1), slice(None))), (self.word_dim,)
            )
            h = self.gru.step(x, h)
        if cache is not None and cache_key is not None:
            cache[("ctx", cache_key)] = h
        return h

    def encode_context(self, sentences, cache: dict | None = None):
        """One vector per context sentence; empty context gives [].

        Cache entries are keyed by the sentence value itself, so repeated
        windows reuse one encoding but equal indices from different
        threads can never collide.
        """
        return [self.encode_sentence(s, s, cache) for s in sentences]

    def params(self):
        out = {"ctx_emb": self.emb}
        out.update(self.gru.params())
        return out


def input_vector(token_text, word_emb, vocab, char_encoder=None, cache=None):
    """Per-token input: word embedding, optionally with char features.

    The padding token maps to an all-zero vector of the full input width.
    Unknown words fall back to the UNK embedding row; with the char encoder
    enabled their character representation still differentiates them.
    """
    word_dim = word_emb.data.shape[1]
    if token_text == vocab.PAD:
        width = word_dim + (char_encoder.output_dim if char_encoder else 0)
        return ad.constant(np.zeros(width, dtype=word_emb.data.dtype))
    wid = vocab.id_of(token_text)
    w = ad.reshape(ad.rows(word_emb, [wid]), (word_dim,))
    if char_encoder is None:
        return w
    return ad.concat([w, char_encoder.encode(token_text, cache)])
