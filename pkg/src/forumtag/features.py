"""Feature-based linear-chain CRF baseline.

Emission scores are inner products between a weight matrix and sparse
indicator features over a +/-2 token window: word forms, prefixes and
suffixes of length 2-3, shape flags, and part-of-speech tags from a
pluggable provider.  The default provider is a small rule/lexicon tagger so
the baseline needs no external models.
"""

from __future__ import annotations

import re
import string
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import crf
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .corpus import NUM_TAGS, TAG_INDEX, TAGS
from .optim import zeros_params
from .training import FitResult, fit

BOS = "<s>"
EOS = "</s>"

_LEXICON = {
    "DT": {"the", "a", "an", "this", "that", "these", "those", "some", "any", "each"},
    "IN": {"of", "in", "on", "at", "for", "with", "from", "by", "about", "into", "over", "after", "before"},
    "TO": {"to"},
    "PRP": {"i", "you", "he", "she", "it", "we", "they", "me", "him", "her", "us", "them",
            "my", "your", "his", "its", "our", "their", "anyone", "everyone", "someone"},
    "CC": {"and", "or", "but", "nor", "so", "yet"},
    "MD": {"can", "could", "will", "would", "shall", "should", "may", "might", "must"},
    "VBZ": {"is", "has", "does", "seems", "works", "fails"},
    "VBP": {"am", "are", "do", "have", "need", "want", "think", "know"},
    "VBD": {"was", "were", "did", "had", "got", "took", "found"},
    "WRB": {"when", "where", "why", "how"},
    "WP": {"who", "what", "which"},
    "RB": {"not", "very", "too", "also", "still", "already", "again", "here", "there", "now"},
    "UH": {"hi", "hello", "thanks", "please", "ok", "okay", "yes", "no"},
    "EX": {"anybody", "nobody"},
}
_WORD_TO_POS = {w: pos for pos, words in _LEXICON.items() for w in words}
_PUNCT = set(string.punctuation)
_NUMBER = re.compile(r"\d+([.,/]\d+)*")


def default_pos_tagger(words):
    """Deterministic rule/lexicon part-of-speech tags, one per word."""
    out = []
    for w in words:
        lw = w.lower()
        if all(ch in _PUNCT for ch in w):
            out.append("PUNCT")
        elif _NUMBER.fullmatch(w):
            out.append("CD")
        elif lw in _WORD_TO_POS:
            out.append(_WORD_TO_POS[lw])
        elif lw.endswith("ing") and len(lw) > 4:
            out.append("VBG")
        elif lw.endswith("ed") and len(lw) > 3:
            out.append("VBD")
        elif lw.endswith("ly") and len(lw) > 3:
            out.append("RB")
        elif w[:1].isupper():
            out.append("NNP")
        elif lw.endswith("s") and len(lw) > 3:
            out.append("NNS")
        else:
            out.append("NN")
    return out


def extract_baseline_features(words, pos_tags, t):
    """Feature strings for position t, named "f<family>@<offset>=<value>".

    Families: 1 word form, 2 prefix, 3 suffix, 4 is-digit, 5 is-title,
    6 is-upper, 7 POS, 8 coarse POS (first two characters).  Words and POS
    use a +/-2 window padded with sentence markers.
    """
    if len(words) != len(pos_tags):
        raise ValueError(f"{len(words)} words but {len(pos_tags)} POS tags")
    feats = []
    n = len(words)
    for off in (-2, -1, 0, 1, 2):
        i = t + off
        w = words[i] if 0 <= i < n else (BOS if i < 0 else EOS)
        feats.append(f"f1@{off}={w.lower()}")
    w0 = words[t]
    for length in (2, 3):
        feats.append(f"f2@0={w0[:length].lower()}")
        feats.append(f"f3@0={w0[-length:].lower()}")
    feats.append(f"f4@0={w0.isdigit()}")
    feats.append(f"f5@0={w0.istitle()}")
    feats.append(f"f6@0={w0.isupper()}")
    for off in (-2, -1, 0, 1, 2):
        i = t + off
        p = pos_tags[i] if 0 <= i < n else (BOS if i < 0 else EOS)
        feats.append(f"f7@{off}={p}")
        feats.append(f"f8@{off}={p[:2]}")
    return list(dict.fromkeys(feats))


def sentence_features(sentence, pos_tagger=default_pos_tagger):
    words = [tok.text for tok in sentence.tokens]
    pos_tags = pos_tagger(words)
    return [extract_baseline_features(words, pos_tags, t) for t in range(len(words))]


class FeatureCrfModel:
    """CRF over sparse indicator features; convex, so weights start at zero."""

    def __init__(self, feature_names, l2: float = 0.0, pos_tagger=default_pos_tagger):
        self.feature_index = {name: i for i, name in enumerate(feature_names)}
        self.l2 = float(l2)
        self.pos_tagger = pos_tagger
        self.weights = zeros_params((len(self.feature_index), NUM_TAGS), name="feat_w")
        self.transitions = zeros_params((NUM_TAGS + 2, NUM_TAGS + 2), name="crf.transitions")
        crf.apply_structural_mask(self.transitions.data, NUM_TAGS)

    def feature_ids(self, sentence):
        """Active feature ids per token; features unseen in training are dropped."""
        ids = []
        for feats in sentence_features(sentence, self.pos_tagger):
            ids.append(
                [self.feature_index[f] for f in feats if f in self.feature_index]
            )
        return ids

    def emissions(self, sentence, feature_ids=None):
        if feature_ids is None:
            feature_ids = self.feature_ids(sentence)
        rows = []
        for ids in feature_ids:
            if ids:
                rows.append(ad.tsum(ad.rows(self.weights, ids), axis=0))
            else:
                rows.append(ad.constant(np.zeros(NUM_TAGS, dtype=self.weights.data.dtype)))
        return ad.stack_rows(rows)

    def loss(self, example, feature_ids=None):
        emissions = self.emissions(example.sentence, feature_ids)
        tag_ids = [TAG_INDEX[t] for t in example.tags]
        return crf.crf_nll(emissions, self.transitions, tag_ids)

    def tag_sentence(self, sentence, context=()):
        from .tagger import TagPrediction

        emissions = self.emissions(sentence)
        path, score = crf.viterbi_decode(emissions.data, self.transitions.data)
        return TagPrediction([TAGS[i] for i in path], score, None)

    def params(self):
        return {"feat_w": self.weights, "crf.transitions": self.transitions}

    def save(self, path):
        names = [None] * len(self.feature_index)
        for name, i in self.feature_index.items():
            names[i] = name
        save_checkpoint(
            path,
            self.params(),
            {"kind": "feature-crf", "features": names, "l2": self.l2},
        )

    @classmethod
    def load(cls, path) -> "FeatureCrfModel":
        tensors, config = load_checkpoint(path)
        if config.get("kind") != "feature-crf":
            raise CheckpointError(f"{path}: not a feature CRF checkpoint")
        model = cls(config["features"], config.get("l2", 0.0))
        for name, p in model.params().items():
            if tensors[name].shape != p.data.shape:
                raise CheckpointError(
                    f"{path}: shape mismatch for {name}: "
                    f"{tensors[name].shape} vs {p.data.shape}"
                )
            p.data[...] = tensors[name]
        return model


@dataclass
class FeatureTrainResult:
    model: FeatureCrfModel
    fit: FitResult
    config: object

    @property
    def log(self):
        return self.fit.log


def train_feature_crf(examples, config, pos_tagger=default_pos_tagger) -> FeatureTrainResult:
    """Fit the baseline with the shared loop.

    The feature inventory is fixed from the training examples up front;
    an optional L2 penalty on the emission weights is added per batch.
    """
    examples = list(examples)
    rng = np.random.default_rng(config.seed)
    names = {}
    for ex in examples:
        for feats in sentence_features(ex.sentence, pos_tagger):
            for f in feats:
                names.setdefault(f, None)
    model = FeatureCrfModel(list(names), config.l2, pos_tagger)
    featurized = {id(ex): model.feature_ids(ex.sentence) for ex in examples}
    trainable = model.params()

    def batch_loss(batch, tape):
        losses = [model.loss(ex, featurized[id(ex)]) for ex in batch]
        total = ad.affine(ad.tsum(ad.stack_rows(losses)), 1.0 / len(losses), 0.0)
        if model.l2 > 0:
            total = ad.add(
                total, ad.affine(ad.tsum(ad.mul(model.weights, model.weights)), model.l2, 0.0)
            )
        return total

    def decode(ex, cache):
        return model.tag_sentence(ex.sentence).tags

    result = fit(
        examples, config, rng, batch_loss=batch_loss, decode=decode, trainable=trainable
    )
    return FeatureTrainResult(model, result, config)
