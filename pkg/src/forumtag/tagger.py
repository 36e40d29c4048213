"""Attentive BLSTM-CRF sequence tagger and its ablations.

The full model reads each token as a pretrained word embedding concatenated
with a character-BLSTM summary, attends over encoded preceding sentences
from each direction's previous hidden state, runs a bidirectional LSTM, and
scores tag sequences with a linear-chain CRF.  Switches in TaggerConfig turn
each part off to recover the ablation variants.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import autodiff as ad
from . import crf
from .cells import LSTMCell
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .corpus import NUM_TAGS, TAG_INDEX, TAGS, Tag
from .encoders import (
    CharAlphabet,
    CharEncoder,
    ContextEncoder,
    Vocabulary,
    input_vector,
    load_pretrained_vectors,
)
from .optim import init_params, zeros_params
from .training import FitResult, fit

VARIANTS = ("blstm", "crf", "blstm-crf", "blstm-crf-ce", "blstm-crf-ce-ca")


@dataclass
class TaggerConfig:
    use_crf: bool = True
    use_char_encoder: bool = True
    use_context_attention: bool = True
    word_dim: int = 200
    char_dim: int = 64
    char_hidden: int = 64
    hidden: int = 256  # sentence LSTM size per direction
    context_hidden: int = 256
    attn_dim: int | None = None  # defaults to context_hidden
    context_cap: int = 5  # max preceding sentences offered to attention
    learning_rate: float = 0.01
    batch_size: int = 16
    max_epochs: int = 20
    patience: int = 3
    val_fraction: float = 0.1
    clip_norm: float = 5.0
    seed: int = 0
    l2: float = 0.0  # feature-CRF regularizer strength
    stop_f1: float | None = None  # optional early exit on validation F1
    softmax_emissions_into_crf: bool = False
    mask_illegal_transitions: bool = False
    freeze_word_embeddings: bool = False
    dtype: str = "float32"

    def validate(self):
        if self.use_context_attention and not self.use_crf:
            raise ValueError("context attention requires the CRF output layer")
        for name in (
            "word_dim",
            "char_dim",
            "char_hidden",
            "hidden",
            "context_hidden",
            "batch_size",
            "max_epochs",
            "patience",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("val_fraction must be in [0, 1)")
        if self.context_cap < 0:
            raise ValueError("context_cap must be >= 0")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"dtype must be float32 or float64, got {self.dtype!r}")
        return self

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64

    @property
    def attention_dim(self):
        return self.attn_dim if self.attn_dim else self.context_hidden

    @classmethod
    def for_variant(cls, variant: str, **overrides) -> "TaggerConfig":
        """Config for a named ablation; extra keyword arguments override fields."""
        switches = {
            "blstm": dict(use_crf=False, use_char_encoder=False, use_context_attention=False),
            "blstm-crf": dict(use_crf=True, use_char_encoder=False, use_context_attention=False),
            "blstm-crf-ce": dict(use_crf=True, use_char_encoder=True, use_context_attention=False),
            "blstm-crf-ce-ca": dict(use_crf=True, use_char_encoder=True, use_context_attention=True),
        }
        if variant == "crf":
            # Feature baseline: the neural switches are ignored downstream.
            base = cls(use_crf=True, use_char_encoder=False, use_context_attention=False)
        elif variant in switches:
            base = cls(**switches[variant])
        else:
            raise ValueError(f"unknown variant {variant!r}; choose from {VARIANTS}")
        return replace(base, **overrides).validate()


@dataclass
class TagPrediction:
    tags: list
    score: float
    attention: dict | None = None  # per direction: one weight row per token


class TaggerParams:
    """All trainable tensors of one model, in a fixed construction order."""

    def __init__(self, config: TaggerConfig, vocab: Vocabulary, alphabet: CharAlphabet,
                 rng: np.random.Generator, pretrained_path=None):
        dtype = config.np_dtype
        self.coverage = None
        if pretrained_path is not None:
            self.word_emb, self.coverage = load_pretrained_vectors(
                pretrained_path, vocab, config.word_dim, rng, dtype
            )
        else:
            self.word_emb = init_params((len(vocab), config.word_dim), rng, dtype,
                                        name="word_emb")
            self.word_emb.data[vocab.pad_id] = 0.0
        self.char_encoder = None
        if config.use_char_encoder:
            self.char_encoder = CharEncoder(
                alphabet, config.char_dim, config.char_hidden, rng, dtype
            )
        self.context_encoder = None
        self.attn_query = None
        self.attn_ctx = None
        self.attn_v = None
        input_size = config.word_dim + (
            2 * config.char_hidden if config.use_char_encoder else 0
        )
        if config.use_context_attention:
            self.context_encoder = ContextEncoder(
                vocab, config.word_dim, config.context_hidden, rng, dtype
            )
            d_a = config.attention_dim
            self.attn_query = init_params((config.hidden, d_a), rng, dtype, name="attn_query")
            self.attn_ctx = init_params((config.context_hidden, d_a), rng, dtype, name="attn_ctx")
            self.attn_v = init_params((d_a,), rng, dtype, name="attn_v")
            input_size += config.context_hidden
        self.fwd = LSTMCell(input_size, config.hidden, rng, dtype, name="fwd")
        self.bwd = LSTMCell(input_size, config.hidden, rng, dtype, name="bwd")
        self.out_w = init_params((2 * config.hidden, NUM_TAGS), rng, dtype, name="out_w")
        self.out_b = zeros_params((NUM_TAGS,), dtype, name="out_b")
        self.transitions = None
        if config.use_crf:
            self.transitions = crf.make_transitions(NUM_TAGS, rng, dtype)
            if config.mask_illegal_transitions:
                crf.apply_bio_mask(self.transitions.data, TAGS)

    def all(self) -> dict:
        out = {"word_emb": self.word_emb}
        if self.char_encoder is not None:
            out.update(self.char_encoder.params())
        if self.context_encoder is not None:
            out.update(self.context_encoder.params())
            out["attn_query"] = self.attn_query
            out["attn_ctx"] = self.attn_ctx
            out["attn_v"] = self.attn_v
        out.update(self.fwd.params())
        out.update(self.bwd.params())
        out["out_w"] = self.out_w
        out["out_b"] = self.out_b
        if self.transitions is not None:
            out["crf.transitions"] = self.transitions
        return out

    def count(self) -> int:
        return sum(p.data.size for p in self.all().values())


class TaggerModel:
    def __init__(self, config: TaggerConfig, vocab: Vocabulary,
                 alphabet: CharAlphabet | None = None,
                 rng: np.random.Generator | None = None, pretrained_path=None):
        self.config = config.validate()
        self.vocab = vocab
        self.alphabet = alphabet if alphabet is not None else CharAlphabet()
        if rng is None:
            rng = np.random.default_rng(config.seed)
        self.params = TaggerParams(config, vocab, self.alphabet, rng, pretrained_path)

    # -- forward ----------------------------------------------------------

    def _attend(self, h_prev, ctx_mat, ctx_proj):
        q = ad.matmul(h_prev, self.params.attn_query)
        scores = ad.matmul(ad.tanh(ad.add(ctx_proj, q)), self.params.attn_v)
        alpha = ad.softmax(scores, axis=-1)
        return ad.matmul(alpha, ctx_mat), alpha

    def _run_direction(self, cell, inputs, ctx_mat, ctx_proj, zero_ctx):
        """One directional pass; attention queries use this cell's own state."""
        state = cell.initial_state()
        hidden = []
        alphas = []
        for x in inputs:
            if self.config.use_context_attention:
                if ctx_mat is not None:
                    a_c, alpha = self._attend(state[0], ctx_mat, ctx_proj)
                    alphas.append(alpha.data.copy())
                else:
                    a_c = zero_ctx
                    alphas.append(np.zeros(0, dtype=self.config.np_dtype))
                x = ad.concat([x, a_c])
            state = cell.step(x, state)
            hidden.append(state[0])
        return hidden, alphas

    def _logits(self, sentence, context, cache=None):
        """Unnormalized (T, K) scores plus attention records."""
        if len(sentence.tokens) == 0:
            raise ValueError("cannot tag an empty sentence")
        cfg = self.config
        inputs = [
            input_vector(
                tok.text, self.params.word_emb, self.vocab,
                self.params.char_encoder, cache,
            )
            for tok in sentence.tokens
        ]
        ctx_mat = ctx_proj = None
        zero_ctx = None
        attention = None
        if cfg.use_context_attention:
            window = list(context)[-cfg.context_cap:] if cfg.context_cap else []
            if window:
                vecs = self.params.context_encoder.encode_context(window, cache)
                ctx_mat = ad.stack_rows(vecs)
                ctx_proj = ad.matmul(ctx_mat, self.params.attn_ctx)
            else:
                zero_ctx = ad.constant(
                    np.zeros(cfg.context_hidden, dtype=cfg.np_dtype)
                )
        h_fwd, a_fwd = self._run_direction(
            self.params.fwd, inputs, ctx_mat, ctx_proj, zero_ctx
        )
        h_bwd, a_bwd = self._run_direction(
            self.params.bwd, inputs[::-1], ctx_mat, ctx_proj, zero_ctx
        )
        h_bwd.reverse()
        a_bwd.reverse()
        rows = [
            ad.add(ad.matmul(ad.concat([hf, hb]), self.params.out_w), self.params.out_b)
            for hf, hb in zip(h_fwd, h_bwd)
        ]
        logits = ad.stack_rows(rows)
        if cfg.use_context_attention:
            attention = {"forward": a_fwd, "backward": a_bwd}
        return logits, attention

    def _crf_emissions(self, logits):
        if self.config.softmax_emissions_into_crf:
            return ad.softmax(logits, axis=-1)
        return logits

    def emissions(self, sentence, context=(), cache=None):
        """Per-token tag scores: CRF potentials, or probabilities without CRF."""
        logits, _ = self._logits(sentence, context, cache)
        if self.config.use_crf:
            return self._crf_emissions(logits)
        return ad.softmax(logits, axis=-1)

    # -- loss and decoding --------------------------------------------------

    def loss(self, example, cache=None):
        """Negative log-likelihood of the example's gold tag sequence."""
        logits, _ = self._logits(example.sentence, example.context, cache)
        tag_ids = [TAG_INDEX[t] for t in example.tags]
        if self.config.use_crf:
            return crf.crf_nll(
                self._crf_emissions(logits), self.params.transitions, tag_ids
            )
        t_len = len(tag_ids)
        lse = ad.tsum(ad.log_sum_exp(logits, axis=1))
        gold = ad.tsum(ad.take_pairs(logits, np.arange(t_len), tag_ids))
        return ad.sub(lse, gold)

    def tag_sentence(self, sentence, context=(), cache=None) -> TagPrediction:
        logits, attention = self._logits(sentence, context, cache)
        if self.config.use_crf:
            emissions = self._crf_emissions(logits)
            path, score = crf.viterbi_decode(emissions.data, self.params.transitions.data)
        else:
            probs = ad.softmax(logits, axis=-1).data
            path = [int(i) for i in np.argmax(probs, axis=1)]
            score = float(np.sum(np.log(probs[np.arange(len(path)), path])))
        return TagPrediction([TAGS[i] for i in path], score, attention)

    # -- persistence ---------------------------------------------------------

    def save(self, path):
        config = {
            "kind": "neural",
            "tagger": asdict(self.config),
            "vocab": self.vocab.tokens[2:],
            "fold_case": self.vocab.fold_case,
        }
        save_checkpoint(path, self.params.all(), config)

    @classmethod
    def load(cls, path) -> "TaggerModel":
        tensors, config = load_checkpoint(path)
        if config.get("kind") != "neural":
            raise CheckpointError(f"{path}: not a neural tagger checkpoint")
        cfg = TaggerConfig(**config["tagger"])
        vocab = Vocabulary(config["vocab"], config.get("fold_case", True))
        model = cls(cfg, vocab)
        own = model.params.all()
        if set(own) != set(tensors):
            missing = sorted(set(own) ^ set(tensors))
            raise CheckpointError(f"{path}: parameter names do not match: {missing}")
        for name, p in own.items():
            if tensors[name].shape != p.data.shape:
                raise CheckpointError(
                    f"{path}: shape mismatch for {name}: "
                    f"{tensors[name].shape} vs {p.data.shape}"
                )
            p.data[...] = tensors[name].astype(p.data.dtype)
        return model


@dataclass
class TrainResult:
    model: object
    fit: FitResult
    config: TaggerConfig
    coverage: object = None

    @property
    def log(self):
        return self.fit.log


def trainable_params(model: TaggerModel) -> dict:
    params = model.params.all()
    if model.config.freeze_word_embeddings:
        params = {k: v for k, v in params.items() if k != "word_emb"}
    return params


def train(examples, config: TaggerConfig, pretrained_path=None) -> TrainResult:
    """Train a neural variant on example sentences (their context included).

    Shuffling, the validation split, early stopping, and the best-epoch
    snapshot all come from the shared fit loop; this wires in the model.
    """
    config.validate()
    examples = list(examples)
    rng = np.random.default_rng(config.seed)
    vocab = Vocabulary.from_tagged_sentences(examples)
    model = TaggerModel(config, vocab, CharAlphabet(), rng, pretrained_path)
    trainable = trainable_params(model)

    def batch_loss(batch, tape):
        losses = [model.loss(ex, tape.cache) for ex in batch]
        return ad.affine(ad.tsum(ad.stack_rows(losses)), 1.0 / len(losses), 0.0)

    def decode(ex, cache):
        return model.tag_sentence(ex.sentence, ex.context, cache).tags

    result = fit(
        examples, config, rng, batch_loss=batch_loss, decode=decode, trainable=trainable
    )
    return TrainResult(model, result, config, model.params.coverage)


def cross_validate(examples, config: TaggerConfig, folds: int, pretrained_path=None):
    """K-fold evaluation; returns one (precision, recall, f1) triple per fold."""
    from .evaluation import micro_prf

    examples = list(examples)
    if folds < 2 or folds > len(examples):
        raise ValueError(f"folds must be in [2, {len(examples)}]")
    rng = np.random.default_rng(config.seed)
    order = rng.permutation(len(examples))
    scores = []
    for k in range(folds):
        held = set(order[k::folds].tolist())
        train_set = [examples[i] for i in range(len(examples)) if i not in held]
        test_set = [examples[i] for i in sorted(held)]
        result = train(train_set, config, pretrained_path)
        cache = {}
        preds = [
            result.model.tag_sentence(ex.sentence, ex.context, cache).tags
            for ex in test_set
        ]
        scores.append(micro_prf([list(ex.tags) for ex in test_set], preds))
    return scores


def train_variant(variant, examples, config=None, pretrained_path=None):
    """Train any named variant, dispatching the feature baseline."""
    if config is None:
        config = TaggerConfig.for_variant(variant)
    if variant == "crf":
        from .features import train_feature_crf

        return train_feature_crf(examples, config)
    return train(examples, config, pretrained_path)


def make_gradcheck_example():
    """A tiny tagged sentence with two context sentences, for verification."""
    from .corpus import Sentence, TaggedSentence, Token

    def sent(words, post, idx):
        toks = []
        pos = 0
        for w in words:
            toks.append(Token(w, pos, pos + len(w)))
            pos += len(w) + 1
        return Sentence(tuple(toks), post, idx)

    ctx = (
        sent(["please", "watch", "video", "2"], 0, 0),
        sent(["it", "is", "short"], 1, 1),
    )
    sentence = sent(["ok", "hw3", "?"], 1, 2)
    tags = (Tag.O, Tag.ASSESSMENTS_B, Tag.O)
    return TaggedSentence("gc-thread", sentence, tags, ctx)


def gradcheck_model(config: TaggerConfig | None = None, sample=None, h=1e-5, seed=0):
    """Verify analytic gradients of a whole model against central differences.

    Defaults to the full variant at small, mutually distinct dimensions (so
    transposition mistakes cannot cancel out) in double precision.  Returns
    (max relative error, per-parameter errors).
    """
    from .autodiff import grad_check

    if config is None:
        config = TaggerConfig.for_variant(
            "blstm-crf-ce-ca",
            word_dim=8,
            char_dim=6,
            char_hidden=5,
            hidden=7,
            context_hidden=6,
            attn_dim=5,
            context_cap=5,
            dtype="float64",
            seed=seed,
        )
    example = make_gradcheck_example()
    vocab = Vocabulary.from_tagged_sentences([example])
    rng = np.random.default_rng(config.seed)
    model = TaggerModel(config, vocab, CharAlphabet(), rng)
    params = trainable_params(model)
    return grad_check(
        lambda: model.loss(example),
        params,
        h=h,
        sample=sample,
        rng=np.random.default_rng(config.seed + 1),
    )
