"""Generic minibatch training loop with validation-based early stopping.

Shared by the neural taggers and the feature CRF baseline.  The loop owns
shuffling, the hold-out split, ADAM, gradient clipping, snapshotting of the
best parameters, and the per-epoch log; models supply a batch loss and a
decoder.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tape, zero_grads
from .evaluation import micro_prf
from .optim import AdamState, adam_step, clip_global_norm


@dataclass
class FitResult:
    log: list = field(default_factory=list)
    best_epoch: int = 0
    best_val_f1: float = 0.0
    val_is_train: bool = False
    stopped: str = "max_epochs"


def fit(examples, config, rng: np.random.Generator, *, batch_loss, decode, trainable):
    """Train until validation micro-F1 stops improving.

    ``batch_loss(batch, tape)`` returns the scalar mean loss; ``decode(ex,
    cache)`` returns predicted tags; ``trainable`` maps names to parameter
    tensors.  A fraction of the examples is held out for validation; when
    the corpus is too small for a non-empty hold-out, validation runs on
    the training set itself.  The best-epoch parameters are restored before
    returning.
    """
    examples = list(examples)
    if not examples:
        raise ValueError("cannot train on an empty example list")
    order = rng.permutation(len(examples))
    n_val = int(len(examples) * config.val_fraction)
    val_idx = order[:n_val]
    train_idx = order[n_val:]
    result = FitResult(val_is_train=n_val == 0)
    val_examples = (
        [examples[i] for i in val_idx] if n_val else [examples[i] for i in train_idx]
    )
    gold_tags = [list(ex.tags) for ex in val_examples]

    adam = AdamState(lr=config.learning_rate)
    best_snapshot = None
    best_f1 = -1.0
    for epoch in range(1, config.max_epochs + 1):
        perm = rng.permutation(len(train_idx))
        epoch_loss = 0.0
        n_batches = 0
        for lo in range(0, len(perm), config.batch_size):
            batch = [examples[train_idx[i]] for i in perm[lo : lo + config.batch_size]]
            with Tape() as tape:
                loss = batch_loss(batch, tape)
            zero_grads(trainable)
            tape.backward(loss)
            grads = {
                name: (p.grad if p.grad is not None else np.zeros_like(p.data))
                for name, p in trainable.items()
            }
            clip_global_norm(grads, config.clip_norm)
            adam_step(adam, trainable, grads)
            epoch_loss += float(loss.data)
            n_batches += 1
        cache = {}
        predicted = [decode(ex, cache) for ex in val_examples]
        precision, recall, f1 = micro_prf(gold_tags, predicted)
        result.log.append(
            {
                "epoch": epoch,
                "train_loss": epoch_loss / max(1, n_batches),
                "val_precision": precision,
                "val_recall": recall,
                "val_f1": f1,
            }
        )
        if f1 > best_f1:
            best_f1 = f1
            result.best_epoch = epoch
            best_snapshot = {name: p.data.copy() for name, p in trainable.items()}
        if config.stop_f1 is not None and best_f1 >= config.stop_f1:
            result.stopped = "target_f1"
            break
        if epoch - result.best_epoch >= config.patience:
            result.stopped = "early_stopping"
            break
    result.best_val_f1 = max(best_f1, 0.0)
    if best_snapshot is not None:
        for name, p in trainable.items():
            p.data[...] = best_snapshot[name]
    return result
