"""Linear-chain CRF: scoring, partition function, decoding, and an oracle.

A sequence of T emission rows over K labels is scored together with a
(K+2) x (K+2) transition matrix whose last two rows/columns are virtual
START and STOP states.  Structurally impossible transitions (into START,
out of STOP) are pinned to a large negative constant rather than -inf so
that exp() underflows cleanly to zero and gradients stay finite.
"""

from __future__ import annotations

import itertools

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

NEG_INF = -1e4


class InstanceTooLargeError(ValueError):
    """Raised when brute-force enumeration would exceed the budget."""


def start_stop(num_tags: int):
    return num_tags, num_tags + 1


def make_transitions(num_tags, rng, dtype=np.float32, name="crf.transitions"):
    """Random transition matrix with START/STOP structure applied."""
    from .optim import init_params

    t = init_params((num_tags + 2, num_tags + 2), rng, dtype, name=name)
    apply_structural_mask(t.data, num_tags)
    return t


def apply_structural_mask(matrix: np.ndarray, num_tags: int) -> None:
    start, stop = start_stop(num_tags)
    matrix[:, start] = NEG_INF  # nothing enters START
    matrix[stop, :] = NEG_INF  # nothing leaves STOP
    matrix[start, stop] = NEG_INF  # empty sequences are not scored


def apply_bio_mask(matrix: np.ndarray, tags) -> None:
    """Forbid inside tags that do not continue a same-type mention.

    ``tags`` is the label list in index order.  Off by default; decoding is
    normally left free and repaired by the BIO decoder.
    """
    num_tags = len(tags)
    start, _ = start_stop(num_tags)
    for j, tj in enumerate(tags):
        if not tj.is_inside:
            continue
        for i, ti in enumerate(tags):
            if ti.resource_type != tj.resource_type:
                matrix[i, j] = NEG_INF
        matrix[start, j] = NEG_INF


def _as_arrays(emissions, transitions):
    e = emissions.data if isinstance(emissions, Tensor) else np.asarray(emissions)
    a = transitions.data if isinstance(transitions, Tensor) else np.asarray(transitions)
    if e.ndim != 2:
        raise ValueError(f"emissions must be (T, K), got shape {e.shape}")
    k = e.shape[1]
    if a.shape != (k + 2, k + 2):
        raise ValueError(
            f"transitions shape {a.shape} does not match K={k} (+2 virtual states)"
        )
    return e, a


def sequence_score(emissions: Tensor, transitions: Tensor, tags) -> Tensor:
    """Path score: start transition + per-step emission and transition + stop."""
    e_data, _ = _as_arrays(emissions, transitions)
    t_len, k = e_data.shape
    tags = list(int(t) for t in tags)
    if len(tags) != t_len:
        raise ValueError(f"{len(tags)} tags for {t_len} emission rows")
    if any(t < 0 or t >= k for t in tags):
        raise ValueError(f"tag index out of range for K={k}: {tags}")
    start, stop = start_stop(k)
    emissions = _ensure_tensor(emissions)
    transitions = _ensure_tensor(transitions)
    emit = ad.tsum(ad.take_pairs(emissions, np.arange(t_len), tags))
    trans_rows = np.array([start] + tags, dtype=np.intp)
    trans_cols = np.array(tags + [stop], dtype=np.intp)
    trans = ad.tsum(ad.take_pairs(transitions, trans_rows, trans_cols))
    return ad.add(emit, trans)


def _ensure_tensor(x):
    return x if isinstance(x, Tensor) else ad.constant(x)


def log_partition(emissions: Tensor, transitions: Tensor) -> Tensor:
    """log sum over all K^T paths of exp(path score), by the forward pass.

    Everything stays in log space; each step is one log-sum-exp over the
    previous label axis.
    """
    e_data, _ = _as_arrays(emissions, transitions)
    t_len, k = e_data.shape
    start, stop = start_stop(k)
    emissions = _ensure_tensor(emissions)
    transitions = _ensure_tensor(transitions)
    inner = ad.narrow(transitions, (slice(0, k), slice(0, k)))
    from_start = ad.narrow(transitions, (slice(start, start + 1), slice(0, k)))
    to_stop = ad.narrow(transitions, (slice(0, k), slice(stop, stop + 1)))
    alpha = ad.add(
        ad.reshape(from_start, (k,)),
        ad.reshape(ad.narrow(emissions, (slice(0, 1), slice(None))), (k,)),
    )
    for t in range(1, t_len):
        e_t = ad.reshape(ad.narrow(emissions, (slice(t, t + 1), slice(None))), (k,))
        scores = ad.add(ad.reshape(alpha, (k, 1)), inner)
        alpha = ad.add(ad.log_sum_exp(scores, axis=0), e_t)
    return ad.log_sum_exp(ad.add(alpha, ad.reshape(to_stop, (k,))))


def crf_nll(emissions: Tensor, transitions: Tensor, tags) -> Tensor:
    """Negative log-likelihood of the gold path; non-negative by construction."""
    return ad.sub(
        log_partition(emissions, transitions),
        sequence_score(emissions, transitions, tags),
    )


def viterbi_decode(emissions, transitions):
    """Best path and its score.

    Ties resolve to the lowest tag index at every step (argmax returns the
    first maximizer).  Pure numpy; gradients are not tracked.
    """
    e, a = _as_arrays(emissions, transitions)
    t_len, k = e.shape
    start, stop = start_stop(k)
    inner = a[:k, :k]
    score = a[start, :k] + e[0]
    back = np.zeros((t_len, k), dtype=np.intp)
    for t in range(1, t_len):
        cand = score[:, None] + inner
        back[t] = np.argmax(cand, axis=0)
        score = cand[back[t], np.arange(k)] + e[t]
    score = score + a[:k, stop]
    best_last = int(np.argmax(score))
    best_score = float(score[best_last])
    path = [best_last]
    for t in range(t_len - 1, 0, -1):
        path.append(int(back[t, path[-1]]))
    path.reverse()
    return path, best_score


def brute_force_oracle(emissions, transitions, budget: int = 1_000_000):
    """Enumerate every path; reference for the dynamic programs.

    Returns (log partition, best path, best score).  Among score ties the
    path whose reversed tag tuple is lexicographically smallest wins; that
    is exactly the path viterbi_decode reconstructs, since it breaks ties
    from the final step backwards.  Raises InstanceTooLargeError when K**T
    exceeds the budget.
    """
    e, a = _as_arrays(emissions, transitions)
    t_len, k = e.shape
    if k**t_len > budget:
        raise InstanceTooLargeError(
            f"K**T = {k}**{t_len} exceeds enumeration budget {budget}"
        )
    start, stop = start_stop(k)
    best_path = None
    best_score = -np.inf
    scores = np.empty(k**t_len, dtype=np.float64)
    for idx, path in enumerate(itertools.product(range(k), repeat=t_len)):
        s = a[start, path[0]] + e[0, path[0]]
        for t in range(1, t_len):
            s += a[path[t - 1], path[t]] + e[t, path[t]]
        s += a[path[-1], stop]
        scores[idx] = s
        if s > best_score or (
            s == best_score
            and best_path is not None
            and path[::-1] < tuple(best_path[::-1])
        ):
            best_score = s
            best_path = list(path)
    m = scores.max()
    log_z = float(m + np.log(np.sum(np.exp(scores - m))))
    return log_z, best_path, float(best_score)
