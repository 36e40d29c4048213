"""Parameter initialization, gradient clipping, and ADAM updates."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def init_params(shape, rng: np.random.Generator, dtype=np.float32, name=None):
    """Xavier-uniform tensor: U(-b, b) with b = sqrt(6 / (fan_in + fan_out)).

    For matrices fan_in/fan_out are the two dims; for vectors both equal the
    length.  Biases should use zeros_params instead.
    """
    from .autodiff import parameter

    shape = tuple(int(s) for s in shape)
    if len(shape) == 2:
        fan_in, fan_out = shape[1], shape[0]
    elif len(shape) == 1:
        fan_in = fan_out = shape[0]
    else:
        raise ValueError(f"init_params supports 1-D/2-D shapes, got {shape}")
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    data = rng.uniform(-bound, bound, size=shape).astype(dtype)
    return parameter(data, name=name)


def zeros_params(shape, dtype=np.float32, name=None):
    from .autodiff import parameter

    return parameter(np.zeros(shape, dtype=dtype), name=name)


def clip_global_norm(grads: dict, max_norm: float) -> float:
    """Scale all gradients in place so their joint L2 norm is <= max_norm.

    Returns the pre-clip norm.
    """
    total = 0.0
    for g in grads.values():
        total += float(np.sum(np.square(g, dtype=np.float64)))
    norm = float(np.sqrt(total))
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


@dataclass
class AdamState:
    """First/second moment accumulators, keyed like the parameter dict."""

    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(state: AdamState, params: dict, grads: dict) -> None:
    """One bias-corrected ADAM update, in place on params[name].data.

    eps is added after the square root, so the very first step moves each
    coordinate by at most lr.
    """
    state.step += 1
    t = state.step
    correction1 = 1.0 - state.beta1**t
    correction2 = 1.0 - state.beta2**t
    for name, p in params.items():
        if name not in grads:
            raise KeyError(f"adam_step: no gradient for parameter {name!r}")
        g = grads[name]
        if g.shape != p.data.shape:
            raise ValueError(
                f"adam_step: gradient shape {g.shape} does not match "
                f"parameter {name!r} shape {p.data.shape}"
            )
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * np.square(g)
        m_hat = m / correction1
        v_hat = v / correction2
        p.data -= (state.lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(
            p.data.dtype, copy=False
        )
