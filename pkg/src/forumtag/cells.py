"""Recurrent cells (LSTM, GRU) built on the autodiff ops.

Cells operate on 1-D state vectors; sequence models drive them step by step.
Weights are stored stacked by gate so each step costs two matmuls plus the
pointwise gate math.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .optim import init_params, zeros_params


class LSTMCell:
    """Standard LSTM; gate order in the stacked weights is [i, f, g, o].

    The forget-gate bias is initialized to 1 so memory survives the first
    few updates.
    """

    def __init__(self, input_size, hidden_size, rng, dtype=np.float32, name="lstm"):
        self.input_size = int(input_size)
        self.hidden_size = int(hidden_size)
        h = self.hidden_size
        self.w_x = init_params((4 * h, self.input_size), rng, dtype, name=f"{name}.w_x")
        self.w_h = init_params((4 * h, h), rng, dtype, name=f"{name}.w_h")
        self.bias = zeros_params((4 * h,), dtype, name=f"{name}.bias")
        self.bias.data[h : 2 * h] = 1.0
        self._dtype = dtype

    def initial_state(self):
        h = self.hidden_size
        zero = ad.constant(np.zeros(h, dtype=self._dtype))
        return zero, ad.constant(np.zeros(h, dtype=self._dtype))

    def step(self, x, state):
        h_prev, c_prev = state
        hs = self.hidden_size
        gates = ad.add(
            ad.add(ad.matmul(self.w_x, x), ad.matmul(self.w_h, h_prev)), self.bias
        )
        i = ad.sigmoid(ad.narrow(gates, (slice(0, hs),)))
        f = ad.sigmoid(ad.narrow(gates, (slice(hs, 2 * hs),)))
        g = ad.tanh(ad.narrow(gates, (slice(2 * hs, 3 * hs),)))
        o = ad.sigmoid(ad.narrow(gates, (slice(3 * hs, 4 * hs),)))
        c = ad.add(ad.mul(f, c_prev), ad.mul(i, g))
        h = ad.mul(o, ad.tanh(c))
        return h, c

    def run(self, inputs):
        """Feed a list of input vectors; returns the list of hidden states."""
        state = self.initial_state()
        outputs = []
        for x in inputs:
            state = self.step(x, state)
            outputs.append(state[0])
        return outputs

    def params(self):
        return {self.w_x.name: self.w_x, self.w_h.name: self.w_h, self.bias.name: self.bias}


class GRUCell:
    """GRU with stacked update/reset gates ([z, r]) and a candidate block."""

    def __init__(self, input_size, hidden_size, rng, dtype=np.float32, name="gru"):
        self.input_size = int(input_size)
        self.hidden_size = int(hidden_size)
        h = self.hidden_size
        self.w_zr = init_params((2 * h, self.input_size), rng, dtype, name=f"{name}.w_zr")
        self.u_zr = init_params((2 * h, h), rng, dtype, name=f"{name}.u_zr")
        self.b_zr = zeros_params((2 * h,), dtype, name=f"{name}.b_zr")
        self.w_c = init_params((h, self.input_size), rng, dtype, name=f"{name}.w_c")
        self.u_c = init_params((h, h), rng, dtype, name=f"{name}.u_c")
        self.b_c = zeros_params((h,), dtype, name=f"{name}.b_c")
        self._dtype = dtype

    def initial_state(self):
        return ad.constant(np.zeros(self.hidden_size, dtype=self._dtype))

    def step(self, x, h_prev):
        hs = self.hidden_size
        zr = ad.sigmoid(
            ad.add(
                ad.add(ad.matmul(self.w_zr, x), ad.matmul(self.u_zr, h_prev)),
                self.b_zr,
            )
        )
        z = ad.narrow(zr, (slice(0, hs),))
        r = ad.narrow(zr, (slice(hs, 2 * hs),))
        cand = ad.tanh(
            ad.add(
                ad.add(ad.matmul(self.w_c, x), ad.matmul(self.u_c, ad.mul(r, h_prev))),
                self.b_c,
            )
        )
        # h = (1 - z) * h_prev + z * cand
        return ad.add(ad.mul(ad.affine(z, -1.0, 1.0), h_prev), ad.mul(z, cand))

    def run(self, inputs):
        h = self.initial_state()
        outputs = []
        for x in inputs:
            h = self.step(x, h)
            outputs.append(h)
        return outputs

    def params(self):
        return {
            p.name: p
            for p in (self.w_zr, self.u_zr, self.b_zr, self.w_c, self.u_c, self.b_c)
        }
