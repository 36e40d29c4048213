"""Recurrent cells against plain-numpy reference implementations."""

import numpy as np
import pytest

from forumtag import autodiff as ad
from forumtag.cells import GRUCell, LSTMCell


def np_sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def lstm_reference(w_x, w_h, bias, xs):
    """Textbook LSTM with stacked [i, f, g, o] weights; returns hidden states."""
    hsize = w_h.shape[1]
    h = np.zeros(hsize)
    c = np.zeros(hsize)
    outs = []
    for x in xs:
        gates = w_x @ x + w_h @ h + bias
        i = np_sigmoid(gates[0 * hsize : 1 * hsize])
        f = np_sigmoid(gates[1 * hsize : 2 * hsize])
        g = np.tanh(gates[2 * hsize : 3 * hsize])
        o = np_sigmoid(gates[3 * hsize : 4 * hsize])
        c = f * c + i * g
        h = o * np.tanh(c)
        outs.append(h.copy())
    return outs


def gru_reference(w_zr, u_zr, b_zr, w_c, u_c, b_c, xs):
    """Textbook GRU with stacked [z, r] gates; returns hidden states."""
    hsize = u_c.shape[1]
    h = np.zeros(hsize)
    outs = []
    for x in xs:
        zr = np_sigmoid(w_zr @ x + u_zr @ h + b_zr)
        z, r = zr[:hsize], zr[hsize:]
        cand = np.tanh(w_c @ x + u_c @ (r * h) + b_c)
        h = (1.0 - z) * h + z * cand
        outs.append(h.copy())
    return outs


class TestLSTM:
    def test_matches_reference_sequence(self):
        rng = np.random.default_rng(42)
        cell = LSTMCell(3, 4, rng, dtype=np.float64)
        xs = [np.random.default_rng(i).standard_normal(3) for i in range(5)]
        want = lstm_reference(cell.w_x.data, cell.w_h.data, cell.bias.data, xs)
        got = cell.run([ad.constant(x) for x in xs])
        for g, w in zip(got, want):
            np.testing.assert_allclose(g.data, w, rtol=1e-12, atol=1e-12)

    def test_forget_gate_bias_is_one(self):
        cell = LSTMCell(2, 5, np.random.default_rng(0))
        b = cell.bias.data
        np.testing.assert_array_equal(b[5:10], np.ones(5, dtype=b.dtype))
        np.testing.assert_array_equal(b[:5], np.zeros(5, dtype=b.dtype))
        np.testing.assert_array_equal(b[10:], np.zeros(10, dtype=b.dtype))

    def test_initial_state_zero(self):
        cell = LSTMCell(2, 3, np.random.default_rng(0))
        h, c = cell.initial_state()
        assert np.all(h.data == 0) and np.all(c.data == 0)

    def test_params_named_and_complete(self):
        cell = LSTMCell(2, 3, np.random.default_rng(0), name="enc")
        params = cell.params()
        assert set(params) == {"enc.w_x", "enc.w_h", "enc.bias"}
        assert all(p.requires_grad for p in params.values())

    def test_gradients_through_sequence(self):
        rng = np.random.default_rng(1)
        cell = LSTMCell(3, 4, rng, dtype=np.float64)
        xs = [ad.constant(rng.standard_normal(3)) for _ in range(4)]
        w = ad.constant(rng.standard_normal(4))

        def f():
            return ad.tsum(ad.mul(cell.run(xs)[-1], w))

        worst, _ = ad.grad_check(f, cell.params())
        assert worst < 1e-6


class TestGRU:
    def test_matches_reference_sequence(self):
        rng = np.random.default_rng(7)
        cell = GRUCell(3, 4, rng, dtype=np.float64)
        xs = [np.random.default_rng(100 + i).standard_normal(3) for i in range(5)]
        want = gru_reference(
            cell.w_zr.data, cell.u_zr.data, cell.b_zr.data,
            cell.w_c.data, cell.u_c.data, cell.b_c.data, xs,
        )
        got = cell.run([ad.constant(x) for x in xs])
        for g, w in zip(got, want):
            np.testing.assert_allclose(g.data, w, rtol=1e-12, atol=1e-12)

    def test_params_named_and_complete(self):
        cell = GRUCell(2, 3, np.random.default_rng(0), name="ctx")
        assert set(cell.params()) == {
            "ctx.w_zr", "ctx.u_zr", "ctx.b_zr", "ctx.w_c", "ctx.u_c", "ctx.b_c"
        }

    def test_gradients_through_sequence(self):
        rng = np.random.default_rng(2)
        cell = GRUCell(2, 3, rng, dtype=np.float64)
        xs = [ad.constant(rng.standard_normal(2)) for _ in range(4)]
        w = ad.constant(rng.standard_normal(3))

        def f():
            return ad.tsum(ad.mul(cell.run(xs)[-1], w))

        worst, _ = ad.grad_check(f, cell.params())
        assert worst < 1e-6

    def test_zero_update_gate_keeps_state(self):
        # With w_zr rows for z forced very negative, z ~ 0 and h stays put.
        rng = np.random.default_rng(3)
        cell = GRUCell(2, 3, rng, dtype=np.float64)
        cell.w_zr.data[:3] = 0.0
        cell.u_zr.data[:3] = 0.0
        cell.b_zr.data[:3] = -50.0
        out = cell.run([ad.constant(rng.standard_normal(2)) for _ in range(3)])
        for o in out:
            np.testing.assert_allclose(o.data, np.zeros(3), atol=1e-12)
