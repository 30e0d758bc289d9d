"""Recurrent encoders: a standard LSTM and a spatio-temporal variant.

The spatio-temporal cell augments the usual cell state with two extra
cell states fed by geographic context (cell embedding + scaled distance
row) and temporal context (time-slot embedding + scaled duration row).
Neither extra branch has its own output gate; the hidden state is

    h = o * tanh(W_h @ (c | c_s | c_t))

Gate weights are stored column-packed per branch (main: [i f o g],
side branches: [i f g]), the layout used by most LSTM implementations.
Packing lets one matrix product produce every pre-activation of a step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autograd import Tensor, concat, constant, index, matmul, mul, sigmoid, stack, tanh
from . import autograd as ag
from .nn import glorot_uniform


@dataclass
class LSTMWeights:
    """Packed weights of a plain LSTM: columns ordered [i f o g]."""

    W_x: Tensor  # in_dim x 4H
    U_h: Tensor  # H x 4H
    b: Tensor  # 4H

    @property
    def hidden_dim(self) -> int:
        return self.U_h.value.shape[0]

    def params(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}/W_x": self.W_x, f"{prefix}/U_h": self.U_h, f"{prefix}/b": self.b}


@dataclass
class STLSTMWeights:
    """Packed weights of the spatio-temporal cell.

    Main branch columns are [i f o g]; the spatial and temporal branches
    have no output gate, so their columns are [i f g].  W_h maps the
    concatenated cell states (c | c_s | c_t) back to the hidden size.
    """

    W_x: Tensor  # dim x 4H, input = location embedding
    U_h: Tensor  # H x 4H
    b: Tensor  # 4H
    W_s: Tensor  # dim x 3H, input = geo-cell embedding
    V_s: Tensor  # |L| x 3H, input = scaled distance row
    U_s: Tensor  # H x 3H
    b_s: Tensor  # 3H
    W_t: Tensor  # dim x 3H, input = time-slot embedding
    V_t: Tensor  # |L| x 3H, input = scaled duration row
    U_t: Tensor  # H x 3H
    b_t: Tensor  # 3H
    W_h: Tensor  # 3H x H

    @property
    def hidden_dim(self) -> int:
        return self.U_h.value.shape[0]

    def params(self, prefix: str) -> dict[str, Tensor]:
        out = {}
        for name in ("W_x", "U_h", "b", "W_s", "V_s", "U_s", "b_s", "W_t", "V_t", "U_t", "b_t", "W_h"):
            out[f"{prefix}/{name}"] = getattr(self, name)
        return out


def _packed(rng: np.random.Generator, fan_in: int, hidden: int, n_gates: int) -> Tensor:
    # one glorot draw per gate block so bounds match the per-gate shapes
    blocks = [glorot_uniform(rng, fan_in, hidden) for _ in range(n_gates)]
    return ag.parameter(np.concatenate(blocks, axis=1))


def init_lstm(rng: np.random.Generator, in_dim: int, hidden: int) -> LSTMWeights:
    return LSTMWeights(
        W_x=_packed(rng, in_dim, hidden, 4),
        U_h=_packed(rng, hidden, hidden, 4),
        b=ag.parameter(np.zeros(4 * hidden)),
    )


def init_st_lstm(
    rng: np.random.Generator, dim: int, hidden: int, n_locations: int
) -> STLSTMWeights:
    """Draw order: main (W_x, U_h), spatial (W_s, V_s, U_s), temporal
    (W_t, V_t, U_t), then W_h; biases start at zero."""
    return STLSTMWeights(
        W_x=_packed(rng, dim, hidden, 4),
        U_h=_packed(rng, hidden, hidden, 4),
        b=ag.parameter(np.zeros(4 * hidden)),
        W_s=_packed(rng, dim, hidden, 3),
        V_s=_packed(rng, n_locations, hidden, 3),
        U_s=_packed(rng, hidden, hidden, 3),
        b_s=ag.parameter(np.zeros(3 * hidden)),
        W_t=_packed(rng, dim, hidden, 3),
        V_t=_packed(rng, n_locations, hidden, 3),
        U_t=_packed(rng, hidden, hidden, 3),
        b_t=ag.parameter(np.zeros(3 * hidden)),
        W_h=ag.parameter(glorot_uniform(rng, 3 * hidden, hidden)),
    )


@dataclass
class STLSTMInput:
    """Per-step context of one encoded sequence, all length T.

    loc/geo/slot are (T, dim) embedding rows; dspace/dtime are (T, |L|)
    rows of the global interval tables for the visited locations.
    """

    loc: Tensor
    geo: Tensor
    slot: Tensor
    dspace: Tensor
    dtime: Tensor

    def __len__(self) -> int:
        return self.loc.value.shape[0]


def lstm_step(
    w: LSTMWeights, x: Tensor, h_prev: Tensor, c_prev: Tensor
) -> tuple[Tensor, Tensor]:
    """One straightforward step; the reference for the batched encoder."""
    hidden = w.hidden_dim
    z = matmul(x, w.W_x) + matmul(h_prev, w.U_h) + w.b
    gates = sigmoid(index(z, slice(0, 3 * hidden)))
    i = index(gates, slice(0, hidden))
    f = index(gates, slice(hidden, 2 * hidden))
    o = index(gates, slice(2 * hidden, 3 * hidden))
    g = tanh(index(z, slice(3 * hidden, 4 * hidden)))
    c = mul(f, c_prev) + mul(i, g)
    h = mul(o, tanh(c))
    return h, c


def st_lstm_step(
    w: STLSTMWeights,
    x: Tensor,
    geo: Tensor,
    slot: Tensor,
    dspace: Tensor,
    dtime: Tensor,
    h_prev: Tensor,
    c_prev: Tensor,
    cs_prev: Tensor,
    ct_prev: Tensor,
) -> tuple[Tensor, Tensor, Tensor, Tensor]:
    """One spatio-temporal step written branch by branch (reference path)."""
    hidden = w.hidden_dim

    z = matmul(x, w.W_x) + matmul(h_prev, w.U_h) + w.b
    gates = sigmoid(index(z, slice(0, 3 * hidden)))
    i = index(gates, slice(0, hidden))
    f = index(gates, slice(hidden, 2 * hidden))
    o = index(gates, slice(2 * hidden, 3 * hidden))
    g = tanh(index(z, slice(3 * hidden, 4 * hidden)))
    c = mul(f, c_prev) + mul(i, g)

    def branch(Wb, Vb, Ub, bb, inp, drow, prev):
        zb = matmul(inp, Wb) + matmul(drow, Vb) + matmul(h_prev, Ub) + bb
        gb = sigmoid(index(zb, slice(0, 2 * hidden)))
        ib = index(gb, slice(0, hidden))
        fb = index(gb, slice(hidden, 2 * hidden))
        cb = tanh(index(zb, slice(2 * hidden, 3 * hidden)))
        return mul(fb, prev) + mul(ib, cb)

    c_s = branch(w.W_s, w.V_s, w.U_s, w.b_s, geo, dspace, cs_prev)
    c_t = branch(w.W_t, w.V_t, w.U_t, w.b_t, slot, dtime, ct_prev)

    h = mul(o, tanh(matmul(concat([c, c_s, c_t]), w.W_h)))
    return h, c, c_s, c_t


def _fused_columns(main: Tensor, spat: Tensor, temp: Tensor, hidden: int) -> Tensor:
    """Reorder branch columns into [i i_s i_t f f_s f_t o | g g_s g_t].

    The first 7H columns take a sigmoid, the last 3H a tanh, and the
    i/f blocks line up with the stacked cell vector (c | c_s | c_t).
    """
    h = hidden
    cols = [
        index(main, (slice(None), slice(0, h))),
        index(spat, (slice(None), slice(0, h))),
        index(temp, (slice(None), slice(0, h))),
        index(main, (slice(None), slice(h, 2 * h))),
        index(spat, (slice(None), slice(h, 2 * h))),
        index(temp, (slice(None), slice(h, 2 * h))),
        index(main, (slice(None), slice(2 * h, 3 * h))),
        index(main, (slice(None), slice(3 * h, 4 * h))),
        index(spat, (slice(None), slice(2 * h, 3 * h))),
        index(temp, (slice(None), slice(2 * h, 3 * h))),
    ]
    return concat(cols, axis=1)


def st_lstm_encode(w: STLSTMWeights, inp: STLSTMInput) -> Tensor:
    """Run the sequence and return the (T, H) stack of hidden states.

    Input-side projections for all steps are batched up front; the loop
    then only costs one hidden-state product and elementwise work per
    step, with the three cell states carried as a single 3H vector.
    """
    steps = len(inp)
    hidden = w.hidden_dim
    if steps == 0:
        return constant(np.zeros((0, hidden)))

    p_main = matmul(inp.loc, w.W_x) + w.b
    p_spat = matmul(inp.geo, w.W_s) + matmul(inp.dspace, w.V_s) + w.b_s
    p_temp = matmul(inp.slot, w.W_t) + matmul(inp.dtime, w.V_t) + w.b_t
    p_all = _fused_columns(p_main, p_spat, p_temp, hidden)
    u_all = _fused_columns(w.U_h, w.U_s, w.U_t, hidden)

    h = constant(np.zeros(hidden))
    c_all = constant(np.zeros(3 * hidden))
    states = []
    for j in range(steps):
        z = index(p_all, j) + matmul(h, u_all)
        gates = sigmoid(index(z, slice(0, 7 * hidden)))
        cand = tanh(index(z, slice(7 * hidden, 10 * hidden)))
        i_all = index(gates, slice(0, 3 * hidden))
        f_all = index(gates, slice(3 * hidden, 6 * hidden))
        o = index(gates, slice(6 * hidden, 7 * hidden))
        c_all = mul(f_all, c_all) + mul(i_all, cand)
        h = mul(o, tanh(matmul(c_all, w.W_h)))
        states.append(h)
    return stack(states)


def lstm_encode(
    w: LSTMWeights,
    x: Tensor,
    h0: Tensor | None = None,
    c0: Tensor | None = None,
) -> tuple[Tensor, Tensor, Tensor]:
    """Run a (T, in_dim) input; return stacked states and final (h, c)."""
    steps = x.value.shape[0]
    hidden = w.hidden_dim
    h = h0 if h0 is not None else constant(np.zeros(hidden))
    c = c0 if c0 is not None else constant(np.zeros(hidden))
    if steps == 0:
        return constant(np.zeros((0, hidden))), h, c

    p = matmul(x, w.W_x) + w.b
    states = []
    for j in range(steps):
        z = index(p, j) + matmul(h, w.U_h)
        gates = sigmoid(index(z, slice(0, 3 * hidden)))
        i = index(gates, slice(0, hidden))
        f = index(gates, slice(hidden, 2 * hidden))
        o = index(gates, slice(2 * hidden, 3 * hidden))
        g = tanh(index(z, slice(3 * hidden, 4 * hidden)))
        c = mul(f, c) + mul(i, g)
        h = mul(o, tanh(c))
        states.append(h)
    return stack(states), h, c
