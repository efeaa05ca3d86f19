"""Hot numeric kernels for the recurrent speed regressor.

Every function here is written once, in numpy-compatible form, and compiled
with ``numba.njit`` when available. Setting the environment variable
``SPEEDNAV_NO_NUMBA=1`` (or any value other than ``0``) before import selects
the interpreted pure-numpy path; the module also falls back automatically when
numba is absent. ``benchmarks/bench_kernels.py`` compares the two.

Conventions:

* Arrays are float64, lane-major: inputs ``(B, T, C)``, labels ``(B, T)``.
* Gate order along the ``4H`` axis is input, forget, cell, output (i, f, g, o).
* Parameters live in one flat vector; the slice layout must match
  ``network.param_layout`` (guarded by a test).
* Weight-gradient accumulation runs per lane with a fixed inner length, so
  adding all-zero masked lanes changes results by exactly zero on either
  backend (BLAS never re-blocks a sum over lanes).

Backpropagation through time is truncated at window boundaries: carried
states enter as constants and receive no gradient.
"""

from __future__ import annotations

import os

import numpy as np

_flag = os.environ.get("SPEEDNAV_NO_NUMBA", "").strip()
_DISABLED = _flag not in ("", "0")

try:
    from numba import njit as _njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False

USE_NUMBA = _HAVE_NUMBA and not _DISABLED
BACKEND = "numba" if USE_NUMBA else "numpy"


def _jit(fn):
    if USE_NUMBA:
        return _njit(cache=True)(fn)
    return fn


def python_impl(fn):
    """Return the interpreted implementation behind a (possibly jitted) kernel."""
    return getattr(fn, "py_func", fn)


@_jit
def lstm_seq_forward(x, WxT, WhT, b, h0, c0, reverse):
    """Run one LSTM direction over a window.

    Args:
        x: (B, T, I) C-contiguous inputs.
        WxT: (I, 4H) input weights, transposed, contiguous.
        WhT: (H, 4H) recurrent weights, transposed, contiguous.
        b: (4H,) bias.
        h0, c0: (B, H) entry states (not mutated).
        reverse: iterate t = T-1 .. 0 instead of 0 .. T-1.

    Returns:
        h_seq, tanh(c)_seq, gates (i|f|g|o), pre-step h, pre-step c — all
        indexed by absolute time t — plus the exit (h, c).
    """
    B, T, I = x.shape
    H = WhT.shape[0]
    zx = np.dot(x.reshape(B * T, I), WxT).reshape(B, T, 4 * H)
    h_seq = np.empty((B, T, H))
    tc_seq = np.empty((B, T, H))
    gates = np.empty((B, T, 4 * H))
    hprev = np.empty((B, T, H))
    cprev = np.empty((B, T, H))
    h = h0.copy()
    c = c0.copy()
    for step in range(T):
        t = T - 1 - step if reverse else step
        hprev[:, t, :] = h
        cprev[:, t, :] = c
        z = zx[:, t, :] + np.dot(h, WhT) + b
        gi = 1.0 / (1.0 + np.exp(-z[:, 0:H]))
        gf = 1.0 / (1.0 + np.exp(-z[:, H : 2 * H]))
        gg = np.tanh(z[:, 2 * H : 3 * H])
        go = 1.0 / (1.0 + np.exp(-z[:, 3 * H : 4 * H]))
        c = gf * c + gi * gg
        tc = np.tanh(c)
        h = go * tc
        gates[:, t, 0:H] = gi
        gates[:, t, H : 2 * H] = gf
        gates[:, t, 2 * H : 3 * H] = gg
        gates[:, t, 3 * H : 4 * H] = go
        h_seq[:, t, :] = h
        tc_seq[:, t, :] = tc
    return h_seq, tc_seq, gates, hprev, cprev, h, c


@_jit
def lstm_seq_backward(x, Wx, Wh, gates, tc_seq, hprev, cprev, dh_out, reverse):
    """Backpropagate one LSTM direction over a window.

    ``dh_out`` is the upstream gradient on ``h_seq``. No gradient flows to the
    entry state (truncated BPTT at the window edge).

    Returns ``(dx, dWx, dWh, db)``.
    """
    B, T, I = x.shape
    H = Wh.shape[1]
    DZ = np.empty((B, T, 4 * H))
    dx = np.empty((B, T, I))
    dh = np.zeros((B, H))
    dc = np.zeros((B, H))
    for step in range(T - 1, -1, -1):
        t = T - 1 - step if reverse else step
        gi = gates[:, t, 0:H]
        gf = gates[:, t, H : 2 * H]
        gg = gates[:, t, 2 * H : 3 * H]
        go = gates[:, t, 3 * H : 4 * H]
        tc = tc_seq[:, t, :]
        dht = dh + dh_out[:, t, :]
        dct = dc + dht * go * (1.0 - tc * tc)
        dz = np.empty((B, 4 * H))
        dz[:, 0:H] = (dct * gg) * gi * (1.0 - gi)
        dz[:, H : 2 * H] = (dct * cprev[:, t, :]) * gf * (1.0 - gf)
        dz[:, 2 * H : 3 * H] = (dct * gi) * (1.0 - gg * gg)
        dz[:, 3 * H : 4 * H] = (dht * tc) * go * (1.0 - go)
        DZ[:, t, :] = dz
        dx[:, t, :] = np.dot(dz, Wx)
        dh = np.dot(dz, Wh)
        dc = dct * gf
    dWx = np.zeros((4 * H, I))
    dWh = np.zeros((4 * H, H))
    db = np.zeros(4 * H)
    for lane in range(B):
        dzl = np.ascontiguousarray(DZ[lane].T)
        dWx += np.dot(dzl, x[lane])
        dWh += np.dot(dzl, hprev[lane])
        db += np.sum(DZ[lane], axis=0)
    return dx, dWx, dWh, db


@_jit
def _unpack(params, h1, h2, h3, nin):
    """Carve the flat parameter vector into layer views (layout order)."""
    o = 0
    n = 4 * h1 * nin
    Wx1 = params[o : o + n].reshape(4 * h1, nin)
    o += n
    n = 4 * h1 * h1
    Wh1 = params[o : o + n].reshape(4 * h1, h1)
    o += n
    b1 = params[o : o + 4 * h1]
    o += 4 * h1

    n = 4 * h2 * h1
    Wx2f = params[o : o + n].reshape(4 * h2, h1)
    o += n
    n = 4 * h2 * h2
    Wh2f = params[o : o + n].reshape(4 * h2, h2)
    o += n
    b2f = params[o : o + 4 * h2]
    o += 4 * h2
    n = 4 * h2 * h1
    Wx2b = params[o : o + n].reshape(4 * h2, h1)
    o += n
    n = 4 * h2 * h2
    Wh2b = params[o : o + n].reshape(4 * h2, h2)
    o += n
    b2b = params[o : o + 4 * h2]
    o += 4 * h2

    i3 = 2 * h2
    n = 4 * h3 * i3
    Wx3f = params[o : o + n].reshape(4 * h3, i3)
    o += n
    n = 4 * h3 * h3
    Wh3f = params[o : o + n].reshape(4 * h3, h3)
    o += n
    b3f = params[o : o + 4 * h3]
    o += 4 * h3
    n = 4 * h3 * i3
    Wx3b = params[o : o + n].reshape(4 * h3, i3)
    o += n
    n = 4 * h3 * h3
    Wh3b = params[o : o + n].reshape(4 * h3, h3)
    o += n
    b3b = params[o : o + 4 * h3]
    o += 4 * h3

    Wd = params[o : o + 2 * h3]
    o += 2 * h3
    bd = params[o : o + 1]
    return Wx1, Wh1, b1, Wx2f, Wh2f, b2f, Wx2b, Wh2b, b2b, Wx3f, Wh3f, b3f, Wx3b, Wh3b, b3b, Wd, bd


@_jit
def _stack_forward_full(params, h1, h2, h3, x, h1s, c1s, h2s, c2s, h3s, c3s):
    """Forward through the full stack, returning predictions, caches, states."""
    B, T, nin = x.shape
    (Wx1, Wh1, b1, Wx2f, Wh2f, b2f, Wx2b, Wh2b, b2b,
     Wx3f, Wh3f, b3f, Wx3b, Wh3b, b3b, Wd, bd) = _unpack(params, h1, h2, h3, nin)

    z2 = np.zeros((B, h2))
    z3 = np.zeros((B, h3))

    L1 = lstm_seq_forward(x, np.ascontiguousarray(Wx1.T), np.ascontiguousarray(Wh1.T), b1, h1s, c1s, False)
    hs1 = L1[0]
    L2f = lstm_seq_forward(hs1, np.ascontiguousarray(Wx2f.T), np.ascontiguousarray(Wh2f.T), b2f, h2s, c2s, False)
    L2b = lstm_seq_forward(hs1, np.ascontiguousarray(Wx2b.T), np.ascontiguousarray(Wh2b.T), b2b, z2, z2.copy(), True)
    cat2 = np.empty((B, T, 2 * h2))
    cat2[:, :, 0:h2] = L2f[0]
    cat2[:, :, h2 : 2 * h2] = L2b[0]
    L3f = lstm_seq_forward(cat2, np.ascontiguousarray(Wx3f.T), np.ascontiguousarray(Wh3f.T), b3f, h3s, c3s, False)
    L3b = lstm_seq_forward(cat2, np.ascontiguousarray(Wx3b.T), np.ascontiguousarray(Wh3b.T), b3b, z3, z3.copy(), True)
    cat3 = np.empty((B, T, 2 * h3))
    cat3[:, :, 0:h3] = L3f[0]
    cat3[:, :, h3 : 2 * h3] = L3b[0]
    pred = (np.dot(cat3.reshape(B * T, 2 * h3), Wd) + bd[0]).reshape(B, T)
    return pred, hs1, cat2, cat3, L1, L2f, L2b, L3f, L3b


@_jit
def stack_forward(params, h1, h2, h3, x, valid, h1s, c1s, h2s, c2s, h3s, c3s):
    """Inference pass: predictions plus carried states.

    Masked lanes (``valid == 0``) pass their carried state through unchanged.

    Returns ``(pred (B, T), h1', c1', h2', c2', h3', c3')``.
    """
    out = _stack_forward_full(params, h1, h2, h3, x, h1s, c1s, h2s, c2s, h3s, c3s)
    pred = out[0]
    L1, L2f, L3f = out[4], out[5], out[7]
    h1n, c1n = L1[5].copy(), L1[6].copy()
    h2n, c2n = L2f[5].copy(), L2f[6].copy()
    h3n, c3n = L3f[5].copy(), L3f[6].copy()
    B = x.shape[0]
    for lane in range(B):
        if valid[lane] == 0:
            h1n[lane] = h1s[lane]
            c1n[lane] = c1s[lane]
            h2n[lane] = h2s[lane]
            c2n[lane] = c2s[lane]
            h3n[lane] = h3s[lane]
            c3n[lane] = c3s[lane]
    return pred, h1n, c1n, h2n, c2n, h3n, c3n


@_jit
def stack_grad(params, h1, h2, h3, x, y, valid, h1s, c1s, h2s, c2s, h3s, c3s):
    """Fused forward + backward for one batch under the masked half-MSE loss.

    The loss is ``sum((pred - y)^2) / (2 N)`` over valid lanes, ``N`` the
    number of valid scalar entries. Masked lanes contribute exactly zero to
    the loss and to every gradient component, and pass their carried state
    through unchanged.

    Returns ``(sse, n_valid, grad, pred, h1', c1', h2', c2', h3', c3')`` where
    ``sse`` is the raw sum of squared valid errors and ``grad`` matches the
    flat parameter layout.
    """
    B, T, nin = x.shape
    (Wx1, Wh1, b1, Wx2f, Wh2f, b2f, Wx2b, Wh2b, b2b,
     Wx3f, Wh3f, b3f, Wx3b, Wh3b, b3b, Wd, bd) = _unpack(params, h1, h2, h3, nin)

    out = _stack_forward_full(params, h1, h2, h3, x, h1s, c1s, h2s, c2s, h3s, c3s)
    pred, hs1, cat2, cat3, L1, L2f, L2b, L3f, L3b = out

    sse = 0.0
    nv = 0
    for lane in range(B):
        if valid[lane] != 0:
            for t in range(T):
                e = pred[lane, t] - y[lane, t]
                sse += e * e
            nv += T
    denom = float(nv) if nv > 0 else 1.0

    dpred = np.zeros((B, T))
    for lane in range(B):
        if valid[lane] != 0:
            for t in range(T):
                dpred[lane, t] = (pred[lane, t] - y[lane, t]) / denom

    dWd = np.zeros(2 * h3)
    dbd = 0.0
    dcat3 = np.empty((B, T, 2 * h3))
    for lane in range(B):
        dWd += np.dot(dpred[lane], cat3[lane])
        dbd += np.sum(dpred[lane])
        for t in range(T):
            dcat3[lane, t, :] = dpred[lane, t] * Wd

    dx3f, dWx3f, dWh3f, db3f = lstm_seq_backward(
        cat2, Wx3f, Wh3f, L3f[2], L3f[1], L3f[3], L3f[4], dcat3[:, :, 0:h3], False
    )
    dx3b, dWx3b, dWh3b, db3b = lstm_seq_backward(
        cat2, Wx3b, Wh3b, L3b[2], L3b[1], L3b[3], L3b[4], dcat3[:, :, h3 : 2 * h3], True
    )
    dcat2 = dx3f + dx3b
    dx2f, dWx2f, dWh2f, db2f = lstm_seq_backward(
        hs1, Wx2f, Wh2f, L2f[2], L2f[1], L2f[3], L2f[4], dcat2[:, :, 0:h2], False
    )
    dx2b, dWx2b, dWh2b, db2b = lstm_seq_backward(
        hs1, Wx2b, Wh2b, L2b[2], L2b[1], L2b[3], L2b[4], dcat2[:, :, h2 : 2 * h2], True
    )
    dh1 = dx2f + dx2b
    _, dWx1, dWh1, db1 = lstm_seq_backward(
        x, Wx1, Wh1, L1[2], L1[1], L1[3], L1[4], dh1, False
    )

    grad = np.empty(params.shape[0])
    o = 0
    n = 4 * h1 * nin
    grad[o : o + n] = dWx1.reshape(n)
    o += n
    n = 4 * h1 * h1
    grad[o : o + n] = dWh1.reshape(n)
    o += n
    grad[o : o + 4 * h1] = db1
    o += 4 * h1
    n = 4 * h2 * h1
    grad[o : o + n] = dWx2f.reshape(n)
    o += n
    n = 4 * h2 * h2
    grad[o : o + n] = dWh2f.reshape(n)
    o += n
    grad[o : o + 4 * h2] = db2f
    o += 4 * h2
    n = 4 * h2 * h1
    grad[o : o + n] = dWx2b.reshape(n)
    o += n
    n = 4 * h2 * h2
    grad[o : o + n] = dWh2b.reshape(n)
    o += n
    grad[o : o + 4 * h2] = db2b
    o += 4 * h2
    i3 = 2 * h2
    n = 4 * h3 * i3
    grad[o : o + n] = dWx3f.reshape(n)
    o += n
    n = 4 * h3 * h3
    grad[o : o + n] = dWh3f.reshape(n)
    o += n
    grad[o : o + 4 * h3] = db3f
    o += 4 * h3
    n = 4 * h3 * i3
    grad[o : o + n] = dWx3b.reshape(n)
    o += n
    n = 4 * h3 * h3
    grad[o : o + n] = dWh3b.reshape(n)
    o += n
    grad[o : o + 4 * h3] = db3b
    o += 4 * h3
    grad[o : o + 2 * h3] = dWd
    o += 2 * h3
    grad[o] = dbd

    h1n, c1n = L1[5].copy(), L1[6].copy()
    h2n, c2n = L2f[5].copy(), L2f[6].copy()
    h3n, c3n = L3f[5].copy(), L3f[6].copy()
    for lane in range(B):
        if valid[lane] == 0:
            h1n[lane] = h1s[lane]
            c1n[lane] = c1s[lane]
            h2n[lane] = h2s[lane]
            c2n[lane] = c2s[lane]
            h3n[lane] = h3s[lane]
            c3n[lane] = c3s[lane]
    return sse, nv, grad, pred, h1n, c1n, h2n, c2n, h3n, c3n
