"""Layer primitives: dense, same-padded 1-D convolution, (Bi)LSTM.

Sequence tensors are batch-major ``(B, T, C)``; unbatched ``(T, C)`` inputs
are accepted by ``conv1d_same`` and the LSTM helpers and returned unbatched.
Padding masks are ``(B, T)`` arrays of 0/1.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import DTYPE, NumericsError, Tensor, _make, _push, as_tensor, concat, parameter


class ConfigError(ValueError):
    pass


# -- dense ---------------------------------------------------------------------
def linear(x, w, b) -> Tensor:
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    if w.ndim != 2 or x.shape[-1] != w.shape[0]:
        raise NumericsError(f"linear: input {x.shape} incompatible with weight {w.shape}")
    if b.shape != (w.shape[1],):
        raise NumericsError(f"linear: bias {b.shape} incompatible with weight {w.shape}")
    xd, wd = x.data, w.data

    def bw(g, grads):
        if x.requires_grad:
            _push(grads, x, g @ wd.T)
        if w.requires_grad:
            _push(grads, w, xd.reshape(-1, xd.shape[-1]).T @ g.reshape(-1, g.shape[-1]))
        if b.requires_grad:
            _push(grads, b, g.reshape(-1, g.shape[-1]).sum(axis=0))

    return _make(xd @ wd + b.data, (x, w, b), bw)


# -- convolution ----------------------------------------------------------------
def conv1d_same(x, kernels, b) -> Tensor:
    """Cross-correlation over time with zero padding (K-1)/2 on both sides."""
    x, kernels, b = as_tensor(x), as_tensor(kernels), as_tensor(b)
    if kernels.ndim != 3:
        raise NumericsError(f"conv1d_same: kernels must be K x C_in x C_out, got {kernels.shape}")
    K, cin, cout = kernels.shape
    if K % 2 == 0:
        raise ConfigError(f"conv1d_same needs an odd kernel size, got K={K}")
    if x.shape[-1] != cin:
        raise NumericsError(f"conv1d_same: input {x.shape} has {x.shape[-1]} channels, kernels {kernels.shape} expect {cin}")
    if b.shape != (cout,):
        raise NumericsError(f"conv1d_same: bias {b.shape} does not match C_out={cout}")
    unbatched = x.ndim == 2
    xd = x.data[None] if unbatched else x.data
    B, T, _ = xd.shape
    pad = (K - 1) // 2
    xp = np.zeros((B, T + 2 * pad, cin), dtype=DTYPE)
    xp[:, pad:pad + T] = xd
    cols = np.concatenate([xp[:, k:k + T] for k in range(K)], axis=-1)  # B,T,K*cin
    wr = kernels.data.reshape(K * cin, cout)
    y = cols @ wr + b.data
    if unbatched:
        y = y[0]

    def bw(g, grads):
        gb = g[None] if unbatched else g
        if kernels.requires_grad:
            gw = cols.reshape(-1, K * cin).T @ gb.reshape(-1, cout)
            _push(grads, kernels, gw.reshape(K, cin, cout))
        if b.requires_grad:
            _push(grads, b, gb.reshape(-1, cout).sum(axis=0))
        if x.requires_grad:
            gcols = gb @ wr.T
            gxp = np.zeros_like(xp)
            for k in range(K):
                gxp[:, k:k + T] += gcols[:, :, k * cin:(k + 1) * cin]
            gx = gxp[:, pad:pad + T]
            _push(grads, x, gx[0] if unbatched else gx)

    return _make(y, (x, kernels, b), bw)


# -- recurrent -------------------------------------------------------------------
@dataclass
class LSTMParams:
    w_ih: Tensor  # I x 4H, gate order i, f, g, o
    w_hh: Tensor  # H x 4H
    bias: Tensor  # 4H

    @property
    def hidden(self) -> int:
        return self.w_hh.shape[0]


def _gate_affine(H: int) -> tuple[np.ndarray, np.ndarray]:
    # sigmoid(z) = 0.5 * tanh(z / 2) + 0.5, so one tanh call activates all four gates
    scale = np.full(4 * H, 0.5)
    scale[2 * H:3 * H] = 1.0
    shift = np.full(4 * H, 0.5)
    shift[2 * H:3 * H] = 0.0
    return scale, shift


def lstm_scan(x, p: LSTMParams, mask=None, reverse: bool = False) -> Tensor:
    """Run one LSTM direction over ``x`` (B, T, I) and return all hidden states.

    Where ``mask`` is 0 the cell holds its previous state; for a reverse scan on
    right-padded batches this means each sequence effectively starts at its own
    last valid step.
    """
    x = as_tensor(x)
    unbatched = x.ndim == 2
    xd = x.data[None] if unbatched else x.data
    B, T, I = xd.shape
    H = p.hidden
    if T == 0:
        raise NumericsError("lstm over an empty sequence")
    if p.w_ih.shape != (I, 4 * H):
        raise NumericsError(f"lstm: input width {I} vs w_ih {p.w_ih.shape}")
    if mask is None:
        m = np.ones((T, B, 1), dtype=DTYPE)
    else:
        m = np.ascontiguousarray(np.asarray(mask, dtype=DTYPE).reshape(B, T).T[:, :, None])
    full = m.reshape(T, B).min(axis=1) == 1.0
    w_hh = p.w_hh.data
    scale, shift = _gate_affine(H)
    order = list(range(T - 1, -1, -1)) if reverse else list(range(T))

    xt = np.ascontiguousarray(xd.transpose(1, 0, 2))  # T,B,I
    zx = xt @ p.w_ih.data + p.bias.data
    # state buffers indexed by scan position s; slot s holds the state before step s
    hs = np.zeros((T + 1, B, H), dtype=DTYPE)
    cs = np.zeros((T + 1, B, H), dtype=DTYPE)
    gates = np.empty((T, B, 4 * H), dtype=DTYPE)
    tcs = np.empty((T, B, H), dtype=DTYPE)
    for s, t in enumerate(order):
        z = zx[t] + hs[s] @ w_hh
        z *= scale
        a = gates[s]
        np.tanh(z, out=a)
        a *= scale
        a += shift
        c = a[:, H:2 * H] * cs[s]
        c += a[:, :H] * a[:, 2 * H:3 * H]
        tc = np.tanh(c, out=tcs[s])
        h = a[:, 3 * H:] * tc
        if full[t]:
            cs[s + 1] = c
            hs[s + 1] = h
        else:
            mt = m[t]
            cs[s + 1] = cs[s] + mt * (c - cs[s])
            hs[s + 1] = hs[s] + mt * (h - hs[s])
    out_t = hs[1:][::-1] if reverse else hs[1:]  # back to time order
    out = np.ascontiguousarray(out_t.transpose(1, 0, 2))
    if unbatched:
        out = out[0]

    def bw(g, grads):
        gt = (g[None] if unbatched else g).transpose(1, 0, 2)  # T,B,H
        dz_all = np.empty((T, B, 4 * H), dtype=DTYPE)  # scan-ordered
        dh = np.zeros((B, H), dtype=DTYPE)
        dc = np.zeros((B, H), dtype=DTYPE)
        w_hh_t = w_hh.T.copy()
        for s in range(T - 1, -1, -1):
            t = order[s]
            dh = dh + gt[t]
            a = gates[s]
            tc = tcs[s]
            if full[t]:
                dh_new, dc_new = dh, dc
            else:
                mt = m[t]
                dh_new, dc_new = mt * dh, mt * dc
            i_g, f_g, g_g, o_g = a[:, :H], a[:, H:2 * H], a[:, 2 * H:3 * H], a[:, 3 * H:]
            dc_new = dc_new + dh_new * o_g * (1.0 - tc * tc)
            dz = dz_all[s]
            np.multiply(dc_new * g_g, i_g * (1.0 - i_g), out=dz[:, :H])
            np.multiply(dc_new * cs[s], f_g * (1.0 - f_g), out=dz[:, H:2 * H])
            np.multiply(dc_new * i_g, 1.0 - g_g * g_g, out=dz[:, 2 * H:3 * H])
            np.multiply(dh_new * tc, o_g * (1.0 - o_g), out=dz[:, 3 * H:])
            if full[t]:
                dh = dz @ w_hh_t
                dc = dc_new * f_g
            else:
                dh = (1.0 - mt) * dh + dz @ w_hh_t
                dc = (1.0 - mt) * dc + dc_new * f_g
        flat_dz = dz_all.reshape(-1, 4 * H)
        if p.w_hh.requires_grad:
            _push(grads, p.w_hh, hs[:-1].reshape(-1, H).T @ flat_dz)
        if p.bias.requires_grad:
            _push(grads, p.bias, flat_dz.sum(axis=0))
        if p.w_ih.requires_grad or x.requires_grad:
            dz_time = dz_all[::-1] if reverse else dz_all  # T,B,4H in time order
            if p.w_ih.requires_grad:
                _push(grads, p.w_ih, xt.reshape(-1, I).T @ dz_time.reshape(-1, 4 * H))
            if x.requires_grad:
                gx = (dz_time @ p.w_ih.data.T).transpose(1, 0, 2)
                _push(grads, x, np.ascontiguousarray(gx[0] if unbatched else gx))

    return _make(out, (x, p.w_ih, p.w_hh, p.bias), bw)


def bilstm(x, fwd: LSTMParams, bwd: LSTMParams, mask=None) -> Tensor:
    """Forward and backward scans concatenated per step: output width 2H."""
    x = as_tensor(x)
    if x.shape[-2] == 0:
        raise NumericsError("bilstm over an empty sequence")
    return concat([lstm_scan(x, fwd, mask), lstm_scan(x, bwd, mask, reverse=True)], axis=-1)


# -- initialisation ------------------------------------------------------------------
def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape, name=None) -> Tensor:
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return parameter(rng.uniform(-lim, lim, size=shape), name=name)


def init_lstm(rng: np.random.Generator, in_dim: int, hidden: int, name: str = "") -> LSTMParams:
    u = lambda shape, n: parameter(rng.uniform(-0.08, 0.08, size=shape), name=f"{name}.{n}")
    return LSTMParams(
        w_ih=u((in_dim, 4 * hidden), "w_ih"),
        w_hh=u((hidden, 4 * hidden), "w_hh"),
        bias=parameter(np.zeros(4 * hidden), name=f"{name}.bias"),
    )


def lstm_step(x: np.ndarray, h: np.ndarray, c: np.ndarray, p: LSTMParams) -> tuple[np.ndarray, np.ndarray]:
    """Single untracked LSTM step (inference only); same gate layout as ``lstm_scan``."""
    H = p.hidden
    scale, shift = _gate_affine(H)
    a = np.tanh((x @ p.w_ih.data + p.bias.data + h @ p.w_hh.data) * scale) * scale + shift
    c_new = a[..., H:2 * H] * c + a[..., :H] * a[..., 2 * H:3 * H]
    return a[..., 3 * H:] * np.tanh(c_new), c_new
