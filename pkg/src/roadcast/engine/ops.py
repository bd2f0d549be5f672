"""Forward ops with their reverse-mode rules.

Image tensors are channels-last: ``(N, H, W, C)``. Sequences are
``(N, T, D)``. Every op accepts a leading batch axis.
"""
from __future__ import annotations

import numpy as np

from roadcast.engine.tensor import Tensor, as_tensor, make_node


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ValueError(f"add needs equal shapes, got {a.shape} and {b.shape}")

    def back(g):
        if a.requires_grad:
            a.accumulate(g)
        if b.requires_grad:
            b.accumulate(g)

    return make_node(a.data + b.data, (a, b), back)


def mul(a, c) -> Tensor:
    """Multiply by a python scalar."""
    if isinstance(a, Tensor) is False:
        a, c = c, a
    c = float(c)

    def back(g):
        a.accumulate(g * c)

    return make_node(a.data * a.data.dtype.type(c), (a,), back)


def sum_all(x: Tensor) -> Tensor:
    def back(g):
        x.accumulate(np.broadcast_to(g.reshape(()), x.shape))

    return make_node(np.asarray(x.data.sum(), dtype=x.data.dtype), (x,), back)


def mean_all(x: Tensor) -> Tensor:
    return mul(sum_all(x), 1.0 / x.size)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def back(g):
        x.accumulate(g * mask)

    return make_node(np.where(mask, x.data, 0).astype(x.data.dtype), (x,), back)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(x: Tensor) -> Tensor:
    s = _sigmoid(x.data)

    def back(g):
        x.accumulate(g * s * (1 - s))

    return make_node(s, (x,), back)


def flatten(x: Tensor) -> Tensor:
    """Row-major flatten of everything after the batch axis."""
    shape = x.shape

    def back(g):
        x.accumulate(g.reshape(shape))

    return make_node(x.data.reshape(shape[0], -1), (x,), back)


def concat(a: Tensor, b: Tensor) -> Tensor:
    """Join along the last (feature) axis."""
    na = a.shape[-1]

    def back(g):
        if a.requires_grad:
            a.accumulate(g[..., :na])
        if b.requires_grad:
            b.accumulate(g[..., na:])

    return make_node(np.concatenate([a.data, b.data], axis=-1), (a, b), back)


def take_rows(x: Tensor, index) -> Tensor:
    """``x[index]`` along the batch axis; repeated rows sum their gradients."""
    index = np.asarray(index, dtype=np.intp)

    def back(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, index, g)
        x.accumulate(gx)

    return make_node(x.data[index], (x,), back)


def dense(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    if x.shape[-1] != w.shape[0]:
        raise ValueError(f"dense input width {x.shape[-1]} != kernel rows {w.shape[0]}")

    def back(g):
        if x.requires_grad:
            x.accumulate(g @ w.data.T)
        if w.requires_grad:
            w.accumulate(x.data.T @ g)
        if b.requires_grad:
            b.accumulate(g.sum(axis=0))

    return make_node(x.data @ w.data + b.data, (x, w, b), back)


# ---- convolution ----------------------------------------------------------------

def _im2col3(xp: np.ndarray, h: int, w: int) -> np.ndarray:
    # (N, H, W, 9*C) with the 9 taps ordered (dy, dx) to match a (3, 3, C, K) kernel
    return np.concatenate(
        [xp[:, dy:dy + h, dx:dx + w, :] for dy in range(3) for dx in range(3)], axis=-1
    )


_TAPS = tuple((dy, dx) for dy in range(3) for dx in range(3))


def conv2d(x: Tensor, k: Tensor, b: Tensor) -> Tensor:
    """3x3 stride-1 cross-correlation with zero "same" padding plus bias."""
    n, h, w, c = x.shape
    if k.shape[:3] != (3, 3, c):
        raise ValueError(f"kernel {k.shape} does not fit {c} input channels")
    kk = k.shape[3]
    xp = np.pad(x.data, ((0, 0), (1, 1), (1, 1), (0, 0)))
    if kk < c:
        return _conv2d_shift_out(x, k, b, xp)
    cols = _im2col3(xp, h, w).reshape(n * h * w, 9 * c)
    k2 = k.data.reshape(9 * c, kk)
    out = (cols @ k2).reshape(n, h, w, kk) + b.data

    def back(g):
        g2 = g.reshape(n * h * w, kk)
        if k.requires_grad:
            k.accumulate((cols.T @ g2).reshape(k.shape))
        if b.requires_grad:
            b.accumulate(g2.sum(axis=0))
        if x.requires_grad:
            gcols = (g2 @ k2.T).reshape(n, h, w, 9, c)
            gxp = np.zeros_like(xp)
            for t, (dy, dx) in enumerate(_TAPS):
                gxp[:, dy:dy + h, dx:dx + w, :] += gcols[:, :, :, t, :]
            x.accumulate(gxp[:, 1:-1, 1:-1, :])

    return make_node(out, (x, k, b), back)


def _conv2d_shift_out(x: Tensor, k: Tensor, b: Tensor, xp: np.ndarray) -> Tensor:
    # Same result as the im2col path, cheaper when there are fewer output than
    # input channels: apply all nine taps to the padded input in one matmul,
    # then add up shifted windows of the (N, H+2, W+2, 9, K) product.
    n, h, w, c = x.shape
    kk = k.shape[3]
    hp, wp = h + 2, w + 2
    km = k.data.reshape(9, c, kk).transpose(1, 0, 2).reshape(c, 9 * kk)
    z = (xp.reshape(-1, c) @ km).reshape(n, hp, wp, 9, kk)
    out = np.zeros((n, h, w, kk), dtype=x.data.dtype)
    for t, (dy, dx) in enumerate(_TAPS):
        out += z[:, dy:dy + h, dx:dx + w, t, :]
    out += b.data

    def back(g):
        if b.requires_grad:
            b.accumulate(g.sum(axis=(0, 1, 2)))
        gz = np.zeros((n, hp, wp, 9, kk), dtype=g.dtype)
        for t, (dy, dx) in enumerate(_TAPS):
            gz[:, dy:dy + h, dx:dx + w, t, :] = g
        gz = gz.reshape(-1, 9 * kk)
        if k.requires_grad:
            gk = xp.reshape(-1, c).T @ gz
            k.accumulate(gk.reshape(c, 9, kk).transpose(1, 0, 2).reshape(k.shape))
        if x.requires_grad:
            gxp = (gz @ km.T).reshape(n, hp, wp, c)
            x.accumulate(gxp[:, 1:-1, 1:-1, :])

    return make_node(out, (x, k, b), back)


def maxpool2(x: Tensor) -> Tensor:
    """Non-overlapping 2x2 max pooling."""
    n, h, w, c = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"maxpool2 needs even spatial dims, got {h}x{w}")
    blocks = x.data.reshape(n, h // 2, 2, w // 2, 2, c).transpose(0, 1, 3, 5, 2, 4)
    blocks = blocks.reshape(n, h // 2, w // 2, c, 4)
    arg = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]

    def back(g):
        gb = np.zeros(blocks.shape, dtype=g.dtype)
        np.put_along_axis(gb, arg[..., None], g[..., None], axis=-1)
        gx = gb.reshape(n, h // 2, w // 2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3)
        x.accumulate(gx.reshape(n, h, w, c))

    return make_node(out, (x,), back)


# ---- batch normalization -----------------------------------------------------------

class BatchNormState:
    """Running statistics updated in training mode, consumed in inference mode."""

    def __init__(self, channels: int, dtype=np.float32, momentum: float = 0.99, eps: float = 1e-3):
        self.mean = np.zeros(channels, dtype=dtype)
        self.var = np.ones(channels, dtype=dtype)
        self.momentum = momentum
        self.eps = eps


def batchnorm(x: Tensor, gamma: Tensor, beta: Tensor, state: BatchNormState, training: bool) -> Tensor:
    axes = tuple(range(x.data.ndim - 1))
    eps = x.data.dtype.type(state.eps)
    if not training:
        inv = 1.0 / np.sqrt(state.var + eps)
        xhat = (x.data - state.mean) * inv
        out = xhat * gamma.data + beta.data

        def back_inf(g):
            if x.requires_grad:
                x.accumulate(g * gamma.data * inv)
            if gamma.requires_grad:
                gamma.accumulate((g * xhat).sum(axis=axes))
            if beta.requires_grad:
                beta.accumulate(g.sum(axis=axes))

        return make_node(out.astype(x.data.dtype), (x, gamma, beta), back_inf)

    m = x.data.size // x.shape[-1]
    mu = x.data.mean(axis=axes)
    var = x.data.var(axis=axes)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = xhat * gamma.data + beta.data
    mom = state.momentum
    state.mean = (mom * state.mean + (1 - mom) * mu).astype(state.mean.dtype)
    state.var = (mom * state.var + (1 - mom) * var).astype(state.var.dtype)

    def back(g):
        gsum = g.sum(axis=axes)
        gxhat_sum = (g * xhat).sum(axis=axes)
        if gamma.requires_grad:
            gamma.accumulate(gxhat_sum)
        if beta.requires_grad:
            beta.accumulate(gsum)
        if x.requires_grad:
            gx = (gamma.data * inv / m) * (m * g - gsum - xhat * gxhat_sum)
            x.accumulate(gx)

    return make_node(out.astype(x.data.dtype), (x, gamma, beta), back)


# ---- LSTM ----------------------------------------------------------------------

def _act(name: str):
    if name == "sigmoid":
        return _sigmoid, lambda y: y * (1 - y)
    if name == "tanh":
        return np.tanh, lambda y: 1 - y * y
    raise ValueError(f"unsupported activation {name!r}")


def lstm(seq: Tensor, wx: Tensor, wh: Tensor, b: Tensor, return_sequences: bool,
         activation: str = "sigmoid") -> Tensor:
    """One LSTM layer from a zero initial state.

    Gates are packed ``[input, forget, candidate, output]`` along the last axis
    of ``wx`` (D, 4U), ``wh`` (U, 4U) and ``b`` (4U). Gates use the logistic
    function; ``activation`` applies to the candidate and to the cell state on
    the way out.
    """
    if seq.data.ndim != 3:
        raise ValueError(f"lstm expects (N, T, D), got {seq.shape}")
    n, steps, d = seq.shape
    if steps == 0:
        raise ValueError("lstm needs at least one time step")
    if wx.shape[0] != d:
        raise ValueError(f"lstm input width {d} != kernel rows {wx.shape[0]}")
    u = wh.shape[0]
    act, dact = _act(activation)
    dt = seq.data.dtype

    h = np.zeros((n, u), dtype=dt)
    c = np.zeros((n, u), dtype=dt)
    hs = np.zeros((n, steps, u), dtype=dt)
    cache = []
    xw = seq.data @ wx.data + b.data  # (N, T, 4U)
    for t in range(steps):
        z = xw[:, t] + h @ wh.data
        i = _sigmoid(z[:, :u])
        f = _sigmoid(z[:, u:2 * u])
        g = act(z[:, 2 * u:3 * u])
        o = _sigmoid(z[:, 3 * u:])
        c_prev = c
        c = f * c_prev + i * g
        ac = act(c)
        h_prev = h
        h = o * ac
        hs[:, t] = h
        cache.append((i, f, g, o, c_prev, ac, h_prev))
    out = hs if return_sequences else h

    def back(grad):
        if return_sequences:
            gh_seq = grad
        else:
            gh_seq = np.zeros((n, steps, u), dtype=dt)
            gh_seq[:, -1] = grad
        gz_all = np.zeros((n, steps, 4 * u), dtype=dt)
        gwh = np.zeros_like(wh.data)
        gh_next = np.zeros((n, u), dtype=dt)
        gc_next = np.zeros((n, u), dtype=dt)
        for t in reversed(range(steps)):
            i, f, g, o, c_prev, ac, h_prev = cache[t]
            gh = gh_seq[:, t] + gh_next
            go = gh * ac
            gc = gc_next + gh * o * dact(ac)
            gi = gc * g
            gf = gc * c_prev
            gg = gc * i
            gz = np.concatenate([
                gi * i * (1 - i),
                gf * f * (1 - f),
                gg * dact(g),
                go * o * (1 - o),
            ], axis=1)
            gz_all[:, t] = gz
            gwh += h_prev.T @ gz
            gh_next = gz @ wh.data.T
            gc_next = gc * f
        if wh.requires_grad:
            wh.accumulate(gwh)
        if wx.requires_grad:
            wx.accumulate(seq.data.reshape(n * steps, d).T @ gz_all.reshape(n * steps, 4 * u))
        if b.requires_grad:
            b.accumulate(gz_all.sum(axis=(0, 1)))
        if seq.requires_grad:
            seq.accumulate(gz_all @ wx.data.T)

    return make_node(out, (seq, wx, wh, b), back)


# ---- losses --------------------------------------------------------------------

BCE_CLAMP = 1e-7


def weighted_bce(p: Tensor, y, w0: float = 1.0, w1: float = 1.0, reduction: str = "mean") -> Tensor:
    """Class-weighted binary cross-entropy on probabilities.

    Per sample: ``-(w1 * y * ln p + w0 * (1 - y) * ln(1 - p))`` with ``p``
    clamped to ``[1e-7, 1 - 1e-7]``. ``reduction`` is ``"mean"``, ``"sum"``
    or ``"none"``.
    """
    y = np.asarray(y, dtype=p.data.dtype).reshape(p.shape)
    lo, hi = BCE_CLAMP, 1.0 - BCE_CLAMP
    pc = np.clip(p.data.astype(np.float64), lo, hi)
    per = -(w1 * y * np.log(pc) + w0 * (1 - y) * np.log(1 - pc))
    inside = (p.data > lo) & (p.data < hi)
    dper = np.where(inside, -(w1 * y / pc) + w0 * (1 - y) / (1 - pc), 0.0)
    if reduction == "none":
        data, scale = per, None
    elif reduction == "sum":
        data, scale = per.sum(), 1.0
    elif reduction == "mean":
        data, scale = per.mean(), 1.0 / per.size
    else:
        raise ValueError(f"unknown reduction {reduction!r}")

    def back(g):
        gp = dper * (g if scale is None else g * scale)
        p.accumulate(gp.astype(p.data.dtype))

    return make_node(np.asarray(data, dtype=p.data.dtype), (p,), back)


def l2_penalty(params, lam: float) -> Tensor:
    """``lam * sum(w ** 2)`` over the given parameters."""
    params = list(params)
    total = sum(float(np.sum(w.data.astype(np.float64) ** 2)) for w in params)

    def back(g):
        for w in params:
            w.accumulate(2.0 * lam * g * w.data)

    return make_node(np.asarray(lam * total, dtype=params[0].data.dtype), params, back)
