"""Layers with hand-written backward passes.

Every layer keeps its trainable arrays in ``params`` and writes gradients of
the same shapes into ``grads`` during :meth:`backward`. ``forward`` caches
whatever the backward pass needs, so calls must be paired one-to-one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import BatchTooSmall, EmptySequence, EvenKernel, ShapeMismatch, ZeroLength


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int, dtype=np.float32):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def sigmoid(x):
    # split by sign so neither branch overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class Layer:
    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def zero_grad(self):
        for k, v in self.params.items():
            self.grads[k] = np.zeros_like(v)

    def _accumulate(self, name, g):
        if name in self.grads:
            self.grads[name] += g
        else:
            self.grads[name] = g


class Dense(Layer):
    """``y = x W + b`` over the last axis."""

    def __init__(self, d_in: int, d_out: int, rng=None, dtype=np.float32):
        super().__init__()
        rng = np.random.default_rng(rng)
        self.d_in, self.d_out = d_in, d_out
        self.params["W"] = glorot_uniform(rng, (d_in, d_out), d_in, d_out, dtype)
        self.params["b"] = np.zeros(d_out, dtype=dtype)

    def forward(self, x, training: bool = False):
        if x.shape[-1] != self.d_in:
            raise ShapeMismatch(f"Dense expects last dim {self.d_in}, got {x.shape}")
        self._x = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, dout):
        x = self._x
        x2 = x.reshape(-1, self.d_in)
        d2 = dout.reshape(-1, self.d_out)
        self._accumulate("W", x2.T @ d2)
        self._accumulate("b", d2.sum(axis=0))
        return dout @ self.params["W"].T


class ReLU(Layer):
    def forward(self, x, training: bool = False):
        self._on = x > 0
        return np.where(self._on, x, 0).astype(x.dtype, copy=False)

    def backward(self, dout):
        return np.where(self._on, dout, 0).astype(dout.dtype, copy=False)


class Sigmoid(Layer):
    def forward(self, x, training: bool = False):
        self._y = sigmoid(x)
        return self._y

    def backward(self, dout):
        return dout * self._y * (1 - self._y)


class Dropout(Layer):
    """Inverted dropout: kept units are scaled by ``1 / (1 - p)`` during training."""

    def __init__(self, p: float = 0.3):
        super().__init__()
        if not 0 <= p < 1:
            raise ValueError("dropout probability must lie in [0, 1)")
        self.p = p

    def forward(self, x, training: bool = False, rng: np.random.Generator | None = None):
        if not training or self.p == 0:
            self._scale = None
            return x
        rng = rng if rng is not None else np.random.default_rng()
        keep = rng.random(x.shape) >= self.p
        self._scale = (keep / (1 - self.p)).astype(x.dtype)
        return x * self._scale

    def backward(self, dout):
        return dout if self._scale is None else dout * self._scale


class BatchNorm1d(Layer):
    """Batch normalisation over axis 0 with learnable scale and shift.

    Running statistics use ``momentum`` as the weight of the new batch and the
    unbiased batch variance, matching the usual deep-learning convention.
    """

    def __init__(self, d: int, momentum: float = 0.1, eps: float = 1e-5, dtype=np.float32):
        super().__init__()
        self.d, self.momentum, self.eps = d, momentum, eps
        self.params["gamma"] = np.ones(d, dtype=dtype)
        self.params["beta"] = np.zeros(d, dtype=dtype)
        self.running_mean = np.zeros(d, dtype=dtype)
        self.running_var = np.ones(d, dtype=dtype)

    def state(self) -> dict[str, np.ndarray]:
        return {"running_mean": self.running_mean, "running_var": self.running_var}

    def forward(self, x, training: bool = False, update_stats: bool = True):
        if x.ndim != 2 or x.shape[1] != self.d:
            raise ShapeMismatch(f"BatchNorm1d expects [b, {self.d}], got {x.shape}")
        if training:
            b = x.shape[0]
            if b < 2:
                raise BatchTooSmall("batch normalisation in training mode needs at least 2 rows")
            mean = x.mean(axis=0)
            var = x.var(axis=0)
            if update_stats:
                m = self.momentum
                self.running_mean = ((1 - m) * self.running_mean + m * mean).astype(self.running_mean.dtype)
                unbiased = var * b / (b - 1)
                self.running_var = ((1 - m) * self.running_var + m * unbiased).astype(self.running_var.dtype)
        else:
            mean, var = self.running_mean, self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * inv_std
        self._cache = (training, xhat, inv_std)
        return xhat * self.params["gamma"] + self.params["beta"]

    def backward(self, dout):
        training, xhat, inv_std = self._cache
        self._accumulate("gamma", (dout * xhat).sum(axis=0))
        self._accumulate("beta", dout.sum(axis=0))
        dxhat = dout * self.params["gamma"]
        if not training:
            return dxhat * inv_std
        b = dout.shape[0]
        return (inv_std / b) * (b * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))


@dataclass
class SequenceBatch:
    """Zero-padded batch of variable-length sequences."""

    values: np.ndarray  # [batch, max_len, dim]
    mask: np.ndarray    # [batch, max_len] bool
    lengths: np.ndarray  # [batch]

    @classmethod
    def from_sequences(cls, seqs, max_len: int | None = None, dtype=None) -> "SequenceBatch":
        seqs = [np.asarray(s) for s in seqs]
        lengths = np.array([len(s) for s in seqs], dtype=np.int64)
        if len(seqs) == 0 or lengths.min() < 1:
            raise EmptySequence("every sequence needs at least one position")
        max_len = int(lengths.max()) if max_len is None else max_len
        dim = seqs[0].shape[1]
        dtype = dtype or seqs[0].dtype
        values = np.zeros((len(seqs), max_len, dim), dtype=dtype)
        for i, s in enumerate(seqs):
            values[i, : len(s)] = s
        mask = np.arange(max_len)[None, :] < lengths[:, None]
        return cls(values, mask, lengths)

    @property
    def shape(self):
        return self.values.shape


def _check_nonempty(mask):
    if mask.shape[1] == 0 or not np.all(mask.any(axis=1)):
        raise EmptySequence("every sequence needs at least one valid position")


class MaskedMeanPool(Layer):
    def forward(self, x, mask, training: bool = False):
        _check_nonempty(mask)
        m = mask[..., None].astype(x.dtype)
        self._m = m
        self._n = m.sum(axis=1)
        return (x * m).sum(axis=1) / self._n

    def backward(self, dout):
        return (dout / self._n)[:, None, :] * self._m


class MaskedMaxPool(Layer):
    """Max over valid positions; padded positions act as minus infinity."""

    def forward(self, x, mask, training: bool = False):
        _check_nonempty(mask)
        filled = np.where(mask[..., None], x, -np.inf)
        self._arg = filled.argmax(axis=1)  # [b, d]
        self._shape = x.shape
        return np.take_along_axis(x, self._arg[:, None, :], axis=1)[:, 0, :]

    def backward(self, dout):
        dx = np.zeros(self._shape, dtype=dout.dtype)
        np.put_along_axis(dx, self._arg[:, None, :], dout[:, None, :], axis=1)
        return dx


def masked_pool(batch: SequenceBatch, mode: str = "mean") -> np.ndarray:
    layer = {"mean": MaskedMeanPool, "max": MaskedMaxPool}[mode]()
    return layer.forward(batch.values, batch.mask)


def masked_softmax(logits, mask):
    """Row-wise softmax over valid positions; padded entries get exactly 0."""
    _check_nonempty(mask)
    shifted = np.where(mask, logits, -np.inf)
    shifted = shifted - shifted.max(axis=1, keepdims=True)
    ex = np.where(mask, np.exp(shifted), 0)
    return ex / ex.sum(axis=1, keepdims=True)


class AttentionPool(Layer):
    """``e_i = w . r_i``, ``alpha = softmax(e)`` over valid positions, output ``sum_i alpha_i r_i``."""

    def __init__(self, d: int, rng=None, dtype=np.float32):
        super().__init__()
        rng = np.random.default_rng(rng)
        self.params["w"] = glorot_uniform(rng, (d,), d, 1, dtype)

    def forward(self, x, mask, training: bool = False):
        logits = x @ self.params["w"]
        alpha = masked_softmax(logits, mask).astype(x.dtype, copy=False)
        self._cache = (x, alpha)
        return np.einsum("bl,bld->bd", alpha, x)

    def backward(self, dout):
        x, alpha = self._cache
        dalpha = np.einsum("bd,bld->bl", dout, x)
        dlogits = alpha * (dalpha - (alpha * dalpha).sum(axis=1, keepdims=True))
        self._accumulate("w", np.einsum("bl,bld->d", dlogits, x))
        return alpha[..., None] * dout[:, None, :] + dlogits[..., None] * self.params["w"]


class Conv1dSame(Layer):
    """Zero-padded 'same' convolution along time: ``[b, L, d_in] -> [b, L, filters]``.

    Inputs must already be zero at padded positions so that a short sequence
    inside a longer batch sees the same zeros it would see on its own.
    """

    def __init__(self, d_in: int, filters: int, kernel: int, rng=None, dtype=np.float32):
        super().__init__()
        if kernel % 2 == 0:
            raise EvenKernel(f"kernel size must be odd, got {kernel}")
        rng = np.random.default_rng(rng)
        self.d_in, self.filters, self.kernel = d_in, filters, kernel
        self.params["W"] = glorot_uniform(rng, (kernel, d_in, filters), kernel * d_in, kernel * filters, dtype)
        self.params["b"] = np.zeros(filters, dtype=dtype)

    def _columns(self, x):
        b, L, d = x.shape
        pad = self.kernel // 2
        xp = np.zeros((b, L + 2 * pad, d), dtype=x.dtype)
        xp[:, pad: pad + L] = x
        # cols[b, t, j, :] = xp[b, t + j, :]
        return np.stack([xp[:, j: j + L] for j in range(self.kernel)], axis=2)

    def forward(self, x, training: bool = False):
        if x.ndim != 3 or x.shape[2] != self.d_in:
            raise ShapeMismatch(f"Conv1dSame expects [b, L, {self.d_in}], got {x.shape}")
        cols = self._columns(x)
        b, L = x.shape[:2]
        self._cols = cols
        self._shape = x.shape
        flat = cols.reshape(b * L, self.kernel * self.d_in)
        out = flat @ self.params["W"].reshape(-1, self.filters) + self.params["b"]
        return out.reshape(b, L, self.filters)

    def backward(self, dout):
        b, L, d = self._shape
        k, pad = self.kernel, self.kernel // 2
        d2 = dout.reshape(b * L, self.filters)
        flat = self._cols.reshape(b * L, k * d)
        self._accumulate("W", (flat.T @ d2).reshape(k, d, self.filters))
        self._accumulate("b", d2.sum(axis=0))
        dcols = (d2 @ self.params["W"].reshape(-1, self.filters).T).reshape(b, L, k, d)
        dxp = np.zeros((b, L + 2 * pad, d), dtype=dout.dtype)
        for j in range(k):
            dxp[:, j: j + L] += dcols[:, :, j]
        return dxp[:, pad: pad + L]


class LSTM(Layer):
    """Single-direction LSTM returning the hidden state after the last valid step.

    Gate order in the stacked weights is input, forget, cell, output. Masked
    positions leave the state untouched, so with ``reverse=True`` each
    sequence starts at its own last valid position and ends at position 0.
    """

    def __init__(self, d_in: int, hidden: int, reverse: bool = False, rng=None, dtype=np.float32,
                 forget_bias: float = 1.0):
        super().__init__()
        rng = np.random.default_rng(rng)
        H = hidden
        self.d_in, self.hidden, self.reverse = d_in, hidden, reverse
        self.params["Wx"] = glorot_uniform(rng, (d_in, 4 * H), d_in, 4 * H, dtype)
        self.params["Wh"] = glorot_uniform(rng, (H, 4 * H), H, 4 * H, dtype)
        b = np.zeros(4 * H, dtype=dtype)
        b[H: 2 * H] = forget_bias
        self.params["b"] = b

    def forward(self, x, mask, training: bool = False):
        if x.ndim != 3 or x.shape[2] != self.d_in:
            raise ShapeMismatch(f"LSTM expects [b, L, {self.d_in}], got {x.shape}")
        if not np.all(mask.any(axis=1)):
            raise ZeroLength("LSTM input contains a zero-length sequence")
        B, L, _ = x.shape
        H = self.hidden
        Wh = self.params["Wh"]
        xg = x @ self.params["Wx"] + self.params["b"]
        h = np.zeros((B, H), dtype=xg.dtype)
        c = np.zeros((B, H), dtype=xg.dtype)
        steps = range(L - 1, -1, -1) if self.reverse else range(L)
        cache = []
        for t in steps:
            z = xg[:, t] + h @ Wh
            i = sigmoid(z[:, :H])
            f = sigmoid(z[:, H: 2 * H])
            g = np.tanh(z[:, 2 * H: 3 * H])
            o = sigmoid(z[:, 3 * H:])
            c_new = f * c + i * g
            tc = np.tanh(c_new)
            h_new = o * tc
            m = mask[:, t, None]
            cache.append((t, h, c, i, f, g, o, tc, m))
            c = np.where(m, c_new, c)
            h = np.where(m, h_new, h)
        self._cache = (x, cache)
        return h

    def backward(self, dh):
        x, cache = self._cache
        H = self.hidden
        Wh = self.params["Wh"]
        dxg = np.zeros(x.shape[:2] + (4 * H,), dtype=dh.dtype)
        dWh = np.zeros_like(Wh)
        dc = np.zeros_like(dh)
        for t, h_prev, c_prev, i, f, g, o, tc, m in reversed(cache):
            dh_new = np.where(m, dh, 0)
            dc_new = np.where(m, dc, 0) + dh_new * o * (1 - tc * tc)
            dz = np.concatenate(
                [dc_new * g * i * (1 - i),
                 dc_new * c_prev * f * (1 - f),
                 dc_new * i * (1 - g * g),
                 dh_new * tc * o * (1 - o)],
                axis=1,
            )
            dWh += h_prev.T @ dz
            dxg[:, t] = dz
            dh = np.where(m, 0, dh) + dz @ Wh.T
            dc = np.where(m, 0, dc) + dc_new * f
        B, L, d = x.shape
        flat = dxg.reshape(B * L, 4 * H)
        self._accumulate("Wx", x.reshape(B * L, d).T @ flat)
        self._accumulate("Wh", dWh)
        self._accumulate("b", flat.sum(axis=0))
        return dxg @ self.params["Wx"].T


class BiLSTM(Layer):
    """Concatenation of forward and backward final hidden states: ``[b, 2 * hidden]``."""

    def __init__(self, d_in: int, hidden: int, rng=None, dtype=np.float32):
        super().__init__()
        rng = np.random.default_rng(rng)
        self.hidden = hidden
        self.fwd = LSTM(d_in, hidden, reverse=False, rng=rng, dtype=dtype)
        self.bwd = LSTM(d_in, hidden, reverse=True, rng=rng, dtype=dtype)
        self._sync()

    def _sync(self):
        self.params = {f"fwd.{k}": v for k, v in self.fwd.params.items()}
        self.params.update({f"bwd.{k}": v for k, v in self.bwd.params.items()})

    def zero_grad(self):
        self.fwd.zero_grad()
        self.bwd.zero_grad()
        self._collect()

    def _collect(self):
        self.grads = {f"fwd.{k}": v for k, v in self.fwd.grads.items()}
        self.grads.update({f"bwd.{k}": v for k, v in self.bwd.grads.items()})

    def forward(self, x, mask, training: bool = False):
        return np.concatenate([self.fwd.forward(x, mask), self.bwd.forward(x, mask)], axis=1)

    def backward(self, dout):
        H = self.hidden
        dx = self.fwd.backward(dout[:, :H]) + self.bwd.backward(dout[:, H:])
        self._collect()
        return dx


def bce_loss(y_hat, y, eps: float = 1e-7):
    """Mean binary cross-entropy and its gradient with respect to ``y_hat``.

    Predictions are clamped to ``[eps, 1 - eps]``; the gradient is zero
    where the clamp is active.
    """
    y_hat = np.asarray(y_hat)
    y = np.asarray(y, dtype=y_hat.dtype)
    p = np.clip(y_hat, eps, 1 - eps)
    n = y_hat.size
    loss = -np.mean(y * np.log(p) + (1 - y) * np.log(1 - p))
    grad = (p - y) / (p * (1 - p)) / n
    grad = np.where((y_hat < eps) | (y_hat > 1 - eps), 0, grad).astype(y_hat.dtype, copy=False)
    return float(loss), grad
