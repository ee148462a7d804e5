"""Single-layer LSTM regressor with exact backpropagation through time.

Gate pre-activations are fused into one ``4H``-wide block ordered
``[input, forget, output, candidate]``::

    a_t = x_t W + h_{t-1} U + b
    i, f, o = sigmoid(a_t[:, :3H]) ; g = tanh(a_t[:, 3H:])
    c_t = f * c_{t-1} + i * g
    h_t = o * tanh(c_t)

The prediction is a linear head on the (optionally dropped-out) final hidden
state. All functions accept a single window ``(T, D)`` or a batch
``(B, T, D)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import NonFiniteActivation, ShapeMismatch, StaleCache

N_FEATURES = 8
PARAM_NAMES = ("W", "U", "b", "w_out", "b_out")


@dataclass
class LstmParams:
    W: np.ndarray  # (D, 4H)
    U: np.ndarray  # (H, 4H)
    b: np.ndarray  # (4H,)
    w_out: np.ndarray  # (H,)
    b_out: np.ndarray  # (1,)
    version: int = field(default=0, compare=False)

    @property
    def hidden_units(self) -> int:
        return self.U.shape[0]

    @property
    def input_size(self) -> int:
        return self.W.shape[0]

    @property
    def dtype(self):
        return self.W.dtype

    def arrays(self) -> dict[str, np.ndarray]:
        return {n: getattr(self, n) for n in PARAM_NAMES}

    def gate(self, name: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(input weights, recurrent weights, bias) view of one gate."""
        k = ("input", "forget", "output", "candidate").index(name)
        H = self.hidden_units
        s = slice(k * H, (k + 1) * H)
        return self.W[:, s], self.U[:, s], self.b[s]

    def astype(self, dtype) -> "LstmParams":
        return LstmParams(*(a.astype(dtype) for a in self.arrays().values()))

    def copy(self) -> "LstmParams":
        return LstmParams(*(a.copy() for a in self.arrays().values()), version=self.version)

    def check(self) -> None:
        D, H = self.input_size, self.hidden_units
        want = {"W": (D, 4 * H), "U": (H, 4 * H), "b": (4 * H,), "w_out": (H,), "b_out": (1,)}
        for name, shape in want.items():
            if getattr(self, name).shape != shape:
                raise ShapeMismatch(f"{name} has shape {getattr(self, name).shape}, expected {shape}")


def zeros_like(params: LstmParams) -> LstmParams:
    return LstmParams(*(np.zeros_like(a) for a in params.arrays().values()))


def init_params(
    hidden_units: int, rng: np.random.Generator, input_size: int = N_FEATURES, dtype=np.float64
) -> LstmParams:
    """Glorot-uniform weights per gate, forget bias 1, other biases 0."""
    H, D = hidden_units, input_size

    def glorot(fan_in, fan_out, shape):
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-lim, lim, size=shape)

    W = np.concatenate([glorot(D, H, (D, H)) for _ in range(4)], axis=1)
    U = np.concatenate([glorot(H, H, (H, H)) for _ in range(4)], axis=1)
    b = np.zeros(4 * H)
    b[H : 2 * H] = 1.0
    w_out = glorot(H, 1, (H,))
    return LstmParams(W, U, b, w_out, np.zeros(1)).astype(dtype)


@dataclass
class LstmCache:
    """Activations saved by ``lstm_forward``.

    Arrays are feature-major, ``(..., features, batch)``, so every gate
    block is a contiguous row slice.
    """

    params: LstmParams
    version: int
    x: np.ndarray  # (B, T, D)
    h: np.ndarray  # (T+1, H, B); h[0] is the zero initial state
    c: np.ndarray  # (T+1, H, B)
    gates: np.ndarray  # (T, 4H, B) post-activation
    tanh_c: np.ndarray  # (T, H, B)
    mask: np.ndarray | None  # (H, B)
    h_out: np.ndarray  # (H, B) final hidden state after dropout
    single: bool


def _as_batch(params: LstmParams, window) -> tuple[np.ndarray, bool]:
    x = np.asarray(window, dtype=params.dtype)
    single = x.ndim == 2
    if single:
        x = x[None]
    if x.ndim != 3 or x.shape[2] != params.input_size or x.shape[1] < 1:
        raise ShapeMismatch(f"window shape {np.shape(window)} incompatible with input size {params.input_size}")
    return x, single


def lstm_forward(params: LstmParams, window, dropout_mask=None, *, keep_cache: bool = True):
    """Run the recurrence from zero state and apply the linear head.

    ``dropout_mask`` (shape ``(H,)`` or ``(B, H)``) multiplies the final
    hidden state and should already carry inverted-dropout scaling (kept
    units = 1 / (1 - rate)). Pass None for inference.

    Returns ``(prediction, cache)``; prediction is a float for a single
    window or a ``(B,)`` array for a batch. ``cache`` is None when
    ``keep_cache`` is false.
    """
    x, single = _as_batch(params, window)
    B, T, _ = x.shape
    H = params.hidden_units
    dt = params.dtype
    # sigmoid(x) = (1 + tanh(x/2)) / 2; the x/2 is folded into the weights
    half = np.ones((4 * H, 1), dtype=dt)
    half[: 3 * H] = 0.5
    xproj = (params.W.T * half) @ x.transpose(1, 2, 0)  # (T, 4H, B)
    xproj += params.b[:, None] * half
    hs = np.zeros((T + 1, H, B), dtype=dt)
    cs = np.zeros((T + 1, H, B), dtype=dt)
    gates = np.empty((T, 4 * H, B), dtype=dt)
    tcs = np.empty((T, H, B), dtype=dt)
    UT = params.U.T * half
    for t in range(T):
        a = gates[t]
        np.matmul(UT, hs[t], out=a)
        a += xproj[t]
        sig = a[: 3 * H]
        np.tanh(sig, out=sig)
        sig *= 0.5
        sig += 0.5
        np.tanh(a[3 * H :], out=a[3 * H :])
        c = cs[t + 1]
        np.multiply(a[H : 2 * H], cs[t], out=c)
        c += a[:H] * a[3 * H :]
        np.tanh(c, out=tcs[t])
        np.multiply(a[2 * H : 3 * H], tcs[t], out=hs[t + 1])
    h = hs[T]
    mask = None
    h_out = h
    if dropout_mask is not None:
        m = np.asarray(dropout_mask, dtype=dt)
        if m.ndim == 1:
            m = np.broadcast_to(m, (B, H))
        if m.shape != (B, H):
            raise ShapeMismatch(f"dropout mask shape {m.shape}, expected {(B, H)}")
        mask = m.T
        h_out = h * mask
    y = params.w_out @ h_out + params.b_out[0]
    if not np.all(np.isfinite(y)):
        raise NonFiniteActivation("non-finite LSTM output")
    cache = None
    if keep_cache:
        cache = LstmCache(params, params.version, x, hs, cs, gates, tcs, mask, h_out, single)
    return (float(y[0]) if single else y), cache


def lstm_backward(params: LstmParams, cache: LstmCache, loss_gradient) -> LstmParams:
    """Exact gradients of the loss given dLoss/dPrediction.

    ``loss_gradient`` matches the prediction's shape (a float for a single
    window, ``(B,)`` for a batch).
    """
    if cache is None or cache.params is not params or cache.version != params.version:
        raise StaleCache("cache does not belong to the current parameter values")
    dt = params.dtype
    dy = np.atleast_1d(np.asarray(loss_gradient, dtype=dt))
    x, hs, cs, gates, tcs = cache.x, cache.h, cache.c, cache.gates, cache.tanh_c
    B, T, D = x.shape
    H = params.hidden_units
    if dy.shape != (B,):
        raise ShapeMismatch(f"loss gradient shape {dy.shape}, expected {(B,)}")
    grads_w_out = cache.h_out @ dy
    grads_b_out = np.array([dy.sum()], dtype=dt)
    dh = np.outer(params.w_out, dy)
    if cache.mask is not None:
        dh *= cache.mask
    i, f, o, g = (gates[:, k * H : (k + 1) * H] for k in range(4))
    # local derivatives for all steps at once; the loop only chains them
    deriv = np.concatenate([i * (1 - i), f * (1 - f), o * (1 - o), 1 - g * g], axis=1)
    o_dtanh = o * (1 - tcs * tcs)
    dc = np.zeros((H, B), dtype=dt)
    da = np.empty((T, 4 * H, B), dtype=dt)
    U = params.U
    for t in range(T - 1, -1, -1):
        dc += dh * o_dtanh[t]
        da_t = da[t]
        np.multiply(dc, g[t], out=da_t[:H])
        np.multiply(dc, cs[t], out=da_t[H : 2 * H])
        np.multiply(dh, tcs[t], out=da_t[2 * H : 3 * H])
        np.multiply(dc, i[t], out=da_t[3 * H :])
        da_t *= deriv[t]
        dc *= f[t]
        dh = U @ da_t
    # sum over steps and batch: (H, T*B) @ (T*B, 4H)
    flat = da.transpose(1, 0, 2).reshape(4 * H, T * B)
    dU = hs[:T].transpose(1, 0, 2).reshape(H, T * B) @ flat.T
    dW = x.transpose(2, 1, 0).reshape(D, T * B) @ flat.T
    db = flat.sum(axis=1)
    return LstmParams(dW, dU, db, grads_w_out, grads_b_out)


def predict(params: LstmParams, inputs, batch_size: int = 1024) -> np.ndarray:
    """Inference-mode predictions (scaled units) for a batch of windows."""
    x = np.asarray(inputs)
    out = np.empty(x.shape[0], dtype=np.float64)
    for s in range(0, x.shape[0], batch_size):
        y, _ = lstm_forward(params, x[s : s + batch_size], keep_cache=False)
        out[s : s + batch_size] = y
    return out
