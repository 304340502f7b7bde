"""Minimal differentiable kernels: conv/deconv/dense layers, losses, Adam.

Everything runs on float32 numpy arrays ("tensors") shaped (C, H, W) or
(N, C, H, W) for image-like data and (F,) or (N, F) for flat data. The
network graphs used here are fixed feed-forward chains, so gradients are
computed from explicit per-layer cached inputs instead of a general tape.
All operations are deterministic: identical inputs give bit-identical
outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError, TrainingError

ACTIVATIONS = ("linear", "relu", "leaky_relu", "sigmoid")

_BCE_EPS = 1e-7
_SIGMOID_CLIP = 88.0  # exp stays inside float32 range


def conv_out_size(size: int, k: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - k) // stride + 1


def deconv_out_size(size: int, k: int, stride: int, padding: int) -> int:
    return (size - 1) * stride - 2 * padding + k


@dataclass
class LayerParams:
    """Parameters of one layer.

    Weight layout: conv (out_ch, in_ch, k, k); deconv (in_ch, out_ch, k, k),
    i.e. a deconv applies the adjoint of a conv holding the same array;
    dense (out_features, in_features).
    """

    kind: str  # conv | deconv | dense
    weights: np.ndarray
    bias: np.ndarray
    stride: int = 1
    padding: int = 0
    activation: str = "linear"
    slope: float = 0.2

    def __post_init__(self):
        if self.kind not in ("conv", "deconv", "dense"):
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.activation == "leaky_relu" and not 0.0 < self.slope < 1.0:
            raise ValueError(f"leaky_relu slope must be in (0,1), got {self.slope}")
        if self.stride < 1 or self.padding < 0:
            raise ValueError("stride must be >= 1 and padding >= 0")
        self.weights = np.asarray(self.weights, dtype=np.float32)
        self.bias = np.asarray(self.bias, dtype=np.float32)

    @property
    def kernel_size(self) -> int:
        return 1 if self.kind == "dense" else int(self.weights.shape[-1])

    def out_channels(self) -> int:
        if self.kind == "deconv":
            return int(self.weights.shape[1])
        return int(self.weights.shape[0])

    def in_channels(self) -> int:
        if self.kind == "deconv":
            return int(self.weights.shape[0])
        return int(self.weights.shape[1])


def _uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = float(np.sqrt(1.0 / fan_in))
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


def conv_layer(in_ch, out_ch, k, stride=1, padding=0, activation="linear",
               slope=0.2, *, rng: np.random.Generator) -> LayerParams:
    w = _uniform_init(rng, (out_ch, in_ch, k, k), in_ch * k * k)
    return LayerParams("conv", w, np.zeros(out_ch, np.float32), stride, padding,
                       activation, slope)


def deconv_layer(in_ch, out_ch, k, stride=1, padding=0, activation="linear",
                 slope=0.2, *, rng: np.random.Generator) -> LayerParams:
    w = _uniform_init(rng, (in_ch, out_ch, k, k), in_ch * k * k)
    return LayerParams("deconv", w, np.zeros(out_ch, np.float32), stride, padding,
                       activation, slope)


def dense_layer(in_features, out_features, activation="linear", slope=0.2,
                *, rng: np.random.Generator) -> LayerParams:
    w = _uniform_init(rng, (out_features, in_features), in_features)
    return LayerParams("dense", w, np.zeros(out_features, np.float32),
                       activation=activation, slope=slope)


# ---------------------------------------------------------------------------
# activations

def activate(kind: str, x: np.ndarray, slope: float = 0.2) -> np.ndarray:
    """Elementwise activation; total on all finite inputs."""
    x = np.asarray(x, dtype=np.float32)
    if kind == "linear":
        return x
    if kind == "relu":
        return np.maximum(x, 0.0)
    if kind == "leaky_relu":
        return np.where(x >= 0.0, x, np.float32(slope) * x)
    if kind == "sigmoid":
        z = np.clip(x, -_SIGMOID_CLIP, _SIGMOID_CLIP)
        return (1.0 / (1.0 + np.exp(-z))).astype(np.float32)
    raise ValueError(f"unknown activation {kind!r}")


def _activate_grad(kind: str, z: np.ndarray, slope: float) -> np.ndarray:
    if kind == "linear":
        return np.ones_like(z)
    if kind == "relu":
        return (z > 0.0).astype(np.float32)
    if kind == "leaky_relu":
        return np.where(z >= 0.0, np.float32(1.0), np.float32(slope))
    if kind == "sigmoid":
        s = activate("sigmoid", z)
        return s * (1.0 - s)
    raise ValueError(f"unknown activation {kind!r}")


# ---------------------------------------------------------------------------
# im2col plumbing

def _im2col(x: np.ndarray, k: int, stride: int, pad: int):
    """(N,C,H,W) -> (N, C*k*k, OH*OW) patch matrix."""
    n, c, h, w = x.shape
    oh = conv_out_size(h, k, stride, pad)
    ow = conv_out_size(w, k, stride, pad)
    if oh < 1 or ow < 1:
        raise ShapeError(f"kernel {k} with stride {stride}, padding {pad} does not "
                         f"fit input {h}x{w}")
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(2, 3))
    win = win[:, :, ::stride, ::stride, :, :]
    cols = win.transpose(0, 1, 4, 5, 2, 3).reshape(n, c * k * k, oh * ow)
    return np.ascontiguousarray(cols), oh, ow


def _col2im(cols: np.ndarray, x_shape, k: int, stride: int, pad: int) -> np.ndarray:
    """Adjoint of _im2col: scatter-add patches back to (N,C,H,W)."""
    n, c, h, w = x_shape
    oh = conv_out_size(h, k, stride, pad)
    ow = conv_out_size(w, k, stride, pad)
    xp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    cols6 = cols.reshape(n, c, k, k, oh, ow)
    for u in range(k):
        for v in range(k):
            xp[:, :, u:u + stride * oh:stride, v:v + stride * ow:stride] += cols6[:, :, u, v]
    if pad:
        return np.ascontiguousarray(xp[:, :, pad:pad + h, pad:pad + w])
    return xp


def _as_batched(x: np.ndarray, rank: int):
    x = np.asarray(x, dtype=np.float32)
    if x.ndim == rank - 1:
        return x[None], True
    if x.ndim == rank:
        return x, False
    raise ShapeError(f"expected a rank-{rank - 1} or rank-{rank} tensor, got shape "
                     f"{x.shape}")


# ---------------------------------------------------------------------------
# layer forward/backward kernels

def _conv_forward(p: LayerParams, x: np.ndarray):
    o, ci, k, _ = p.weights.shape
    if x.shape[1] != ci:
        raise ShapeError(f"conv2d: input has {x.shape[1]} channels but weights "
                         f"{p.weights.shape} expect {ci} (input shape {x.shape})")
    cols, oh, ow = _im2col(x, k, p.stride, p.padding)
    wmat = p.weights.reshape(o, -1)
    z = np.matmul(wmat, cols) + p.bias[:, None]
    z = z.reshape(x.shape[0], o, oh, ow)
    return z, (x.shape, cols)


def _conv_backward(p: LayerParams, cache, dz: np.ndarray):
    x_shape, cols = cache
    n, o = dz.shape[0], dz.shape[1]
    dz2 = dz.reshape(n, o, -1)
    dw = np.tensordot(dz2, cols, axes=([0, 2], [0, 2])).reshape(p.weights.shape)
    db = dz2.sum(axis=(0, 2))
    wmat = p.weights.reshape(o, -1)
    dcols = np.matmul(wmat.T, dz2)
    dx = _col2im(dcols, x_shape, p.kernel_size, p.stride, p.padding)
    return dx, dw, db


def _deconv_forward(p: LayerParams, x: np.ndarray):
    ci, co, k, _ = p.weights.shape
    if x.shape[1] != ci:
        raise ShapeError(f"deconv2d: input has {x.shape[1]} channels but weights "
                         f"{p.weights.shape} expect {ci} (input shape {x.shape})")
    n, _, h, w = x.shape
    oh = deconv_out_size(h, k, p.stride, p.padding)
    ow = deconv_out_size(w, k, p.stride, p.padding)
    if oh < 1 or ow < 1:
        raise ShapeError(f"deconv2d output would be {oh}x{ow} for input {h}x{w}")
    xmat = x.reshape(n, ci, h * w)
    wmat = p.weights.reshape(ci, -1)
    cols = np.matmul(wmat.T, xmat)  # (N, co*k*k, h*w)
    z = _col2im(cols, (n, co, oh, ow), k, p.stride, p.padding)
    z += p.bias[None, :, None, None]
    return z, (x, (n, co, oh, ow))


def _deconv_backward(p: LayerParams, cache, dz: np.ndarray):
    x, out_shape = cache
    n, ci, h, w = x.shape
    k = p.kernel_size
    cols_dz, _, _ = _im2col(dz, k, p.stride, p.padding)  # (N, co*k*k, h*w)
    wmat = p.weights.reshape(ci, -1)
    dx = np.matmul(wmat, cols_dz).reshape(x.shape)
    dw = np.tensordot(x.reshape(n, ci, h * w), cols_dz,
                      axes=([0, 2], [0, 2])).reshape(p.weights.shape)
    db = dz.sum(axis=(0, 2, 3))
    return dx, dw, db


def _dense_forward(p: LayerParams, x: np.ndarray):
    o, fi = p.weights.shape
    if x.shape[1] != fi:
        raise ShapeError(f"dense: input has {x.shape[1]} features but weights "
                         f"{p.weights.shape} expect {fi}")
    z = x @ p.weights.T + p.bias
    return z, x


def _dense_backward(p: LayerParams, cache, dz: np.ndarray):
    x = cache
    dw = dz.T @ x
    db = dz.sum(axis=0)
    dx = dz @ p.weights
    return dx, dw, db


_FORWARD = {"conv": _conv_forward, "deconv": _deconv_forward, "dense": _dense_forward}
_BACKWARD = {"conv": _conv_backward, "deconv": _deconv_backward, "dense": _dense_backward}


def _layer_forward(p: LayerParams, x: np.ndarray, record: bool):
    z, cache = _FORWARD[p.kind](p, x)
    y = activate(p.activation, z, p.slope)
    return y, ((cache, z) if record else None)


def _layer_backward(p: LayerParams, cache, dy: np.ndarray):
    inner, z = cache
    dz = dy * _activate_grad(p.activation, z, p.slope)
    return _BACKWARD[p.kind](p, inner, dz)


# ---------------------------------------------------------------------------
# public single-layer ops

def conv2d(params: LayerParams, x: np.ndarray) -> np.ndarray:
    """Strided 2-D convolution + activation on a (C,H,W) or (N,C,H,W) tensor."""
    if params.kind != "conv":
        raise ValueError(f"conv2d needs a conv layer, got {params.kind!r}")
    xb, squeeze = _as_batched(x, 4)
    y, _ = _layer_forward(params, xb, record=False)
    return y[0] if squeeze else y


def deconv2d(params: LayerParams, x: np.ndarray) -> np.ndarray:
    """Transposed convolution (adjoint of conv2d with the same weights)."""
    if params.kind != "deconv":
        raise ValueError(f"deconv2d needs a deconv layer, got {params.kind!r}")
    xb, squeeze = _as_batched(x, 4)
    y, _ = _layer_forward(params, xb, record=False)
    return y[0] if squeeze else y


def dense(params: LayerParams, x: np.ndarray) -> np.ndarray:
    """Affine map Wx + b (+ activation) on (F,) or (N,F)."""
    if params.kind != "dense":
        raise ValueError(f"dense needs a dense layer, got {params.kind!r}")
    xb, squeeze = _as_batched(x, 2)
    y, _ = _layer_forward(params, xb, record=False)
    return y[0] if squeeze else y


# ---------------------------------------------------------------------------
# losses (scalar values in double precision, gradients in float32)

def _check_same_shape(a: np.ndarray, b: np.ndarray, op: str):
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ")


def bce_loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean binary cross-entropy; predictions clamped away from {0,1}."""
    pred = np.asarray(pred, dtype=np.float32)
    target = np.asarray(target, dtype=np.float32)
    _check_same_shape(pred, target, "bce_loss")
    p = np.clip(pred, _BCE_EPS, 1.0 - _BCE_EPS).astype(np.float64)
    t = target.astype(np.float64)
    return float(-np.mean(t * np.log(p) + (1.0 - t) * np.log1p(-p)))


def bce_grad(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    pred = np.asarray(pred, dtype=np.float32)
    target = np.asarray(target, dtype=np.float32)
    _check_same_shape(pred, target, "bce_grad")
    p = np.clip(pred, _BCE_EPS, 1.0 - _BCE_EPS)
    g = (-target / p + (1.0 - target) / (1.0 - p)) / pred.size
    g[(pred < _BCE_EPS) | (pred > 1.0 - _BCE_EPS)] = 0.0  # clamp is flat
    return g.astype(np.float32)


def l1_loss(a: np.ndarray, b: np.ndarray) -> float:
    """Mean absolute difference; zero iff a == b."""
    a = np.asarray(a, dtype=np.float32)
    b = np.asarray(b, dtype=np.float32)
    _check_same_shape(a, b, "l1_loss")
    return float(np.mean(np.abs(a.astype(np.float64) - b.astype(np.float64))))


def l1_grad(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float32)
    b = np.asarray(b, dtype=np.float32)
    _check_same_shape(a, b, "l1_grad")
    return (np.sign(a - b) / a.size).astype(np.float32)


# ---------------------------------------------------------------------------
# feed-forward chain with recorded caches

class Sequential:
    """Ordered chain of layers with explicit forward/backward.

    ``forward(x, record=True)`` stores the per-layer inputs needed by
    ``backward``; a backward call without a recorded forward is rejected.
    """

    def __init__(self, layers):
        self.layers: list[LayerParams] = list(layers)
        self._caches = None

    def forward(self, x: np.ndarray, record: bool = False) -> np.ndarray:
        caches = [] if record else None
        y = np.asarray(x, dtype=np.float32)
        for p in self.layers:
            y, cache = _layer_forward(p, y, record)
            if record:
                caches.append(cache)
        self._caches = caches
        return y

    def backward(self, dy: np.ndarray):
        """Return (dx, grads); grads align with parameters(). Consumes the cache."""
        if self._caches is None:
            raise RuntimeError("backward called without a recorded forward pass")
        grads: list[np.ndarray] = []
        d = np.asarray(dy, dtype=np.float32)
        for p, cache in zip(reversed(self.layers), reversed(self._caches)):
            d, dw, db = _layer_backward(p, cache, d)
            grads.append(db)
            grads.append(dw)
        self._caches = None
        grads.reverse()
        return d, grads

    def parameters(self) -> list[np.ndarray]:
        out = []
        for p in self.layers:
            out.append(p.weights)
            out.append(p.bias)
        return out


# ---------------------------------------------------------------------------
# optimizer

@dataclass
class AdamState:
    """Adam accumulators for one parameter list."""

    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    step: int = 0
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_params(cls, params, lr=2e-4, beta1=0.5, beta2=0.999, epsilon=1e-8):
        return cls(m=[np.zeros_like(p) for p in params],
                   v=[np.zeros_like(p) for p in params],
                   step=0, lr=lr, beta1=beta1, beta2=beta2, epsilon=epsilon)


def adam_step(params, grads, state: AdamState) -> AdamState:
    """One bias-corrected Adam update, applied to the arrays in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeError(f"adam_step: {len(params)} params vs {len(grads)} grads vs "
                         f"{len(state.m)} accumulators")
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient at step {state.step + 1}")
    state.step += 1
    b1 = np.float32(state.beta1)
    b2 = np.float32(state.beta2)
    corr1 = np.float32(1.0 - state.beta1 ** state.step)
    corr2 = np.float32(1.0 - state.beta2 ** state.step)
    lr = np.float32(state.lr)
    eps = np.float32(state.epsilon)
    for p, g, m, v in zip(params, grads, state.m, state.v):
        g = g.astype(np.float32, copy=False)
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * (g * g)
        p -= lr * (m / corr1) / (np.sqrt(v / corr2) + eps)
    return state
