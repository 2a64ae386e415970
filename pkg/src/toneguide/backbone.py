"""Score/label-conditioned context network with hand-written gradients.

Five stride-2 3x3 conv layers (instance norm after layers 1-4, leaky-ReLU
slope 0.2 throughout) encode a conditioned input stack into a context
feature vector by global average pooling.  Two small MLP heads generate the
color transform from that vector: one emits the three 1D curves as a
residual on the identity, the other emits fusion weights for the basis 3D
grids.  With freshly initialized parameters the emitted transform is the
exact identity.

Everything here is plain numpy.  ``forward`` records a tape of
intermediates; ``backward`` replays it for exact reverse-mode gradients,
which the tests compare against central finite differences.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import lut as lutmod
from .color import Colorspace, ImageBuffer, convert_image
from .errors import (
    LabelOutOfRange,
    ScoreOutOfGuideRange,
    ScoreOutOfRange,
    ShapeMismatch,
    StaleTape,
)

LABEL_MIN, LABEL_MAX = 1, 10


@dataclass(frozen=True)
class BackboneConfig:
    in_channels: int = 5  # 3 image + score plane (+ label plane when present)
    widths: tuple = (16, 32, 64, 128, 128)
    head_hidden: int = 128
    lut_bins: int = 33
    basis_count: int = 3
    emit_1d_luts: bool = True
    cond_size: int = 256
    leaky_slope: float = 0.2
    norm_eps: float = 1e-5

    @property
    def feature_len(self) -> int:
        return self.widths[-1]

    def to_dict(self) -> dict:
        return {
            "in_channels": self.in_channels,
            "widths": list(self.widths),
            "head_hidden": self.head_hidden,
            "lut_bins": self.lut_bins,
            "basis_count": self.basis_count,
            "emit_1d_luts": self.emit_1d_luts,
            "cond_size": self.cond_size,
            "leaky_slope": self.leaky_slope,
            "norm_eps": self.norm_eps,
        }

    @staticmethod
    def from_dict(d: dict) -> "BackboneConfig":
        d = dict(d)
        d["widths"] = tuple(d["widths"])
        return BackboneConfig(**d)


@dataclass
class NetParams:
    """All trainable arrays, keyed by a fixed, ordered set of names.

    The name order is the checkpoint serialization order; see
    :func:`param_names`.
    """

    config: BackboneConfig
    arrays: dict = field(default_factory=dict)

    def names(self):
        return list(self.arrays.keys())

    @property
    def dtype(self):
        return next(iter(self.arrays.values())).dtype

    def astype(self, dtype) -> "NetParams":
        return NetParams(self.config, {k: v.astype(dtype) for k, v in self.arrays.items()})

    def copy(self) -> "NetParams":
        return NetParams(self.config, {k: v.copy() for k, v in self.arrays.items()})


def param_names(config: BackboneConfig) -> list:
    names = []
    n_layers = len(config.widths)
    for i in range(n_layers):
        names += [f"conv{i}.w", f"conv{i}.b"]
        if i < n_layers - 1:
            names += [f"norm{i}.gamma", f"norm{i}.beta"]
    if config.emit_1d_luts:
        names += ["g1d.w1", "g1d.b1", "g1d.w2", "g1d.b2"]
    names += ["g3d.w1", "g3d.b1", "g3d.w2", "g3d.b2"]
    return names


def _kaiming_uniform(rng, shape, fan_in, slope):
    gain = np.sqrt(2.0 / (1.0 + slope**2))
    bound = gain * np.sqrt(3.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_params(config: BackboneConfig, seed: int = 0, dtype=np.float32) -> NetParams:
    """Kaiming-uniform convs; zero residual head; fusion head biased to (1,0,...,0)."""
    rng = np.random.default_rng(seed)
    arrays = {}
    c_in = config.in_channels
    for i, c_out in enumerate(config.widths):
        arrays[f"conv{i}.w"] = _kaiming_uniform(
            rng, (c_out, c_in, 3, 3), fan_in=c_in * 9, slope=config.leaky_slope
        )
        arrays[f"conv{i}.b"] = np.zeros(c_out)
        if i < len(config.widths) - 1:
            arrays[f"norm{i}.gamma"] = np.ones(c_out)
            arrays[f"norm{i}.beta"] = np.zeros(c_out)
        c_in = c_out
    feat = config.feature_len
    hidden = config.head_hidden
    if config.emit_1d_luts:
        arrays["g1d.w1"] = _kaiming_uniform(rng, (hidden, feat), fan_in=feat, slope=config.leaky_slope)
        arrays["g1d.b1"] = np.zeros(hidden)
        arrays["g1d.w2"] = np.zeros((3 * config.lut_bins, hidden))
        arrays["g1d.b2"] = np.zeros(3 * config.lut_bins)
    arrays["g3d.w1"] = _kaiming_uniform(rng, (hidden, feat), fan_in=feat, slope=config.leaky_slope)
    arrays["g3d.b1"] = np.zeros(hidden)
    arrays["g3d.w2"] = np.zeros((config.basis_count, hidden))
    bias = np.zeros(config.basis_count)
    bias[0] = 1.0
    arrays["g3d.b2"] = bias
    return NetParams(config, {k: v.astype(dtype) for k, v in arrays.items()})


# --------------------------------------------------------------------------
# Conditioning
# --------------------------------------------------------------------------

@dataclass
class ConditionedInput:
    planes: np.ndarray  # (C, size, size) float32
    score: float
    label: int | None


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Half-pixel-center bilinear resize of an H x W x C array, border replicate."""
    h, w = img.shape[:2]
    # clamp sample centers into the source extent first so border samples
    # replicate the edge pixel instead of interpolating past it
    ys = np.clip((np.arange(out_h, dtype=np.float64) + 0.5) * (h / out_h) - 0.5, 0, h - 1)
    xs = np.clip((np.arange(out_w, dtype=np.float64) + 0.5) * (w / out_w) - 0.5, 0, w - 1)
    y0 = np.floor(ys)
    x0 = np.floor(xs)
    fy = (ys - y0)[:, None, None]
    fx = (xs - x0)[None, :, None]
    y0 = y0.astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x0 = x0.astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    top = img[y0][:, x0] * (1 - fx) + img[y0][:, x1] * fx
    bot = img[y1][:, x0] * (1 - fx) + img[y1][:, x1] * fx
    return top * (1 - fy) + bot * fy


def map_score(score: float, score_range: tuple) -> float:
    """Affine map of a score in [-1, 1] onto the configured conditioning range."""
    lo, hi = score_range
    return lo + (score + 1.0) * (hi - lo) / 2.0


def map_label(label: int, label_range: tuple) -> float:
    """Affine map of a label in {1..10} onto the configured conditioning range."""
    lo, hi = label_range
    return lo + (label - LABEL_MIN) * (hi - lo) / (LABEL_MAX - LABEL_MIN)


def condition(
    image: ImageBuffer,
    score: float,
    label: int | None,
    *,
    size: int = 256,
    score_range: tuple = (-1.0, 1.0),
    label_range: tuple = (1.0, 10.0),
    strict_score: bool = True,
) -> ConditionedInput:
    """Stack the downsampled image with replicated score (and label) planes.

    ``score`` is expected in [-1, 1]; out-of-range values raise
    ``ScoreOutOfRange`` when ``strict_score`` or emit a
    ``ScoreOutOfGuideRange`` warning otherwise (extended-range probing).
    """
    if image.colorspace != Colorspace.SRGB:
        raise ShapeMismatch("conditioning expects an SRGB image")
    if not np.isfinite(score):
        raise ScoreOutOfRange(f"score must be finite, got {score!r}")
    if abs(score) > 1.0:
        if strict_score:
            raise ScoreOutOfRange(f"score {score} outside [-1, 1]")
        warnings.warn(
            f"score {score} is outside the trained guide range [-1, 1]; "
            "model response out here is unconstrained",
            ScoreOutOfGuideRange,
        )
    if label is not None:
        if not isinstance(label, (int, np.integer)) or not (LABEL_MIN <= int(label) <= LABEL_MAX):
            raise LabelOutOfRange(f"label must be an integer in [1, 10], got {label!r}")
        label = int(label)

    small = resize_bilinear(image.data.astype(np.float64), size, size)
    channels = [small[..., 0], small[..., 1], small[..., 2]]
    channels.append(np.full((size, size), map_score(score, score_range), dtype=np.float64))
    if label is not None:
        channels.append(np.full((size, size), map_label(label, label_range), dtype=np.float64))
    planes = np.stack(channels).astype(np.float32)
    return ConditionedInput(planes=planes, score=score, label=label)


# --------------------------------------------------------------------------
# Layers
# --------------------------------------------------------------------------

def _conv_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """3x3, stride 2, pad 1.  Returns (out, im2col matrix kept for backward)."""
    c_in, h, w_in = x.shape
    c_out = w.shape[0]
    xp = np.zeros((c_in, h + 2, w_in + 2), dtype=x.dtype)
    xp[:, 1:-1, 1:-1] = x
    win = np.lib.stride_tricks.sliding_window_view(xp, (3, 3), axis=(1, 2))[:, ::2, ::2]
    h_out, w_out = win.shape[1], win.shape[2]
    cols = np.ascontiguousarray(win.transpose(0, 3, 4, 1, 2)).reshape(c_in * 9, h_out * w_out)
    out = w.reshape(c_out, -1) @ cols + b[:, None]
    return out.reshape(c_out, h_out, w_out), cols


def _conv_backward(grad_out, cols, w, x_shape, need_input_grad: bool):
    c_out = w.shape[0]
    go = grad_out.reshape(c_out, -1)
    grad_w = (go @ cols.T).reshape(w.shape)
    grad_b = go.sum(axis=1)
    grad_x = None
    if need_input_grad:
        c_in, h, w_in = x_shape
        h_out = (h + 1) // 2
        w_out = (w_in + 1) // 2
        gcols = (w.reshape(c_out, -1).T @ go).reshape(c_in, 3, 3, h_out, w_out)
        gx = np.zeros((c_in, h + 2, w_in + 2), dtype=go.dtype)
        for kh in range(3):
            for kw in range(3):
                gx[:, kh : kh + 2 * h_out : 2, kw : kw + 2 * w_out : 2] += gcols[:, kh, kw]
        grad_x = gx[:, 1:-1, 1:-1]
    return grad_w, grad_b, grad_x


def _instance_norm_forward(z, gamma, beta, eps):
    mu = z.mean(axis=(1, 2), keepdims=True)
    var = z.var(axis=(1, 2), keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (z - mu) * inv_std
    y = gamma[:, None, None] * xhat + beta[:, None, None]
    return y, xhat, inv_std


def _instance_norm_backward(grad_y, xhat, inv_std, gamma):
    n = xhat.shape[1] * xhat.shape[2]
    grad_gamma = (grad_y * xhat).sum(axis=(1, 2))
    grad_beta = grad_y.sum(axis=(1, 2))
    ghat = grad_y * gamma[:, None, None]
    s1 = ghat.sum(axis=(1, 2), keepdims=True)
    s2 = (ghat * xhat).sum(axis=(1, 2), keepdims=True)
    grad_z = inv_std * (ghat - s1 / n - xhat * (s2 / n))
    return grad_z, grad_gamma, grad_beta


def _lrelu(x, slope):
    return np.where(x > 0, x, slope * x)


def _lrelu_backward(grad, out, slope):
    # leaky-ReLU preserves sign, so the output's sign recovers the mask
    return np.where(out > 0, grad, slope * grad)


# --------------------------------------------------------------------------
# Forward / backward
# --------------------------------------------------------------------------

@dataclass
class ForwardTape:
    params: NetParams
    planes: np.ndarray
    layers: list
    feature: np.ndarray
    g1d_h_pre: np.ndarray | None
    g1d_h: np.ndarray | None
    g3d_h_pre: np.ndarray
    g3d_h: np.ndarray
    gap_shape: tuple


@dataclass
class ForwardResult:
    feature: np.ndarray
    lut_triple: lutmod.Lut1DTriple | None
    weights: np.ndarray
    tape: ForwardTape


def forward(params: NetParams, x: ConditionedInput | np.ndarray) -> ForwardResult:
    cfg = params.config
    planes = x.planes if isinstance(x, ConditionedInput) else np.asarray(x)
    if planes.ndim != 3 or planes.shape[0] != cfg.in_channels:
        raise ShapeMismatch(
            f"expected ({cfg.in_channels}, H, W) input, got {planes.shape}"
        )
    dtype = params.dtype
    act = planes.astype(dtype)
    layer_records = []
    n_layers = len(cfg.widths)
    for i in range(n_layers):
        w = params.arrays[f"conv{i}.w"]
        b = params.arrays[f"conv{i}.b"]
        x_shape = act.shape
        z, cols = _conv_forward(act, w, b)
        rec = {"x_shape": x_shape, "cols": cols}
        if i < n_layers - 1:
            gamma = params.arrays[f"norm{i}.gamma"]
            beta = params.arrays[f"norm{i}.beta"]
            y, xhat, inv_std = _instance_norm_forward(z, gamma, beta, cfg.norm_eps)
            rec["xhat"] = xhat
            rec["inv_std"] = inv_std
        else:
            y = z
        act = _lrelu(y, cfg.leaky_slope)
        rec["act"] = act
        layer_records.append(rec)

    gap_shape = act.shape
    feature = act.mean(axis=(1, 2))

    weights_dtype = dtype
    if cfg.emit_1d_luts:
        h_pre = params.arrays["g1d.w1"] @ feature + params.arrays["g1d.b1"]
        h = _lrelu(h_pre, cfg.leaky_slope)
        residual = (params.arrays["g1d.w2"] @ h + params.arrays["g1d.b2"]).reshape(3, cfg.lut_bins)
        base = np.linspace(0.0, 1.0, cfg.lut_bins, dtype=weights_dtype)
        triple = lutmod.Lut1DTriple.from_array(base[None, :] + residual)
        g1d_h_pre, g1d_h = h_pre, h
    else:
        triple = None
        g1d_h_pre = g1d_h = None

    h3_pre = params.arrays["g3d.w1"] @ feature + params.arrays["g3d.b1"]
    h3 = _lrelu(h3_pre, cfg.leaky_slope)
    weights = params.arrays["g3d.w2"] @ h3 + params.arrays["g3d.b2"]

    tape = ForwardTape(
        params=params,
        planes=planes,
        layers=layer_records,
        feature=feature,
        g1d_h_pre=g1d_h_pre,
        g1d_h=g1d_h,
        g3d_h_pre=h3_pre,
        g3d_h=h3,
        gap_shape=gap_shape,
    )
    return ForwardResult(feature=feature, lut_triple=triple, weights=weights, tape=tape)


def backward(
    params: NetParams,
    tape: ForwardTape,
    grad_lut_entries: np.ndarray | None,
    grad_weights: np.ndarray,
    grad_feature: np.ndarray | None = None,
) -> dict:
    """Reverse-mode gradients of :func:`forward` w.r.t. every parameter.

    ``grad_lut_entries`` is the (3, S) upstream gradient on the emitted 1D
    curve entries (None when the head is disabled); ``grad_weights`` the (K,)
    gradient on the fusion weights.
    """
    if tape.params is not params:
        raise StaleTape("tape was recorded with different parameters")
    cfg = params.config
    dtype = params.dtype
    grads = {name: np.zeros_like(arr) for name, arr in params.arrays.items()}

    g_feat = np.zeros(cfg.feature_len, dtype=dtype)
    if grad_feature is not None:
        g_feat += grad_feature.astype(dtype)

    g_w = np.asarray(grad_weights, dtype=dtype)
    grads["g3d.w2"] += np.outer(g_w, tape.g3d_h)
    grads["g3d.b2"] += g_w
    g_h3 = params.arrays["g3d.w2"].T @ g_w
    g_h3 = _lrelu_backward(g_h3, tape.g3d_h, cfg.leaky_slope)
    grads["g3d.w1"] += np.outer(g_h3, tape.feature)
    grads["g3d.b1"] += g_h3
    g_feat += params.arrays["g3d.w1"].T @ g_h3

    if cfg.emit_1d_luts and grad_lut_entries is not None:
        g_res = np.asarray(grad_lut_entries, dtype=dtype).reshape(3 * cfg.lut_bins)
        grads["g1d.w2"] += np.outer(g_res, tape.g1d_h)
        grads["g1d.b2"] += g_res
        g_h1 = params.arrays["g1d.w2"].T @ g_res
        g_h1 = _lrelu_backward(g_h1, tape.g1d_h, cfg.leaky_slope)
        grads["g1d.w1"] += np.outer(g_h1, tape.feature)
        grads["g1d.b1"] += g_h1
        g_feat += params.arrays["g1d.w1"].T @ g_h1

    c, h, w = tape.gap_shape
    g_act = np.broadcast_to(g_feat[:, None, None] / (h * w), tape.gap_shape).astype(dtype)

    n_layers = len(cfg.widths)
    for i in reversed(range(n_layers)):
        rec = tape.layers[i]
        g_y = _lrelu_backward(g_act, rec["act"], cfg.leaky_slope)
        if i < n_layers - 1:
            g_z, g_gamma, g_beta = _instance_norm_backward(
                g_y, rec["xhat"], rec["inv_std"], params.arrays[f"norm{i}.gamma"]
            )
            grads[f"norm{i}.gamma"] += g_gamma
            grads[f"norm{i}.beta"] += g_beta
        else:
            g_z = g_y
        need_input = i > 0
        g_cw, g_cb, g_x = _conv_backward(
            g_z, rec["cols"], params.arrays[f"conv{i}.w"], rec["x_shape"], need_input
        )
        grads[f"conv{i}.w"] += g_cw
        grads[f"conv{i}.b"] += g_cb
        g_act = g_x
    return grads


# --------------------------------------------------------------------------
# Adam
# --------------------------------------------------------------------------

@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @staticmethod
    def for_params(arrays: dict, lr: float = 1e-4) -> "AdamState":
        return AdamState(
            lr=lr,
            m={k: np.zeros_like(a) for k, a in arrays.items()},
            v={k: np.zeros_like(a) for k, a in arrays.items()},
        )


def adam_step(arrays: dict, grads: dict, state: AdamState) -> dict:
    """Standard Adam with bias correction; updates ``arrays`` in place."""
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    for name, p in arrays.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeMismatch(f"gradient shape {g.shape} != param shape {p.shape} for {name}")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        p -= (state.lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(p.dtype)
    return arrays
