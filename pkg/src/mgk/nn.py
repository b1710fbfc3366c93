"""Neural layers with hand-written forward/backward passes.

Every forward returns ``(out, tape)`` where the tape holds exactly what the
matching backward needs; backward returns ``(dx, grads)`` with grads keyed
by the LayerParams field names. No autograd, no framework: the layer set is
small enough that explicit gradients stay auditable, and the whole stack is
checked against central finite differences in the tests.

All math runs in float64. Image tensors are laid out (batch, height, width,
channels); vertex features are (batch, features).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ContractError, FormatError, ShapeError
from .linalg import SparseSymMatrix, multiply

BN_EPS = 1e-5
LAYER_KINDS = ("graph_conv", "conv2d", "fc", "batch_norm")

# arrays serialized per kind, in order; also the trainable prefix
_ARRAY_FIELDS = {
    "graph_conv": ("weights", "bias"),
    "conv2d": ("weights", "bias"),
    "fc": ("weights", "bias"),
    "batch_norm": ("bn_gamma", "bn_beta", "bn_running_mean", "bn_running_var"),
}
TRAINABLE_FIELDS = {
    "graph_conv": ("weights", "bias"),
    "conv2d": ("weights", "bias"),
    "fc": ("weights", "bias"),
    "batch_norm": ("bn_gamma", "bn_beta"),
}


@dataclass
class LayerParams:
    """Parameter bundle for one layer; unused fields stay None."""

    kind: str
    weights: Optional[np.ndarray] = None
    bias: Optional[np.ndarray] = None
    bn_gamma: Optional[np.ndarray] = None
    bn_beta: Optional[np.ndarray] = None
    bn_running_mean: Optional[np.ndarray] = None
    bn_running_var: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ContractError(f"unknown layer kind {self.kind!r}")
        for name in _ARRAY_FIELDS[self.kind]:
            arr = getattr(self, name)
            if arr is None:
                raise ContractError(f"{self.kind} layer is missing {name}")
            arr = np.asarray(arr, dtype=np.float64)
            if not np.all(np.isfinite(arr)):
                raise ContractError(f"{self.kind}.{name} has non-finite values")
            setattr(self, name, arr)

    def copy(self) -> "LayerParams":
        kw = {
            name: getattr(self, name).copy()
            for name in _ARRAY_FIELDS[self.kind]
        }
        return LayerParams(kind=self.kind, **kw)


@dataclass
class TapeEntry:
    """Cache produced by a train-mode forward, consumed by backward."""

    kind: str
    mode: str
    cache: tuple = field(default=())


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int,
                   shape) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def make_fc(rng, d_in: int, d_out: int) -> LayerParams:
    return LayerParams(
        kind="fc",
        weights=glorot_uniform(rng, d_in, d_out, (d_in, d_out)),
        bias=np.zeros(d_out),
    )


def make_graph_conv(rng, d_in: int, d_out: int) -> LayerParams:
    return LayerParams(
        kind="graph_conv",
        weights=glorot_uniform(rng, d_in, d_out, (d_in, d_out)),
        bias=np.zeros(d_out),
    )


def make_conv2d(rng, kh: int, kw: int, c_in: int, c_out: int) -> LayerParams:
    # receptive-field fan convention
    fan_in = kh * kw * c_in
    fan_out = kh * kw * c_out
    return LayerParams(
        kind="conv2d",
        weights=glorot_uniform(rng, fan_in, fan_out, (kh, kw, c_in, c_out)),
        bias=np.zeros(c_out),
    )


def make_batch_norm(width: int) -> LayerParams:
    return LayerParams(
        kind="batch_norm",
        bn_gamma=np.ones(width),
        bn_beta=np.zeros(width),
        bn_running_mean=np.zeros(width),
        bn_running_var=np.ones(width),
    )


# ---------------------------------------------------------------- graph conv

def graph_conv_forward(h, prop, p: LayerParams):
    """out = prop @ h @ W + b. With prop = I this is exactly an FC layer."""
    h = np.asarray(h, dtype=np.float64)
    if h.ndim != 2:
        raise ShapeError(f"vertex features must be 2-D, got {h.shape}")
    if h.shape[1] != p.weights.shape[0]:
        raise ShapeError(
            f"features {h.shape} do not match weights {p.weights.shape}"
        )
    s = multiply(prop, h)
    out = s @ p.weights + p.bias
    tape = TapeEntry("graph_conv", "train", (h, s, prop, p.weights))
    return out, tape


def graph_conv_backward(dout, tape: TapeEntry):
    _check_tape(tape, "graph_conv")
    h, s, prop, w = tape.cache
    dout = np.asarray(dout, dtype=np.float64)
    dw = s.T @ dout
    db = dout.sum(axis=0)
    ds = dout @ w.T
    dh = multiply(prop, ds)  # prop is symmetric, so prop^T = prop
    return dh, {"weights": dw, "bias": db}


# ------------------------------------------------------------------------ fc

def fully_connected_forward(x, p: LayerParams):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != p.weights.shape[0]:
        raise ShapeError(
            f"input {x.shape} does not match weights {p.weights.shape}"
        )
    out = x @ p.weights + p.bias
    return out, TapeEntry("fc", "train", (x, p.weights))


def fully_connected_backward(dout, tape: TapeEntry):
    _check_tape(tape, "fc")
    x, w = tape.cache
    dout = np.asarray(dout, dtype=np.float64)
    return dout @ w.T, {"weights": x.T @ dout, "bias": dout.sum(axis=0)}


# ---------------------------------------------------------------------- relu

def relu_forward(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.maximum(x, 0.0)
    return out, TapeEntry("relu", "train", (x > 0.0,))


def relu_backward(dout, tape: TapeEntry):
    _check_tape(tape, "relu")
    (mask,) = tape.cache
    return np.asarray(dout) * mask


# -------------------------------------------------------------------- conv2d

def _im2col(xp, kh, kw, h, w):
    cols = np.empty(xp.shape[:1] + (h, w, kh * kw * xp.shape[3]))
    c = xp.shape[3]
    for i in range(kh):
        for j in range(kw):
            cols[..., (i * kw + j) * c:(i * kw + j + 1) * c] = \
                xp[:, i:i + h, j:j + w, :]
    return cols


def conv2d_forward(x, p: LayerParams):
    """Same-padded stride-1 cross-correlation; kernel must be odd-sized."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4:
        raise ShapeError(f"conv input must be 4-D (B,H,W,C), got {x.shape}")
    kh, kw, c_in, c_out = p.weights.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise ContractError(f"kernel dims must be odd, got {kh}x{kw}")
    if x.shape[3] != c_in:
        raise ShapeError(
            f"input channels {x.shape[3]} do not match kernel {p.weights.shape}"
        )
    b, h, w, _ = x.shape
    ph, pw = kh // 2, kw // 2
    xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw), (0, 0)))
    cols = _im2col(xp, kh, kw, h, w)
    wmat = p.weights.reshape(kh * kw * c_in, c_out)
    out = cols.reshape(-1, kh * kw * c_in) @ wmat + p.bias
    out = out.reshape(b, h, w, c_out)
    tape = TapeEntry("conv2d", "train", (cols, p.weights.shape, wmat, x.shape))
    return out, tape


def conv2d_backward(dout, tape: TapeEntry):
    _check_tape(tape, "conv2d")
    cols, wshape, wmat, xshape = tape.cache
    kh, kw, c_in, c_out = wshape
    b, h, w, _ = xshape
    dout = np.asarray(dout, dtype=np.float64)
    dflat = dout.reshape(-1, c_out)
    dw = (cols.reshape(-1, kh * kw * c_in).T @ dflat).reshape(wshape)
    db = dflat.sum(axis=0)
    dcols = (dflat @ wmat.T).reshape(b, h, w, kh * kw * c_in)
    ph, pw = kh // 2, kw // 2
    dxp = np.zeros((b, h + 2 * ph, w + 2 * pw, c_in))
    for i in range(kh):
        for j in range(kw):
            dxp[:, i:i + h, j:j + w, :] += \
                dcols[..., (i * kw + j) * c_in:(i * kw + j + 1) * c_in]
    dx = dxp[:, ph:ph + h, pw:pw + w, :]
    return dx, {"weights": dw, "bias": db}


# ------------------------------------------------------------------- maxpool

def maxpool2x2_forward(x):
    """2x2/stride-2 max pooling with ceil-mode output (7 -> 4 -> 2 -> 1).

    Odd trailing rows/columns pool over the surviving elements; ties route
    the gradient to the first window element in row-major order.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4:
        raise ShapeError(f"pool input must be 4-D (B,H,W,C), got {x.shape}")
    b, h, w, c = x.shape
    h2, w2 = -(-h // 2), -(-w // 2)
    xp = np.full((b, h2 * 2, w2 * 2, c), -np.inf)
    xp[:, :h, :w, :] = x
    win = xp.reshape(b, h2, 2, w2, 2, c).transpose(0, 1, 3, 2, 4, 5)
    win = win.reshape(b, h2, w2, 4, c)
    arg = win.argmax(axis=3)  # first maximal element wins ties
    out = np.take_along_axis(win, arg[:, :, :, None, :], axis=3)[:, :, :, 0, :]
    return out, TapeEntry("maxpool", "train", (arg, x.shape))


def maxpool2x2_backward(dout, tape: TapeEntry):
    _check_tape(tape, "maxpool")
    arg, xshape = tape.cache
    b, h, w, c = xshape
    h2, w2 = -(-h // 2), -(-w // 2)
    dout = np.asarray(dout, dtype=np.float64)
    dwin = np.zeros((b, h2, w2, 4, c))
    np.put_along_axis(dwin, arg[:, :, :, None, :], dout[:, :, :, None, :],
                      axis=3)
    dxp = dwin.reshape(b, h2, w2, 2, 2, c).transpose(0, 1, 3, 2, 4, 5)
    dxp = dxp.reshape(b, h2 * 2, w2 * 2, c)
    return dxp[:, :h, :w, :]


# ---------------------------------------------------------------- batch norm

def _bn_axes(x):
    if x.ndim == 2:
        return (0,)
    if x.ndim == 4:
        return (0, 1, 2)
    raise ShapeError(f"batch norm expects 2-D or 4-D input, got {x.shape}")


def batch_norm_forward(x, p: LayerParams, mode="train", momentum=0.9):
    """Normalize per feature/channel; train mode updates running stats.

    Running stats move as r <- momentum * r + (1 - momentum) * batch_stat
    using the biased batch variance. Eval mode is side-effect free.
    """
    x = np.asarray(x, dtype=np.float64)
    axes = _bn_axes(x)
    width = x.shape[-1]
    if p.bn_gamma.shape != (width,):
        raise ShapeError(
            f"batch norm width {p.bn_gamma.shape} does not match input "
            f"shape {x.shape}"
        )
    if mode == "eval":
        inv = 1.0 / np.sqrt(p.bn_running_var + BN_EPS)
        out = p.bn_gamma * (x - p.bn_running_mean) * inv + p.bn_beta
        return out, TapeEntry("batch_norm", "eval")
    if mode != "train":
        raise ContractError(f"mode must be 'train' or 'eval', got {mode!r}")
    if x.shape[0] < 2:
        raise ContractError("batch norm training requires batch size >= 2")
    mean = x.mean(axis=axes)
    var = x.var(axis=axes)
    inv = 1.0 / np.sqrt(var + BN_EPS)
    xhat = (x - mean) * inv
    out = p.bn_gamma * xhat + p.bn_beta
    p.bn_running_mean = momentum * p.bn_running_mean + (1.0 - momentum) * mean
    p.bn_running_var = momentum * p.bn_running_var + (1.0 - momentum) * var
    m = x.size // width
    tape = TapeEntry("batch_norm", "train", (xhat, inv, p.bn_gamma, axes, m))
    return out, tape


def batch_norm_backward(dout, tape: TapeEntry):
    _check_tape(tape, "batch_norm")
    xhat, inv, gamma, axes, m = tape.cache
    dout = np.asarray(dout, dtype=np.float64)
    dgamma = (dout * xhat).sum(axis=axes)
    dbeta = dout.sum(axis=axes)
    dxhat = dout * gamma
    dx = inv / m * (
        m * dxhat
        - dxhat.sum(axis=axes, keepdims=True)
        - xhat * (dxhat * xhat).sum(axis=axes, keepdims=True)
    )
    return dx, {"bn_gamma": dgamma, "bn_beta": dbeta}


# ------------------------------------------------------- softmax with CE loss

def softmax_cross_entropy(logits, labels):
    """Mean negative log-likelihood over the batch, with its own backward.

    labels must be one-hot rows; returns (loss, probs, tape).
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if logits.shape != labels.shape or logits.ndim != 2:
        raise ShapeError(
            f"logits {logits.shape} and labels {labels.shape} must be "
            "matching 2-D arrays"
        )
    if not (np.all((labels == 0.0) | (labels == 1.0))
            and np.all(labels.sum(axis=1) == 1.0)):
        raise ContractError("labels must be one-hot rows")
    shifted = logits - logits.max(axis=1, keepdims=True)
    expd = np.exp(shifted)
    probs = expd / expd.sum(axis=1, keepdims=True)
    b = logits.shape[0]
    loss = float(-np.sum(labels * (shifted - np.log(expd.sum(axis=1,
                                                             keepdims=True)))) / b)
    tape = TapeEntry("softmax_ce", "train", (probs, labels, b))
    return loss, probs, tape


def softmax_cross_entropy_backward(tape: TapeEntry):
    _check_tape(tape, "softmax_ce")
    probs, labels, b = tape.cache
    return (probs - labels) / b


def _check_tape(tape: TapeEntry, kind: str):
    if tape is None or tape.kind != kind:
        got = None if tape is None else tape.kind
        raise ContractError(f"backward for {kind} got tape of kind {got!r}")
    if tape.mode != "train":
        raise ContractError(f"backward requires a train-mode tape for {kind}")


# ------------------------------------------------------- parameter checkpoint

CHECKPOINT_MAGIC = b"MGKP1"


def save_params(fh, layers) -> None:
    """Serialize layers to the binary checkpoint format.

    Layout: magic, u32 layer count; per layer a u8-length-prefixed ascii
    kind tag, then each field array as u8 ndim, u32 dims, raw float64
    little-endian payload. Round-trips are bit exact.
    """
    fh.write(CHECKPOINT_MAGIC)
    fh.write(struct.pack("<I", len(layers)))
    for p in layers:
        tag = p.kind.encode("ascii")
        fh.write(struct.pack("<B", len(tag)))
        fh.write(tag)
        for name in _ARRAY_FIELDS[p.kind]:
            arr = np.ascontiguousarray(getattr(p, name), dtype="<f8")
            fh.write(struct.pack("<B", arr.ndim))
            for d in arr.shape:
                fh.write(struct.pack("<I", d))
            fh.write(arr.tobytes())


def load_params(fh) -> list[LayerParams]:
    data = fh.read()
    if data[:5] != CHECKPOINT_MAGIC:
        raise FormatError(
            f"bad checkpoint magic {data[:5]!r}, expected {CHECKPOINT_MAGIC!r}",
            offset=0,
        )
    pos = 5

    def take(n, what):
        nonlocal pos
        if pos + n > len(data):
            raise FormatError(f"truncated checkpoint while reading {what}",
                              offset=pos)
        out = data[pos:pos + n]
        pos += n
        return out

    (count,) = struct.unpack("<I", take(4, "layer count"))
    layers = []
    for i in range(count):
        (taglen,) = struct.unpack("<B", take(1, f"layer {i} kind length"))
        kind = take(taglen, f"layer {i} kind").decode("ascii")
        if kind not in _ARRAY_FIELDS:
            raise FormatError(f"unknown layer kind {kind!r} in checkpoint",
                              offset=pos - taglen)
        kw = {}
        for name in _ARRAY_FIELDS[kind]:
            (ndim,) = struct.unpack("<B", take(1, f"{kind}.{name} ndim"))
            shape = tuple(
                struct.unpack("<I", take(4, f"{kind}.{name} dim"))[0]
                for _ in range(ndim)
            )
            n_items = int(np.prod(shape, dtype=np.int64)) if shape else 1
            raw = take(8 * n_items, f"{kind}.{name} payload")
            kw[name] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
        layers.append(LayerParams(kind=kind, **kw))
    if pos != len(data):
        raise FormatError("trailing bytes after checkpoint payload", offset=pos)
    return layers
