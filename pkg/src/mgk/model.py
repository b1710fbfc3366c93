"""Classifier architectures: spectral branch, spatial branch, fusion heads.

Six architectures share the same parts:

* ``gcn`` / ``minigcn``  -- BN, graph conv, BN, ReLU on vertex features,
  then the shared head. The two differ only in how they are trained
  (full batch vs sampled subgraph batches); the parameter layout is
  identical.
* ``cnn2d``              -- three blocks of (conv, BN, 2x2 max pool, ReLU)
  on image patches: 3x3 then 3x3 then 1x1 kernels, channels growing
  per config, then the shared head.
* ``funet-a/m/c``        -- both branches, merged additively,
  multiplicatively, or by concatenation (spatial features first), then
  the shared head.

The shared head is FC, BN, ReLU, then the final FC whose softmax feeds the
cross-entropy loss. Training is joint end to end: one loss, gradients into
both branches.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError, NumericError, ShapeError
from . import nn
from .sampler import SubgraphBatch

ARCHITECTURES = ("gcn", "minigcn", "cnn2d", "funet-a", "funet-m", "funet-c")
FUSION_KINDS = ("additive", "multiplicative", "concatenation")
_ARCH_FUSION = {"funet-a": "additive", "funet-m": "multiplicative",
                "funet-c": "concatenation"}


@dataclass
class ModelConfig:
    architecture: str
    input_bands: int
    classes: int
    gcn_hidden: int = 128
    cnn_channels: tuple = (32, 64, 128)
    fusion_fc: int = 128
    patch_size: int = 7

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ConfigError(
                f"unknown architecture {self.architecture!r}; expected one "
                f"of {ARCHITECTURES}"
            )
        self.cnn_channels = tuple(int(c) for c in self.cnn_channels)
        if len(self.cnn_channels) != 3:
            raise ConfigError("cnn_channels must list three block widths")
        for name in ("input_bands", "classes", "gcn_hidden", "fusion_fc",
                     "patch_size"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if min(self.cnn_channels) < 1:
            raise ConfigError("cnn_channels must be >= 1")
        if self.patch_size % 2 == 0:
            raise ConfigError(
                f"patch_size must be odd, got {self.patch_size}"
            )
        if self.classes < 2:
            raise ConfigError("need at least 2 classes")

    @property
    def fusion_kind(self):
        return _ARCH_FUSION.get(self.architecture)

    @property
    def uses_graph(self) -> bool:
        return self.architecture != "cnn2d"

    @property
    def uses_patches(self) -> bool:
        return self.architecture in ("cnn2d", "funet-a", "funet-m", "funet-c")

    def cnn_flat_width(self) -> int:
        s = self.patch_size
        for _ in range(3):
            s = -(-s // 2)
        return s * s * self.cnn_channels[2]

    def head_input_width(self) -> int:
        if self.architecture in ("gcn", "minigcn"):
            return self.gcn_hidden
        if self.architecture == "cnn2d":
            return self.cnn_flat_width()
        if self.architecture == "funet-c":
            return self.cnn_flat_width() + self.gcn_hidden
        return self.gcn_hidden

    def to_dict(self) -> dict:
        return {
            "architecture": self.architecture,
            "input_bands": self.input_bands,
            "classes": self.classes,
            "gcn_hidden": self.gcn_hidden,
            "cnn_channels": list(self.cnn_channels),
            "fusion_fc": self.fusion_fc,
            "patch_size": self.patch_size,
        }


class Model:
    """Config plus an ordered name -> LayerParams table."""

    def __init__(self, cfg: ModelConfig, layers: dict, order: list):
        self.cfg = cfg
        self.layers = layers
        self.order = list(order)

    def named_params(self):
        return [(name, self.layers[name]) for name in self.order]

    def num_params(self) -> int:
        total = 0
        for _, layer in self.named_params():
            for fieldname in nn.TRAINABLE_FIELDS[layer.kind]:
                total += getattr(layer, fieldname).size
        return total

    def copy(self) -> "Model":
        return Model(self.cfg,
                     {k: v.copy() for k, v in self.layers.items()},
                     self.order)


def build(cfg: ModelConfig, seed=0) -> Model:
    """Initialize a model; weights are Glorot-uniform draws from the seed."""
    if cfg.architecture in ("funet-a", "funet-m") \
            and cfg.cnn_flat_width() != cfg.gcn_hidden:
        raise ConfigError(
            f"{cfg.architecture} needs matching branch widths; spatial "
            f"branch emits {cfg.cnn_flat_width()}, spectral emits "
            f"{cfg.gcn_hidden}"
        )
    rng = np.random.default_rng(seed)
    layers = {}
    order = []

    def add(name, params):
        layers[name] = params
        order.append(name)

    if cfg.uses_patches:
        c1, c2, c3 = cfg.cnn_channels
        add("cnn.block1.conv", nn.make_conv2d(rng, 3, 3, cfg.input_bands, c1))
        add("cnn.block1.bn", nn.make_batch_norm(c1))
        add("cnn.block2.conv", nn.make_conv2d(rng, 3, 3, c1, c2))
        add("cnn.block2.bn", nn.make_batch_norm(c2))
        add("cnn.block3.conv", nn.make_conv2d(rng, 1, 1, c2, c3))
        add("cnn.block3.bn", nn.make_batch_norm(c3))
    if cfg.uses_graph:
        add("gcn.bn_in", nn.make_batch_norm(cfg.input_bands))
        add("gcn.conv", nn.make_graph_conv(rng, cfg.input_bands,
                                           cfg.gcn_hidden))
        add("gcn.bn_out", nn.make_batch_norm(cfg.gcn_hidden))
    add("head.fc1", nn.make_fc(rng, cfg.head_input_width(), cfg.fusion_fc))
    add("head.bn", nn.make_batch_norm(cfg.fusion_fc))
    add("head.fc2", nn.make_fc(rng, cfg.fusion_fc, cfg.classes))
    return Model(cfg, layers, order)


# -------------------------------------------------------------------- fusion

def fuse(h_cnn, h_gcn, kind: str) -> np.ndarray:
    """Merge branch features; concatenation puts spatial features first."""
    h_cnn = np.asarray(h_cnn, dtype=np.float64)
    h_gcn = np.asarray(h_gcn, dtype=np.float64)
    if h_cnn.ndim != 2 or h_gcn.ndim != 2 \
            or h_cnn.shape[0] != h_gcn.shape[0]:
        raise ShapeError(
            f"branch outputs {h_cnn.shape} and {h_gcn.shape} do not align"
        )
    if kind == "concatenation":
        return np.concatenate([h_cnn, h_gcn], axis=1)
    if h_cnn.shape != h_gcn.shape:
        raise ShapeError(
            f"{kind} fusion needs equal shapes, got {h_cnn.shape} and "
            f"{h_gcn.shape}"
        )
    if kind == "additive":
        return h_cnn + h_gcn
    if kind == "multiplicative":
        return h_cnn * h_gcn
    raise ContractError(f"unknown fusion kind {kind!r}")


def fuse_backward(dout, h_cnn, h_gcn, kind: str):
    dout = np.asarray(dout, dtype=np.float64)
    if kind == "concatenation":
        w = h_cnn.shape[1]
        return dout[:, :w].copy(), dout[:, w:].copy()
    if kind == "additive":
        return dout.copy(), dout.copy()
    if kind == "multiplicative":
        return dout * h_gcn, dout * h_cnn
    raise ContractError(f"unknown fusion kind {kind!r}")


# ------------------------------------------------------------------ branches

def gcn_branch_forward(model: Model, x, prop, mode="eval", bn_momentum=0.9):
    L = model.layers
    tapes = {}
    h, tapes["gcn.bn_in"] = nn.batch_norm_forward(x, L["gcn.bn_in"], mode,
                                                  bn_momentum)
    h, tapes["gcn.conv"] = nn.graph_conv_forward(h, prop, L["gcn.conv"])
    h, tapes["gcn.bn_out"] = nn.batch_norm_forward(h, L["gcn.bn_out"], mode,
                                                   bn_momentum)
    h, tapes["gcn.relu"] = nn.relu_forward(h)
    return h, tapes


def _gcn_branch_backward(dh, tapes, grads):
    dh = nn.relu_backward(dh, tapes["gcn.relu"])
    dh, grads["gcn.bn_out"] = nn.batch_norm_backward(dh, tapes["gcn.bn_out"])
    dh, grads["gcn.conv"] = nn.graph_conv_backward(dh, tapes["gcn.conv"])
    dh, grads["gcn.bn_in"] = nn.batch_norm_backward(dh, tapes["gcn.bn_in"])
    return dh


def cnn_branch_forward(model: Model, patches, mode="eval", bn_momentum=0.9):
    cfg = model.cfg
    patches = np.asarray(patches, dtype=np.float64)
    if patches.ndim != 4 or patches.shape[1] != cfg.patch_size \
            or patches.shape[2] != cfg.patch_size \
            or patches.shape[3] != cfg.input_bands:
        raise ShapeError(
            f"patches {patches.shape} do not match configured "
            f"{cfg.patch_size}x{cfg.patch_size}x{cfg.input_bands}"
        )
    L = model.layers
    tapes = {}
    h = patches
    for blk in ("cnn.block1", "cnn.block2", "cnn.block3"):
        h, tapes[f"{blk}.conv"] = nn.conv2d_forward(h, L[f"{blk}.conv"])
        h, tapes[f"{blk}.bn"] = nn.batch_norm_forward(h, L[f"{blk}.bn"],
                                                      mode, bn_momentum)
        h, tapes[f"{blk}.pool"] = nn.maxpool2x2_forward(h)
        h, tapes[f"{blk}.relu"] = nn.relu_forward(h)
    tapes["cnn.flatten_shape"] = h.shape
    return h.reshape(h.shape[0], -1), tapes


def _cnn_branch_backward(dflat, tapes, grads):
    dh = dflat.reshape(tapes["cnn.flatten_shape"])
    for blk in ("cnn.block3", "cnn.block2", "cnn.block1"):
        dh = nn.relu_backward(dh, tapes[f"{blk}.relu"])
        dh = nn.maxpool2x2_backward(dh, tapes[f"{blk}.pool"])
        dh, grads[f"{blk}.bn"] = nn.batch_norm_backward(dh, tapes[f"{blk}.bn"])
        dh, grads[f"{blk}.conv"] = nn.conv2d_backward(dh, tapes[f"{blk}.conv"])
    return dh


def head_forward(model: Model, h, mode="eval", bn_momentum=0.9):
    L = model.layers
    tapes = {}
    h, tapes["head.fc1"] = nn.fully_connected_forward(h, L["head.fc1"])
    h, tapes["head.bn"] = nn.batch_norm_forward(h, L["head.bn"], mode,
                                                bn_momentum)
    h, tapes["head.relu"] = nn.relu_forward(h)
    logits, tapes["head.fc2"] = nn.fully_connected_forward(h, L["head.fc2"])
    return logits, tapes


def _head_backward(dlogits, tapes, grads):
    dh, grads["head.fc2"] = nn.fully_connected_backward(dlogits,
                                                        tapes["head.fc2"])
    dh = nn.relu_backward(dh, tapes["head.relu"])
    dh, grads["head.bn"] = nn.batch_norm_backward(dh, tapes["head.bn"])
    dh, grads["head.fc1"] = nn.fully_connected_backward(dh, tapes["head.fc1"])
    return dh


# ------------------------------------------------------------ forward / loss

def _check_batch(model: Model, batch: SubgraphBatch, patches):
    cfg = model.cfg
    sizes = set()
    if cfg.uses_graph:
        if batch.features is None or batch.prop_s is None:
            raise ContractError(
                f"{cfg.architecture} needs vertex features and a batch "
                "propagation operator"
            )
        if batch.features.shape[1] != cfg.input_bands:
            raise ShapeError(
                f"features have {batch.features.shape[1]} bands, model "
                f"expects {cfg.input_bands}"
            )
        sizes.add(batch.features.shape[0])
    if cfg.uses_patches:
        if patches is None:
            raise ContractError(f"{cfg.architecture} needs image patches")
        sizes.add(np.asarray(patches).shape[0])
    if len(sizes) > 1:
        raise ContractError(
            f"patch rows and vertex rows disagree: {sorted(sizes)}"
        )


def forward(model: Model, batch: SubgraphBatch, patches=None, mode="eval",
            bn_momentum=0.9):
    """Logits for a batch; train mode returns the tapes for backward.

    Eval mode is side-effect free (running stats untouched) and returns
    (logits, None).
    """
    if mode not in ("train", "eval"):
        raise ContractError(f"mode must be 'train' or 'eval', got {mode!r}")
    _check_batch(model, batch, patches)
    cfg = model.cfg
    tapes = {}
    h_cnn = h_gcn = None
    if cfg.uses_patches:
        h_cnn, t = cnn_branch_forward(model, patches, mode, bn_momentum)
        tapes.update(t)
    if cfg.uses_graph:
        h_gcn, t = gcn_branch_forward(model, batch.features, batch.prop_s,
                                      mode, bn_momentum)
        tapes.update(t)
    if cfg.fusion_kind is not None:
        fused = fuse(h_cnn, h_gcn, cfg.fusion_kind)
        tapes["fusion"] = (h_cnn, h_gcn, cfg.fusion_kind)
    else:
        fused = h_cnn if h_gcn is None else h_gcn
    logits, t = head_forward(model, fused, mode, bn_momentum)
    tapes.update(t)
    return logits, (tapes if mode == "train" else None)


def loss_and_grads(model: Model, batch: SubgraphBatch, patches=None,
                   l2: float = 0.001, bn_momentum=0.9):
    """Cross-entropy + L2(weights) loss with gradients for every layer.

    The L2 term covers weight matrices/kernels only; biases and batch-norm
    parameters are exempt. Returns (loss, grads, logits) with grads keyed
    like named_params.
    """
    if batch.labels is None:
        raise ContractError("training batch has no labels")
    logits, tapes = forward(model, batch, patches, mode="train",
                            bn_momentum=bn_momentum)
    loss, _, ce_tape = nn.softmax_cross_entropy(logits, batch.labels)
    grads = {}
    dlogits = nn.softmax_cross_entropy_backward(ce_tape)
    dfused = _head_backward(dlogits, tapes, grads)
    cfg = model.cfg
    if cfg.fusion_kind is not None:
        h_cnn, h_gcn, kind = tapes["fusion"]
        d_cnn, d_gcn = fuse_backward(dfused, h_cnn, h_gcn, kind)
        _cnn_branch_backward(d_cnn, tapes, grads)
        _gcn_branch_backward(d_gcn, tapes, grads)
    elif cfg.uses_graph:
        _gcn_branch_backward(dfused, tapes, grads)
    else:
        _cnn_branch_backward(dfused, tapes, grads)
    if l2 < 0:
        raise ContractError(f"l2 must be >= 0, got {l2}")
    if l2 > 0:
        for name, layer in model.named_params():
            if layer.kind == "batch_norm":
                continue
            w = layer.weights
            loss += l2 * float(np.sum(w * w))
            grads[name]["weights"] = grads[name]["weights"] + 2.0 * l2 * w
    if not np.isfinite(loss):
        raise NumericError("loss is not finite")
    return loss, grads, logits


def predict(model: Model, batch: SubgraphBatch, patches=None) -> np.ndarray:
    """Zero-based argmax class indices under eval-mode forward."""
    logits, _ = forward(model, batch, patches, mode="eval")
    return np.argmax(logits, axis=1)


# ----------------------------------------------------------------- persistence

def save_model(path, model: Model) -> None:
    """Binary parameter checkpoint plus a JSON sidecar at path + '.json'."""
    with open(path, "wb") as fh:
        nn.save_params(fh, [model.layers[name] for name in model.order])
    sidecar = {"config": model.cfg.to_dict(), "layer_order": model.order}
    with open(str(path) + ".json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_model(path) -> Model:
    with open(str(path) + ".json", "r", encoding="utf-8") as fh:
        sidecar = json.load(fh)
    cfg = ModelConfig(**{**sidecar["config"],
                         "cnn_channels": tuple(sidecar["config"]
                                               ["cnn_channels"])})
    with open(path, "rb") as fh:
        params = nn.load_params(fh)
    order = sidecar["layer_order"]
    if len(params) != len(order):
        raise ContractError(
            f"checkpoint has {len(params)} layers, sidecar lists "
            f"{len(order)}"
        )
    rebuilt = build(cfg, seed=0)
    if rebuilt.order != order:
        raise ContractError("sidecar layer order does not match architecture")
    for name, loaded, fresh in zip(order, params,
                                   (rebuilt.layers[n] for n in order)):
        if loaded.kind != fresh.kind:
            raise ContractError(
                f"layer {name} has kind {loaded.kind!r}, expected "
                f"{fresh.kind!r}"
            )
        for fieldname in nn._ARRAY_FIELDS[loaded.kind]:
            got = getattr(loaded, fieldname).shape
            want = getattr(fresh, fieldname).shape
            if got != want:
                raise ContractError(
                    f"layer {name}.{fieldname} has shape {got}, expected "
                    f"{want}"
                )
        rebuilt.layers[name] = loaded
    return rebuilt
