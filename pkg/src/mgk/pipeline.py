"""Dataset assembly, the training loop, and batched inference.

This is the glue between the file formats and the math modules. The
training graph is built on training pixels only, so inference is inductive:
each inference chunk builds its own small KNN graph among the chunk's
pixels using the training (k, sigma). Everything downstream of a seed is
deterministic, including the training log and checkpoint bytes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import (LabelGrid, SpectralCube, SplitSpec, extract_patches,
                   load_cube, load_labels, load_split, normalize_bands)
from .errors import ConfigError, ContractError, NumericError
from .graph import Graph, build_knn_rbf_graph
from .linalg import SparseSymMatrix
from .metrics import ConfusionMatrix, accumulate, overall_accuracy
from .model import Model, ModelConfig, build, loss_and_grads, predict
from .optim import AdamState, LrPolicy, adam_step, schedule_lr
from .sampler import SubgraphBatch, induce_subgraph, partition_epoch


@dataclass
class Dataset:
    """Normalized cube plus labels and the train/test split."""

    cube: SpectralCube
    grid: LabelGrid
    split: SplitSpec

    def __post_init__(self):
        if (self.grid.height, self.grid.width) != (self.cube.height,
                                                   self.cube.width):
            raise ConfigError(
                f"labels {self.grid.height}x{self.grid.width} do not match "
                f"cube {self.cube.height}x{self.cube.width}"
            )
        self.split.validate_against(self.grid)

    @property
    def num_classes(self) -> int:
        return max(max(self.split.train), max(self.split.test))

    def part_pixels(self, part: str):
        """(pixel_ids, zero_based_classes) for 'train' or 'test', sorted by
        pixel index so ordering never depends on dict iteration."""
        section = getattr(self.split, part)
        if not section:
            raise ContractError(f"the {part} split has no pixels")
        ids = np.concatenate([v for _, v in sorted(section.items())])
        classes = np.concatenate([
            np.full(v.size, c - 1, dtype=np.int64)
            for c, v in sorted(section.items())
        ])
        order = np.argsort(ids, kind="stable")
        return ids[order], classes[order]


def load_dataset(cube_path, labels_path, split_path) -> Dataset:
    cube = normalize_bands(load_cube(cube_path))
    grid = load_labels(labels_path)
    split = load_split(split_path)
    return Dataset(cube=cube, grid=grid, split=split)


def dataset_from_parts(cube, grid, split) -> Dataset:
    return Dataset(cube=normalize_bands(cube), grid=grid, split=split)


def _one_hot(classes: np.ndarray, width: int) -> np.ndarray:
    out = np.zeros((classes.size, width))
    out[np.arange(classes.size), classes] = 1.0
    return out


def _singleton_prop() -> SparseSymMatrix:
    return SparseSymMatrix(1, [0], [0], [1.0])


def chunk_prop(features: np.ndarray, k: int, sigma: float) -> SparseSymMatrix:
    """Within-chunk propagation operator for inference.

    k is clamped to chunk_size - 1 for undersized trailing chunks; a
    singleton chunk propagates through its self-loop alone.
    """
    n = features.shape[0]
    if n == 1:
        return _singleton_prop()
    return build_knn_rbf_graph(features, min(k, n - 1), sigma).prop


@dataclass
class TrainResult:
    model: Model
    log_rows: list  # (epoch, lr, loss, train_oa)
    graph: Optional[Graph]


def train_model(ds: Dataset, model_cfg: ModelConfig, *, epochs: int,
                batch: int, base_lr: float, l2: float, bn_momentum: float,
                seed: int, graph_k: int, graph_sigma: float,
                lr_interval: int = 50) -> TrainResult:
    """Seeded end-to-end training on the dataset's train pixels.

    gcn trains full batch (one batch per epoch covering every train pixel);
    every other architecture partitions the train pixels into node-budget
    batches, re-drawn each epoch. Bitwise reproducible for a fixed seed.
    """
    x_all = ds.cube.pixels()
    train_ids, train_classes = ds.part_pixels("train")
    n_train = train_ids.size
    labels_hot = _one_hot(train_classes, model_cfg.classes)

    graph = None
    if model_cfg.uses_graph:
        graph = build_knn_rbf_graph(x_all[train_ids], graph_k, graph_sigma)
    patches_train = None
    if model_cfg.uses_patches:
        patches_train = extract_patches(ds.cube, train_ids,
                                        model_cfg.patch_size)

    seeds = np.random.SeedSequence(seed).spawn(epochs + 1)
    mdl = build(model_cfg, seed=seeds[0])
    state = AdamState()
    budget = n_train if model_cfg.architecture == "gcn" \
        else min(batch, n_train)
    policy = LrPolicy(base_lr=base_lr, max_iter=max(epochs, 1),
                      interval=lr_interval) if epochs > 0 else None

    log_rows = []
    for epoch in range(epochs):
        lr = schedule_lr(policy, epoch)
        part = partition_epoch(n_train, budget, seeds[1 + epoch])
        epoch_loss = 0.0
        preds = np.empty(n_train, dtype=np.int64)
        for ids in part.batches:
            if graph is not None:
                sub = induce_subgraph(graph, ids,
                                      features=x_all[train_ids[ids]],
                                      labels=labels_hot[ids])
            else:
                sub = SubgraphBatch(node_ids=ids,
                                    prop_s=_singleton_prop(),
                                    features=None,
                                    labels=labels_hot[ids])
            p = patches_train[ids] if patches_train is not None else None
            try:
                loss, grads, logits = loss_and_grads(
                    mdl, sub, patches=p, l2=l2, bn_momentum=bn_momentum
                )
            except NumericError as exc:
                raise NumericError(f"epoch {epoch}: {exc}") from exc
            adam_step(mdl.named_params(), grads, state, lr)
            epoch_loss += loss * ids.size
            preds[ids] = np.argmax(logits, axis=1)
        cm = accumulate(train_classes, preds, model_cfg.classes)
        log_rows.append((epoch, lr, epoch_loss / n_train,
                         overall_accuracy(cm)))
    return TrainResult(model=mdl, log_rows=log_rows, graph=graph)


def infer_model_config(ds: Dataset, architecture: str, *, gcn_hidden=128,
                       cnn_channels=(32, 64, 128), fusion_fc=128,
                       patch_size=7, input_bands=0, classes=0) -> ModelConfig:
    """Fill input_bands/classes from the dataset when left at 0."""
    return ModelConfig(
        architecture=architecture,
        input_bands=input_bands or ds.cube.bands,
        classes=classes or ds.num_classes,
        gcn_hidden=gcn_hidden,
        cnn_channels=tuple(cnn_channels),
        fusion_fc=fusion_fc,
        patch_size=patch_size,
    )


def predict_pixels(mdl: Model, ds: Dataset, pixel_ids, *, batch: int,
                   graph_k: int, graph_sigma: float) -> np.ndarray:
    """Zero-based predicted classes for arbitrary pixels, chunked.

    Chunks follow the given pixel order; graph architectures get a fresh
    within-chunk KNN graph per chunk (training k and sigma).
    """
    pixel_ids = np.asarray(pixel_ids, dtype=np.int64)
    x_all = ds.cube.pixels()
    cfg = mdl.cfg
    out = np.empty(pixel_ids.size, dtype=np.int64)
    for start in range(0, pixel_ids.size, batch):
        ids = pixel_ids[start:start + batch]
        feats = x_all[ids]
        if cfg.uses_graph:
            prop = chunk_prop(feats, graph_k, graph_sigma)
            sub = SubgraphBatch(node_ids=np.arange(ids.size), prop_s=prop,
                                features=feats)
        else:
            sub = SubgraphBatch(node_ids=np.arange(ids.size),
                                prop_s=_singleton_prop(), features=None)
        p = extract_patches(ds.cube, ids, cfg.patch_size) \
            if cfg.uses_patches else None
        out[start:start + batch] = predict(mdl, sub, patches=p)
    return out


def evaluate_part(mdl: Model, ds: Dataset, part: str, *, batch: int,
                  graph_k: int, graph_sigma: float) -> ConfusionMatrix:
    ids, classes = ds.part_pixels(part)
    preds = predict_pixels(mdl, ds, ids, batch=batch, graph_k=graph_k,
                           graph_sigma=graph_sigma)
    return accumulate(classes, preds, mdl.cfg.classes)


def format_log_rows(rows) -> str:
    """Training log as CSV text; stable formatting so runs diff cleanly."""
    lines = ["epoch,lr,loss,train_oa"]
    for epoch, lr, loss, oa in rows:
        lines.append(f"{epoch},{lr!r},{loss!r},{oa!r}")
    return "\n".join(lines) + "\n"
