"""Hyperspectral cubes, label grids, train/test splits, and synthetic scenes.

File formats (all little-endian, bit-exact round-trips):

* cube:   magic ``HSC1`` + one-line JSON header
          {height, width, bands, dtype: "f32le", order: "band-sequential"}
          + newline + raw float32 payload, band after band, rows major.
* labels: magic ``HSL1`` + one-line JSON header {height, width} + newline
          + raw uint16 payload, row-major. Class 0 means unlabeled.
* split:  plain JSON {"train": {"<class>": [pixel indices]}, "test": ...}
          with linear row-major pixel indices (index = row * width + col).

Cubes store float32; everything handed to the learning path is converted
to float64 on the way out.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError, FormatError

CUBE_MAGIC = b"HSC1"
LABEL_MAGIC = b"HSL1"


@dataclass
class SpectralCube:
    """Image cube with shape (height, width, bands), float32."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32)
        if v.ndim != 3:
            raise ContractError(f"cube must be 3-D (H, W, D), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ContractError("cube values must be finite")
        self.values = v

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def bands(self) -> int:
        return self.values.shape[2]

    def pixels(self) -> np.ndarray:
        """All spectra as a float64 (height*width, bands) matrix."""
        return self.values.reshape(-1, self.bands).astype(np.float64)


@dataclass
class LabelGrid:
    """Per-pixel class ids (uint16); 0 marks unlabeled pixels."""

    labels: np.ndarray

    def __post_init__(self):
        lab = np.asarray(self.labels)
        if lab.ndim != 2:
            raise ContractError(f"labels must be 2-D, got {lab.shape}")
        if lab.size and (lab.min() < 0 or lab.max() > np.iinfo(np.uint16).max):
            raise ContractError("label ids must fit in uint16")
        self.labels = lab.astype(np.uint16)

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    def class_ids(self) -> np.ndarray:
        ids = np.unique(self.labels)
        return ids[ids > 0]


@dataclass
class SplitSpec:
    """Disjoint train/test pixel indices per class id."""

    train: dict
    test: dict

    def __post_init__(self):
        self.train = {int(c): np.asarray(v, dtype=np.int64)
                      for c, v in self.train.items()}
        self.test = {int(c): np.asarray(v, dtype=np.int64)
                     for c, v in self.test.items()}
        seen = {}
        for part_name, part in (("train", self.train), ("test", self.test)):
            for c, idx in part.items():
                if c < 1:
                    raise ContractError(f"split class ids must be >= 1, got {c}")
                uniq = np.unique(idx)
                if uniq.size != idx.size:
                    dup = idx[np.argmax(np.bincount(idx - idx.min()) > 1)]
                    raise ContractError(
                        f"pixel index {int(dup)} repeated inside {part_name} "
                        f"class {c}"
                    )
                for i in idx:
                    i = int(i)
                    if i in seen:
                        raise ContractError(
                            f"pixel index {i} appears in both "
                            f"{seen[i]} and {part_name}/{c}"
                        )
                    seen[i] = f"{part_name}/{c}"

    def counts(self) -> dict:
        return {
            "train": {c: int(v.size) for c, v in sorted(self.train.items())},
            "test": {c: int(v.size) for c, v in sorted(self.test.items())},
        }

    def validate_against(self, grid: LabelGrid) -> None:
        """Every index must carry its owning class in the label grid."""
        flat = grid.labels.ravel()
        for part_name, part in (("train", self.train), ("test", self.test)):
            for c, idx in part.items():
                if idx.size and (idx.min() < 0 or idx.max() >= flat.size):
                    raise ContractError(
                        f"{part_name} class {c} has pixel index out of range"
                    )
                wrong = np.nonzero(flat[idx] != c)[0]
                if wrong.size:
                    i = int(idx[wrong[0]])
                    raise ContractError(
                        f"pixel {i} listed under class {c} but labeled "
                        f"{int(flat[i])}"
                    )


# ----------------------------------------------------------------- file I/O

def _read_header(data: bytes, magic: bytes, what: str):
    if data[:len(magic)] != magic:
        raise FormatError(
            f"bad {what} magic {data[:len(magic)]!r}, expected {magic!r}",
            offset=0,
        )
    nl = data.find(b"\n", len(magic))
    if nl < 0:
        raise FormatError(f"{what} header has no terminating newline",
                          offset=len(data))
    try:
        header = json.loads(data[len(magic):nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"unparseable {what} header: {exc}",
                          offset=len(magic)) from exc
    return header, nl + 1


def save_cube(path, cube: SpectralCube) -> None:
    header = {
        "height": cube.height,
        "width": cube.width,
        "bands": cube.bands,
        "dtype": "f32le",
        "order": "band-sequential",
    }
    payload = np.ascontiguousarray(
        cube.values.transpose(2, 0, 1), dtype="<f4"
    ).tobytes()
    with open(path, "wb") as fh:
        fh.write(CUBE_MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        fh.write(payload)


def load_cube(path) -> SpectralCube:
    with open(path, "rb") as fh:
        data = fh.read()
    header, start = _read_header(data, CUBE_MAGIC, "cube")
    for key in ("height", "width", "bands", "dtype", "order"):
        if key not in header:
            raise FormatError(f"cube header is missing {key!r}", offset=4)
    if header["dtype"] != "f32le" or header["order"] != "band-sequential":
        raise FormatError(
            f"unsupported cube encoding {header['dtype']}/{header['order']}",
            offset=4,
        )
    h, w, d = (int(header[k]) for k in ("height", "width", "bands"))
    if min(h, w, d) < 1:
        raise FormatError(f"cube dims must be positive, got {h}x{w}x{d}",
                          offset=4)
    expected = h * w * d * 4
    if len(data) - start != expected:
        raise FormatError(
            f"cube payload is {len(data) - start} bytes, expected {expected}",
            offset=start + min(len(data) - start, expected),
        )
    vals = np.frombuffer(data, dtype="<f4", offset=start).reshape(d, h, w)
    return SpectralCube(values=vals.transpose(1, 2, 0).copy())


def save_labels(path, grid: LabelGrid) -> None:
    header = {"height": grid.height, "width": grid.width}
    with open(path, "wb") as fh:
        fh.write(LABEL_MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        fh.write(np.ascontiguousarray(grid.labels, dtype="<u2").tobytes())


def load_labels(path) -> LabelGrid:
    with open(path, "rb") as fh:
        data = fh.read()
    header, start = _read_header(data, LABEL_MAGIC, "labels")
    for key in ("height", "width"):
        if key not in header:
            raise FormatError(f"label header is missing {key!r}", offset=4)
    h, w = int(header["height"]), int(header["width"])
    if min(h, w) < 1:
        raise FormatError(f"label dims must be positive, got {h}x{w}", offset=4)
    expected = h * w * 2
    if len(data) - start != expected:
        raise FormatError(
            f"label payload is {len(data) - start} bytes, expected {expected}",
            offset=start + min(len(data) - start, expected),
        )
    lab = np.frombuffer(data, dtype="<u2", offset=start).reshape(h, w)
    return LabelGrid(labels=lab.copy())


def save_split(path, split: SplitSpec) -> None:
    doc = {
        part: {str(c): [int(i) for i in idx]
               for c, idx in sorted(getattr(split, part).items())}
        for part in ("train", "test")
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_split(path) -> SplitSpec:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"split file is not valid JSON: {exc}",
                              offset=exc.pos) from exc
    if not isinstance(doc, dict) or set(doc) != {"train", "test"}:
        raise FormatError("split JSON must have exactly 'train' and 'test' "
                          "sections")
    try:
        return SplitSpec(train=doc["train"], test=doc["test"])
    except (TypeError, ValueError) as exc:
        raise FormatError(f"malformed split sections: {exc}") from exc


# ------------------------------------------------------------ normalization

def normalize_bands(cube: SpectralCube) -> SpectralCube:
    """Min-max scale each band to [0, 1]; constant bands go to 0.

    Idempotent: applying it twice returns the same bytes.
    """
    v = cube.values.astype(np.float64)
    lo = v.min(axis=(0, 1))
    hi = v.max(axis=(0, 1))
    span = hi - lo
    out = np.zeros_like(v)
    live = span > 0.0
    out[:, :, live] = (v[:, :, live] - lo[live]) / span[live]
    return SpectralCube(values=out.astype(np.float32))


# ----------------------------------------------------------------- patching

def extract_patch(cube: SpectralCube, row: int, col: int, size: int = 7
                  ) -> np.ndarray:
    """(size, size, bands) float64 patch centered at (row, col).

    Coordinates outside the image replicate the nearest edge pixel. size
    must be odd.
    """
    if size < 1 or size % 2 == 0:
        raise ContractError(f"patch size must be odd and >= 1, got {size}")
    if not (0 <= row < cube.height and 0 <= col < cube.width):
        raise ContractError(
            f"center ({row}, {col}) outside image "
            f"{cube.height}x{cube.width}"
        )
    half = size // 2
    rr = np.clip(np.arange(row - half, row + half + 1), 0, cube.height - 1)
    cc = np.clip(np.arange(col - half, col + half + 1), 0, cube.width - 1)
    return cube.values[np.ix_(rr, cc)].astype(np.float64)


def extract_patches(cube: SpectralCube, pixel_ids, size: int = 7
                    ) -> np.ndarray:
    """Stack of patches for linear pixel indices (row-major)."""
    pixel_ids = np.asarray(pixel_ids, dtype=np.int64)
    out = np.empty((pixel_ids.size, size, size, cube.bands))
    for i, pid in enumerate(pixel_ids):
        out[i] = extract_patch(cube, int(pid) // cube.width,
                               int(pid) % cube.width, size)
    return out


# ----------------------------------------------------------- synthetic data

def synth_scene(classes: int, size: int, bands: int, noise_sigma: float,
                seed, train_per_class: int = 50):
    """Deterministic labeled scene: striped regions of noisy prototypes.

    The image splits into ``classes`` vertical stripes; class c's prototype
    is 0.5 + 0.35 sin(2 pi (c+1) b / bands + phase_c) over band index b,
    plus iid gaussian noise. Distinct integer frequencies keep prototypes
    near-orthogonal, so scenes are nearest-prototype separable whenever
    noise_sigma <= ~0.035. Returns (cube, labels, split) with a balanced
    per-class train draw; everything is a pure function of the arguments.
    """
    if classes < 2:
        raise ConfigError(f"need at least 2 classes, got {classes}")
    if bands < 1 or size < 1:
        raise ConfigError(f"size and bands must be >= 1, got {size}, {bands}")
    if size < classes:
        raise ConfigError(
            f"image of width {size} cannot hold {classes} stripe regions"
        )
    if noise_sigma < 0:
        raise ConfigError(f"noise_sigma must be >= 0, got {noise_sigma}")
    if train_per_class < 1:
        raise ConfigError("train_per_class must be >= 1")

    rng = np.random.default_rng(seed)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=classes)
    b = np.arange(bands)
    protos = np.stack([
        0.5 + 0.35 * np.sin(2.0 * np.pi * (c + 1) * b / bands + phases[c])
        for c in range(classes)
    ])

    stripes = np.array_split(np.arange(size), classes)
    labels = np.zeros((size, size), dtype=np.uint16)
    for c, cols in enumerate(stripes):
        labels[:, cols] = c + 1

    values = protos[labels - 1].astype(np.float64)
    values += rng.normal(0.0, noise_sigma, size=values.shape)
    cube = SpectralCube(values=values.astype(np.float32))
    grid = LabelGrid(labels=labels)

    train, test = {}, {}
    flat = labels.ravel()
    for c in range(1, classes + 1):
        members = np.nonzero(flat == c)[0]
        if members.size <= train_per_class:
            raise ConfigError(
                f"class {c} region has {members.size} pixels; cannot draw "
                f"{train_per_class} train pixels and keep a test set"
            )
        chosen = rng.choice(members, size=train_per_class, replace=False)
        chosen = np.sort(chosen)
        train[c] = chosen
        test[c] = np.setdiff1d(members, chosen)
    return cube, grid, SplitSpec(train=train, test=test)
