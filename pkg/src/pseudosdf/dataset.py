"""Per-cell training examples: extraction, noise augmentation, persistence.

Inputs are corner-major: for each corner ``i`` in 0..7 the four entries
``(value_i / spacing, gx_i, gy_i, gz_i)``, 32 floats per cell.  Dividing the
distances by the cell size makes the features resolution invariant: the same
normalized value means "surface about this many cells away" at any grid
resolution.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .fields import FieldGrid, near_surface_cell_mask
from .signconfig import CONVENTION_TAG, NUM_CONFIGS, encode_batch

log = logging.getLogger(__name__)

NOISE_KINDS = ("none", "add", "add-exp", "scale", "scale-exp", "gradswap", "scale+gradswap")


@dataclass
class GridCellSample:
    """One cell's 32 normalized inputs plus its placement metadata."""

    inputs: np.ndarray
    cell_origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    spacing: float = 1.0

    def __post_init__(self) -> None:
        self.inputs = np.asarray(self.inputs, dtype=np.float32).reshape(32)


@dataclass
class TrainingExample:
    sample: GridCellSample
    label: int

    def __post_init__(self) -> None:
        if not 0 <= int(self.label) < NUM_CONFIGS:
            raise ValueError(f"label must be in 0..127, got {self.label}")


@dataclass(frozen=True)
class NoiseSpec:
    """Input augmentation choice: which formula, its sigma, and the seed of
    the per-example noise substreams."""

    kind: str = "scale"
    sigma: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}; options: {NOISE_KINDS}")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")


class CellDataset:
    """Array-backed collection of (inputs, label) examples.

    ``cell_indices`` and ``spacing`` are optional provenance and are not
    persisted.
    """

    def __init__(self, inputs, labels, cell_indices=None, spacing: Optional[float] = None):
        self.inputs = np.ascontiguousarray(inputs, dtype=np.float32).reshape(-1, 32)
        self.labels = np.ascontiguousarray(labels, dtype=np.uint8).reshape(-1)
        if len(self.inputs) != len(self.labels):
            raise ValueError("inputs and labels disagree on example count")
        self.cell_indices = None if cell_indices is None else np.asarray(cell_indices)
        self.spacing = spacing

    def __len__(self) -> int:
        return len(self.labels)

    def example(self, i: int) -> TrainingExample:
        sample = GridCellSample(self.inputs[i], spacing=self.spacing or 1.0)
        return TrainingExample(sample, int(self.labels[i]))

    @staticmethod
    def concatenate(parts: list["CellDataset"]) -> "CellDataset":
        if not parts:
            return CellDataset(np.empty((0, 32), np.float32), np.empty(0, np.uint8))
        return CellDataset(
            np.concatenate([p.inputs for p in parts]),
            np.concatenate([p.labels for p in parts]),
        )

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=NUM_CONFIGS)


def extract_cells(grid: FieldGrid, keep_all: bool = False) -> CellDataset:
    """Turn a sign-bearing grid into per-cell training examples.

    Keeps cells whose minimum corner distance is within one cell diagonal
    (every surface-crossing cell qualifies), or every cell with ``keep_all``.
    Labels are the anchor-normalized corner-sign configurations.
    """
    if not grid.has_signs:
        raise ValueError("extract_cells needs a grid with ground-truth signs")
    spacing = grid.spec.spacing
    mask = near_surface_cell_mask(grid)
    if keep_all:
        mask = np.ones_like(mask)

    u = grid.cell_corner_values()[:, mask]          # (8, N)
    g = grid.cell_corner_gradients()[:, mask]        # (8, N, 3)
    s = grid.cell_corner_signs()[:, mask]            # (8, N)

    n = u.shape[1]
    feat = np.empty((n, 8, 4), dtype=np.float32)
    feat[:, :, 0] = (u / spacing).T
    feat[:, :, 1:] = g.transpose(1, 0, 2)
    labels = encode_batch(s.T.astype(np.int64)).astype(np.uint8)

    cells = np.stack(np.nonzero(mask), axis=1).astype(np.int32)
    ds = CellDataset(feat.reshape(n, 32), labels, cell_indices=cells, spacing=spacing)
    if n:
        frac0 = float((labels == 0).mean())
        log.info("extract_cells: %d cells, class-0 fraction %.3f", n, frac0)
    return ds


# ---------------------------------------------------------------------------
# counter-based noise substreams
#
# Augmentation noise is addressed by (seed, epoch, example index, slot) so a
# fresh draw happens every epoch yet the value for a given example does not
# depend on shuffling, batching or scheduling.

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def _mix64(x) -> np.ndarray:
    # 0-d inputs go through the array path so wraparound stays silent
    z = np.asarray(x, dtype=np.uint64) + _GOLDEN
    z ^= z >> np.uint64(30)
    z *= _MIX1
    z ^= z >> np.uint64(27)
    z *= _MIX2
    z ^= z >> np.uint64(31)
    return z


def _stream_key(seed: int, epoch: int, stream: int) -> np.ndarray:
    k = _mix64(np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF))
    k = _mix64(k ^ np.uint64(epoch))
    return _mix64(k ^ (np.asarray(stream, dtype=np.uint64) * _GOLDEN))


def _lane_normals(key: np.uint64, lanes: np.ndarray) -> np.ndarray:
    """One standard normal per uint64 lane id (Box-Muller, fixed consumption)."""
    two = np.uint64(2)
    h1 = _mix64(key + lanes * two)
    h2 = _mix64(key + lanes * two + np.uint64(1))
    u1 = ((h1 >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0**-53  # (0, 1]
    u2 = (h2 >> np.uint64(11)).astype(np.float64) * 2.0**-53          # [0, 1)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def _lane_uniforms(key: np.uint64, lanes: np.ndarray) -> np.ndarray:
    return (_mix64(key + lanes) >> np.uint64(11)).astype(np.float64) * 2.0**-53


def _value_clamp(inputs: np.ndarray) -> np.ndarray:
    inputs[:, 0::4] = np.maximum(inputs[:, 0::4], 0.0)
    return inputs


def augment_batch(
    inputs: np.ndarray,
    spec: NoiseSpec,
    epoch: int = 0,
    indices: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Apply the selected noise to a batch of 32-wide inputs.

    ``indices`` are the examples' global dataset indices; they pin each
    example to its own noise substream.  Labels never change under any kind.
    """
    inputs = np.asarray(inputs, dtype=np.float32).reshape(-1, 32)
    n = len(inputs)
    if indices is None:
        indices = np.arange(n)
    indices = np.asarray(indices, dtype=np.uint64).reshape(n)
    if spec.kind == "none" or spec.sigma == 0.0 or n == 0:
        return inputs.copy()

    out = inputs.astype(np.float64)
    sigma = float(spec.sigma)

    def entry_normals(stream: int) -> np.ndarray:
        key = _stream_key(spec.seed, epoch, stream)
        lanes = indices[:, None] * np.uint64(32) + np.arange(32, dtype=np.uint64)
        return _lane_normals(key, lanes)

    kind = spec.kind
    if kind in ("scale", "scale+gradswap"):
        out = out * (1.0 + sigma * entry_normals(0))
        out = _value_clamp(out)
    elif kind == "add":
        out = out + sigma * entry_normals(0)
        out = _value_clamp(out)
    elif kind == "add-exp":
        envelope = np.exp(-((out / sigma) ** 2))
        out = out + sigma * entry_normals(0) * envelope
        out = _value_clamp(out)
    elif kind == "scale-exp":
        envelope = np.exp(-((out / sigma) ** 2))
        out = out * (1.0 + sigma * entry_normals(0) * envelope)
        out = _value_clamp(out)

    if kind in ("gradswap", "scale+gradswap"):
        key = _stream_key(spec.seed, epoch, 1)
        lanes = indices[:, None] * np.uint64(8) + np.arange(8, dtype=np.uint64)
        draw = _lane_uniforms(key, lanes)                     # (n, 8)
        u = out[:, 0::4]
        flip = draw < 0.5 * np.exp(-((u / sigma) ** 2))
        corners = out.reshape(n, 8, 4)
        corners[:, :, 1:] = np.where(flip[:, :, None], -corners[:, :, 1:], corners[:, :, 1:])

    return out.astype(np.float32)


def augment(example: TrainingExample, spec: NoiseSpec, epoch: int = 0, index: int = 0) -> TrainingExample:
    """Single-example convenience wrapper around :func:`augment_batch`."""
    new_inputs = augment_batch(example.sample.inputs[None, :], spec, epoch, np.array([index]))[0]
    sample = GridCellSample(new_inputs, example.sample.cell_origin, example.sample.spacing)
    return TrainingExample(sample, example.label)


# ---------------------------------------------------------------------------


def class_weights(labels, mode: str = "uniform") -> np.ndarray:
    """Per-class loss weights: all ones, or inverse class frequency.

    Inverse frequency uses ``w_k = N / (128 * count_k)``; classes absent from
    the data get the largest weight present.
    """
    if mode == "uniform":
        return np.ones(NUM_CONFIGS)
    if mode != "inverse-frequency":
        raise ValueError(f"unknown class weight mode {mode!r}")
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValueError("inverse-frequency weights need a non-empty dataset")
    counts = np.bincount(labels.astype(np.int64), minlength=NUM_CONFIGS)
    n = labels.size
    w = np.zeros(NUM_CONFIGS)
    present = counts > 0
    w[present] = n / (NUM_CONFIGS * counts[present])
    w[~present] = w[present].max()
    return w


def split_train_val(count: int, val_fraction: float = 0.1) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic train/validation split by example-index hash."""
    idx = np.arange(count, dtype=np.uint64)
    buckets = _mix64(idx ^ np.uint64(0xD1B54A32D192ED03)) % np.uint64(1000)
    val = buckets < np.uint64(round(1000 * val_fraction))
    return np.nonzero(~val)[0], np.nonzero(val)[0]


# ---------------------------------------------------------------------------
# binary dataset files

_DATASET_MAGIC = b"UDFD"
_DATASET_VERSION = 1
_RECORD_DTYPE = np.dtype([("inputs", "<f4", (32,)), ("label", "u1")])


def save_dataset(dataset: CellDataset, path) -> None:
    header = _DATASET_MAGIC + struct.pack(
        "<IIQ", _DATASET_VERSION, CONVENTION_TAG, len(dataset)
    )
    records = np.empty(len(dataset), dtype=_RECORD_DTYPE)
    records["inputs"] = dataset.inputs
    records["label"] = dataset.labels
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(records.tobytes())


def load_dataset(path) -> CellDataset:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != _DATASET_MAGIC:
        raise ValueError(f"{path}: not a UDFD dataset file")
    version, tag, count = struct.unpack_from("<IIQ", data, 4)
    if version != _DATASET_VERSION:
        raise ValueError(f"{path}: unsupported dataset version {version}")
    if tag != CONVENTION_TAG:
        raise ValueError(
            f"{path}: convention tag 0x{tag:08x} does not match this build"
        )
    payload = data[20:]
    if len(payload) != count * _RECORD_DTYPE.itemsize:
        raise ValueError(f"{path}: truncated dataset file")
    records = np.frombuffer(payload, dtype=_RECORD_DTYPE)
    return CellDataset(records["inputs"].copy(), records["label"].copy())
