"""Datasets, label masking, anomaly splits and the 1:1 labeled/unlabeled sampler."""

from __future__ import annotations

import gzip
import itertools
import math
import os
import struct
from fractions import Fraction
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import DataError, IdxFormatError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
DATA_DIR_ENV = "SSVAE_DATA_DIR"

TRAIN_FILES = ("train-images-idx3-ubyte", "train-labels-idx1-ubyte")
TEST_FILES = ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")


@dataclass
class LabeledDataset:
    """Features in [0, 1] with an optional class per sample (-1 = unlabeled).

    ``labels`` is (n,) for one label set or (n, heads) for several, with
    ``class_count`` an int or a tuple accordingly.
    """

    features: np.ndarray
    labels: np.ndarray
    class_count: int | tuple[int, ...]
    index: np.ndarray | None = None

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.index is None:
            self.index = np.arange(len(self.features))
        if len(self.labels) != len(self.features):
            raise DataError(f"{len(self.features)} feature rows but {len(self.labels)} labels")
        counts = self.class_count if isinstance(self.class_count, tuple) else (self.class_count,)
        lab = self.labels if self.labels.ndim == 2 else self.labels[:, None]
        for k, c in enumerate(counts):
            if lab.size and lab[:, k].max() >= c:
                raise DataError(f"label {lab[:, k].max()} out of range for {c} classes")

    def __len__(self) -> int:
        return len(self.features)

    @property
    def input_dim(self) -> int:
        return self.features.shape[1]

    @property
    def labeled_mask(self) -> np.ndarray:
        if self.labels.ndim == 2:
            return (self.labels >= 0).any(axis=1)
        return self.labels >= 0

    @property
    def labeled_indices(self) -> np.ndarray:
        return np.flatnonzero(self.labeled_mask)

    @property
    def unlabeled_indices(self) -> np.ndarray:
        return np.flatnonzero(~self.labeled_mask)

    def subset(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return LabeledDataset(self.features[idx], self.labels[idx], self.class_count, self.index[idx])

    def only_labeled(self) -> "LabeledDataset":
        return self.subset(self.labeled_indices)

    def without_labels(self) -> "LabeledDataset":
        return LabeledDataset(self.features, np.full_like(self.labels, -1), self.class_count, self.index)


@dataclass
class Splits:
    train: LabeledDataset
    test: LabeledDataset | None = None


@dataclass
class FactorDataset:
    features: np.ndarray
    factor_values: np.ndarray
    factor_cardinalities: tuple[int, ...]
    factor_names: tuple[str, ...] = ()
    image_shape: tuple[int, int] = (16, 16)

    def __len__(self) -> int:
        return len(self.features)

    def index_of(self, values: np.ndarray) -> np.ndarray:
        """Row index of each factor combination (rows of ``values``)."""
        return np.ravel_multi_index(tuple(np.asarray(values).T), self.factor_cardinalities)

    def as_labeled(self) -> LabeledDataset:
        return LabeledDataset(self.features, self.factor_values.copy(), tuple(self.factor_cardinalities))


@dataclass(frozen=True)
class BatchPlan:
    batch_size: int = 128
    policy: str = "balanced_1_to_1"
    seed: int = 0

    def __post_init__(self):
        if self.policy not in ("balanced_1_to_1", "natural"):
            raise ValueError(f"unknown batch policy {self.policy!r}")
        if self.batch_size < 1 or (self.policy == "balanced_1_to_1" and self.batch_size < 2):
            raise ValueError(f"batch size {self.batch_size} too small for policy {self.policy}")


# -- IDX ----------------------------------------------------------------------


def _read_maybe_gzip(path) -> bytes:
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        return gzip.decompress(raw)
    return raw


def _parse_idx(buf: bytes, expected_magic: int, path) -> np.ndarray:
    if len(buf) < 4:
        raise IdxFormatError("file shorter than the 4-byte magic number", len(buf), path)
    (magic,) = struct.unpack(">I", buf[:4])
    if magic != expected_magic:
        raise IdxFormatError(f"bad magic 0x{magic:08x}, expected 0x{expected_magic:08x}", 0, path)
    ndim = magic & 0xFF
    header_end = 4 + 4 * ndim
    if len(buf) < header_end:
        raise IdxFormatError(f"truncated header: need {header_end} bytes", len(buf), path)
    dims = struct.unpack(f">{ndim}I", buf[4:header_end])
    size = math.prod(dims)
    if len(buf) < header_end + size:
        raise IdxFormatError(
            f"truncated data: header promises {size} bytes, found {len(buf) - header_end}", len(buf), path
        )
    return np.frombuffer(buf, dtype=np.uint8, count=size, offset=header_end).reshape(dims)


def load_idx(images_path, labels_path, class_count: int = 10) -> LabeledDataset:
    """Read an IDX image/label pair (optionally gzipped), scaling pixels by 1/255."""
    images = _parse_idx(_read_maybe_gzip(images_path), IDX_IMAGES_MAGIC, images_path)
    labels = _parse_idx(_read_maybe_gzip(labels_path), IDX_LABELS_MAGIC, labels_path)
    if images.shape[0] != labels.shape[0]:
        raise IdxFormatError(f"{images.shape[0]} images but {labels.shape[0]} labels", 4, labels_path)
    features = images.reshape(images.shape[0], -1).astype(np.float32) / np.float32(255.0)
    return LabeledDataset(features, labels.astype(np.int64), class_count)


def write_idx(path, array: np.ndarray) -> None:
    """Write uint8 ``array`` as IDX; ``.gz`` paths are gzipped with a zero mtime."""
    array = np.ascontiguousarray(array, dtype=np.uint8)
    magic = 0x00000800 | array.ndim
    payload = struct.pack(">I", magic) + struct.pack(f">{array.ndim}I", *array.shape) + array.tobytes()
    path = Path(path)
    if path.suffix == ".gz":
        payload = gzip.compress(payload, mtime=0)
    path.write_bytes(payload)


def resolve_data_dir(flag: str | os.PathLike | None = None) -> Path:
    raw = flag if flag is not None else os.environ.get(DATA_DIR_ENV)
    if not raw:
        raise DataError(f"no dataset directory given (use --dataset or set {DATA_DIR_ENV})")
    path = Path(raw)
    if not path.is_dir():
        raise DataError(f"dataset directory {path} does not exist")
    return path


def _find(directory: Path, stem: str) -> Path:
    for name in (stem, stem + ".gz"):
        if (directory / name).exists():
            return directory / name
    raise DataError(f"missing {stem}[.gz] in {directory}")


def load_splits(directory, class_count: int = 10) -> Splits:
    """Train split plus the test split when its files are present."""
    directory = Path(directory)
    train = load_idx(*(_find(directory, s) for s in TRAIN_FILES), class_count=class_count)
    try:
        test = load_idx(*(_find(directory, s) for s in TEST_FILES), class_count=class_count)
    except DataError:
        test = None
    return Splits(train, test)


# -- label masking and splits -----------------------------------------------


def mask_labels(ds: LabeledDataset, keep_count: int, seed: int) -> LabeledDataset:
    """Keep labels on ``keep_count`` uniformly chosen labeled samples; drop the rest."""
    pool = ds.labeled_indices
    if keep_count < 0 or keep_count > len(pool):
        raise ValueError(f"keep_count={keep_count} but only {len(pool)} labeled samples")
    keep = np.random.default_rng(seed).choice(pool, size=keep_count, replace=False)
    labels = np.full_like(ds.labels, -1)
    labels[keep] = ds.labels[keep]
    return LabeledDataset(ds.features, labels, ds.class_count, ds.index)


def make_anomaly_split(
    splits: Splits, anomalous_class: int
) -> tuple[LabeledDataset, LabeledDataset, LabeledDataset]:
    """Train on the other classes (relabeled 0..C-2); test split divided into normal/anomalous."""
    c = splits.train.class_count
    if not isinstance(c, int) or not (0 <= anomalous_class < c):
        raise ValueError(f"anomalous class {anomalous_class} out of range for {c} classes")
    if splits.test is None:
        raise DataError("anomaly split needs a test split")
    mapping = np.full(c, -1, dtype=np.int64)
    mapping[[k for k in range(c) if k != anomalous_class]] = np.arange(c - 1)

    def relabel(ds: LabeledDataset) -> LabeledDataset:
        new = np.where(ds.labels >= 0, mapping[np.clip(ds.labels, 0, None)], -1)
        return LabeledDataset(ds.features, new, c - 1, ds.index)

    train = splits.train
    train_normal = relabel(train.subset(np.flatnonzero(train.labels != anomalous_class)))
    test = splits.test
    is_anom = test.labels == anomalous_class
    test_normal = relabel(test.subset(np.flatnonzero(~is_anom)))
    anom = test.subset(np.flatnonzero(is_anom))
    test_anomalous = LabeledDataset(anom.features, np.full_like(anom.labels, -1), c - 1, anom.index)
    return train_normal, test_normal, test_anomalous


# -- batching -----------------------------------------------------------------


class BatchStream:
    """Seeded batch source; call :meth:`epoch` with consecutive epoch numbers.

    Under ``balanced_1_to_1`` with both pools nonempty, every batch holds
    ceil(B/2) labeled indices drawn with replacement and floor(B/2) unlabeled
    indices taken from a continuous stream of permutations of the unlabeled
    pool.  An epoch is one pass over the larger pool: epoch ``e`` ends after
    ``ceil((e + 1) * max(|U| / (B//2), |L| / ceil(B/2)))`` batches in total.
    When the unlabeled pool is the larger one this means each epoch covers
    every unlabeled sample exactly once and batches never shrink; when
    labels dominate, the epoch still sees as many labeled draws as there
    are labeled samples, so the step count does not collapse.  Otherwise
    batches are plain shuffles of the whole dataset, the last one possibly
    short.
    """

    def __init__(self, ds: LabeledDataset, plan: BatchPlan, rng: np.random.Generator | None = None):
        self.plan = plan
        self.rng = rng if rng is not None else np.random.default_rng(plan.seed)
        self.labeled = ds.labeled_indices
        self.unlabeled = ds.unlabeled_indices
        self.n = len(ds)
        self.balanced = plan.policy == "balanced_1_to_1" and len(self.labeled) > 0 and len(self.unlabeled) > 0
        self.n_lab = math.ceil(plan.batch_size / 2)
        self.n_unl = plan.batch_size // 2
        self._queue = np.empty(0, dtype=np.int64)
        self._batches_done = 0

    def _batches_through(self, epoch: int) -> int:
        per_epoch = max(Fraction(len(self.unlabeled), self.n_unl), Fraction(len(self.labeled), self.n_lab))
        return math.ceil((epoch + 1) * per_epoch)

    def _take_unlabeled(self) -> np.ndarray:
        while len(self._queue) < self.n_unl:
            self._queue = np.concatenate([self._queue, self.rng.permutation(self.unlabeled)])
        out, self._queue = self._queue[: self.n_unl], self._queue[self.n_unl:]
        return out

    def epoch(self, e: int) -> Iterator[np.ndarray]:
        if not self.balanced:
            order = self.rng.permutation(self.n)
            for start in range(0, self.n, self.plan.batch_size):
                yield order[start : start + self.plan.batch_size]
            return
        while self._batches_done < self._batches_through(e):
            lab = self.labeled[self.rng.integers(0, len(self.labeled), size=self.n_lab)]
            yield np.concatenate([lab, self._take_unlabeled()])
            self._batches_done += 1


def balanced_batches(ds: LabeledDataset, plan: BatchPlan, epochs: int = 1) -> list[np.ndarray]:
    """All batches (index arrays, labeled first) for ``epochs`` epochs."""
    stream = BatchStream(ds, plan)
    return [b for e in range(epochs) for b in stream.epoch(e)]


# -- synthetic factors ----------------------------------------------------------

GLYPHS = ("square", "cross", "disc")


def _glyph(kind: str, size: int) -> np.ndarray:
    c = (size - 1) / 2
    i, j = np.mgrid[0:size, 0:size]
    if kind == "square":
        return np.ones((size, size), dtype=np.float32)
    if kind == "cross":
        # diagonal cross; a thick upright cross equals the disc at size 4
        return ((i == j) | (i + j == size - 1)).astype(np.float32)
    if kind == "disc":
        return (((i - c) ** 2 + (j - c) ** 2) <= (size / 2) ** 2).astype(np.float32)
    raise ValueError(kind)


@dataclass(frozen=True)
class FactorConfig:
    shapes: int = 3
    x_positions: int = 8
    y_positions: int = 8
    scales: int = 4
    image_size: int = 16
    min_glyph: int = 4
    margin: int = 1

    @property
    def cardinalities(self) -> tuple[int, int, int, int]:
        return (self.shapes, self.x_positions, self.y_positions, self.scales)


def synth_factors(cfg: FactorConfig = FactorConfig()) -> FactorDataset:
    """Render every (shape, x, y, scale) combination as a binary image.

    Glyphs are translated by whole pixels, one pixel per position step, and
    grow by one pixel per scale step.
    """
    cards = cfg.cardinalities
    if any(c < 2 for c in cards):
        raise ValueError(f"every factor needs at least 2 values, got {cards}")
    if cfg.shapes > len(GLYPHS):
        raise ValueError(f"only {len(GLYPHS)} glyphs available")
    max_size = cfg.min_glyph + cfg.scales - 1
    if cfg.margin + max(cfg.x_positions, cfg.y_positions) - 1 + max_size > cfg.image_size:
        raise ValueError("glyphs would not fit inside the image at every position")
    combos = np.array(list(itertools.product(*(range(c) for c in cards))), dtype=np.int64)
    s = cfg.image_size
    images = np.zeros((len(combos), s, s), dtype=np.float32)
    for row, (shape, x, y, scale) in enumerate(combos):
        size = cfg.min_glyph + scale
        top, left = cfg.margin + y, cfg.margin + x
        images[row, top : top + size, left : left + size] = _glyph(GLYPHS[shape], size)
    return FactorDataset(
        images.reshape(len(combos), -1),
        combos,
        cards,
        ("shape", "x_pos", "y_pos", "scale"),
        (s, s),
    )
