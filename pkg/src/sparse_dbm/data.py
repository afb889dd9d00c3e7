"""Image datasets: IDX/CIFAR readers, binarization, grayscale and subsets."""
from __future__ import annotations

import gzip
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

IDX_IMAGES = 0x00000803
IDX_LABELS = 0x00000801
LUMA = np.array([0.2989, 0.5870, 0.1140])


class DataError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Dataset:
    """``images`` is (n, pixels) in [0, 1]; ``stats`` the per-pixel on-proportion."""

    images: np.ndarray
    labels: np.ndarray
    split: str = "train"
    n_classes: int = 10
    shape: tuple = (28, 28)
    stats: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise DataError(f"{len(self.images)} images but {len(self.labels)} labels")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise DataError("label out of range")
        if self.stats is None:
            object.__setattr__(self, "stats", self.images.mean(axis=0) if len(self.images)
                               else np.zeros(self.images.shape[1]))

    def __len__(self):
        return len(self.labels)

    @property
    def pixels(self) -> int:
        return self.images.shape[1]

    def is_binary(self) -> bool:
        return bool(np.all((self.images == 0) | (self.images == 1)))

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return replace(self, images=self.images[idx], labels=self.labels[idx], stats=None)


def _open(path):
    path = Path(path)
    with open(path, "rb") as f:
        gz = f.read(2) == b"\x1f\x8b"
    return gzip.open(path, "rb") if gz else open(path, "rb")


def _read_idx(path, magic: int) -> np.ndarray:
    with _open(path) as f:
        raw = f.read()
    if len(raw) < 8:
        raise DataError(f"{path}: truncated IDX header")
    got = int.from_bytes(raw[:4], "big")
    if got != magic:
        raise DataError(f"{path}: IDX magic {got:#010x}, expected {magic:#010x}")
    ndim = raw[3]
    dims = [int.from_bytes(raw[4 + 4 * k:8 + 4 * k], "big") for k in range(ndim)]
    start = 4 + 4 * ndim
    need = int(np.prod(dims))
    body = np.frombuffer(raw, dtype=np.uint8, count=min(need, max(len(raw) - start, 0)), offset=start)
    if body.size != need:
        raise DataError(f"{path}: truncated IDX body ({body.size} of {need} bytes)")
    return body.reshape(dims)


def load_idx(images_path, labels_path, split: str = "train") -> Dataset:
    """Read an IDX image/label pair (raw or gzip); pixels are scaled to [0, 1]."""
    images = _read_idx(images_path, IDX_IMAGES)
    labels = _read_idx(labels_path, IDX_LABELS)
    if len(images) != len(labels):
        raise DataError(f"{len(images)} images but {len(labels)} labels")
    return Dataset(images.reshape(len(images), -1) / 255.0, labels.astype(np.int64), split,
                   max(10, int(labels.max()) + 1 if len(labels) else 10), tuple(images.shape[1:]))


def save_idx(ds: Dataset, images_path, labels_path) -> None:
    """Write ``ds`` as IDX; gzip when the path ends in ``.gz``. Pixels must be multiples of 1/255."""
    px = np.rint(ds.images * 255.0).astype(np.uint8)
    img = np.array([IDX_IMAGES, len(ds), *ds.shape], dtype=">u4").tobytes() + px.tobytes()
    lbl = np.array([IDX_LABELS, len(ds)], dtype=">u4").tobytes() + ds.labels.astype(np.uint8).tobytes()
    for path, blob in ((images_path, img), (labels_path, lbl)):
        path = Path(path)
        path.write_bytes(gzip.compress(blob, mtime=0) if path.suffix == ".gz" else blob)


def save_cache(ds: Dataset, path) -> None:
    """Flat float64 cache: one text header line, then images and labels as raw little-endian."""
    with open(path, "wb") as f:
        f.write(f"DSC1 {len(ds)} {ds.pixels} {ds.n_classes} {ds.split} "
                f"{'x'.join(map(str, ds.shape))}\n".encode())
        f.write(ds.images.astype("<f8").tobytes())
        f.write(ds.labels.astype("<i8").tobytes())


def load_cache(path) -> Dataset:
    with open(path, "rb") as f:
        magic, n, px, nc, split, shape = f.readline().decode().split()
        if magic != "DSC1":
            raise DataError(f"{path}: not a dataset cache")
        n, px = int(n), int(px)
        images = np.frombuffer(f.read(8 * n * px), dtype="<f8").reshape(n, px).copy()
        labels = np.frombuffer(f.read(8 * n), dtype="<i8").copy()
    return Dataset(images, labels, split, int(nc), tuple(int(s) for s in shape.split("x")))


def load_cifar_batch(path, gray: bool = True) -> Dataset:
    """CIFAR-10 binary batch: 1 label byte then 3072 channel-major pixel bytes per record."""
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size % 3073:
        raise DataError(f"{path}: size is not a whole number of CIFAR records")
    rec = raw.reshape(-1, 3073)
    rgb = rec[:, 1:].reshape(-1, 3, 32, 32).transpose(0, 2, 3, 1) / 255.0
    if gray:
        return Dataset(rgb_to_gray(rgb).reshape(len(rec), -1), rec[:, 0].astype(np.int64),
                       shape=(32, 32))
    return Dataset(rgb.reshape(len(rec), -1), rec[:, 0].astype(np.int64), shape=(32, 32, 3))


def binarize(ds: Dataset, threshold: float = 0.5) -> Dataset:
    """Pixels at or above ``threshold`` become 1, others 0; stats are recomputed."""
    if not 0.0 < threshold < 1.0:
        raise DataError("threshold must lie in (0, 1)")
    return replace(ds, images=(ds.images >= threshold).astype(np.float64), stats=None)


def rgb_to_gray(rgb) -> np.ndarray:
    """Luma 0.2989 R + 0.5870 G + 0.1140 B over a trailing channel axis."""
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.shape[-1] != 3:
        raise DataError(f"expected 3 channels, got {rgb.shape[-1]}")
    return rgb @ LUMA


def _balanced_indices(ds: Dataset, per_class: int, seed: int) -> np.ndarray:
    if per_class < 1:
        raise DataError("per_class must be >= 1")
    rng = np.random.default_rng(seed)
    picks = []
    for c in range(ds.n_classes):
        pool = np.flatnonzero(ds.labels == c)
        if len(pool) < per_class:
            raise DataError(f"class {c} has {len(pool)} images, need {per_class}")
        picks.append(np.sort(rng.choice(pool, per_class, replace=False)))
    return np.concatenate(picks)


def subset(ds: Dataset, per_class: int, seed: int = 0) -> Dataset:
    """Seeded class-balanced subset with ``per_class`` images of every class, ordered by class."""
    return ds.take(_balanced_indices(ds, per_class, seed))


def split_holdout(ds: Dataset, per_class: int, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Class-balanced subset plus the remaining images as a held-out set."""
    idx = _balanced_indices(ds, per_class, seed)
    rest = np.setdiff1d(np.arange(len(ds)), idx)
    return ds.take(idx), replace(ds.take(rest), split="test")
