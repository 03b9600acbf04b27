"""Dataset ingestion and metrics persistence.

Covers the big-endian IDX image/label format (gzip transparent), synthetic
Gaussian blobs, a rendered-digits corpus for desk-scale image experiments,
and line-delimited JSON metrics with a CSV summarizer.
"""

import csv
import gzip
import json
import struct
from dataclasses import dataclass, field

import numpy as np

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


@dataclass
class Dataset:
    """Train/test split with stable row indices (file or generation order)."""

    name: str
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    n_classes: int
    image_shape: tuple | None = None
    class_names: list = field(default_factory=list)

    def __post_init__(self):
        for y in (self.y_train, self.y_test):
            if y.size and (y.min() < 0 or y.max() >= self.n_classes):
                raise ValueError(f"labels must lie in [0, {self.n_classes})")
        if self.x_train.shape[1] != self.x_test.shape[1]:
            raise ValueError("train and test feature dimensions differ")
        if not self.class_names:
            self.class_names = [str(c) for c in range(self.n_classes)]

    @property
    def input_dim(self) -> int:
        return self.x_train.shape[1]

    @property
    def n_train(self) -> int:
        return self.x_train.shape[0]


def _open_maybe_gzip(path):
    fh = open(path, "rb")
    magic = fh.read(2)
    fh.seek(0)
    if magic == b"\x1f\x8b":
        inner = fh
        return gzip.GzipFile(fileobj=inner)
    return fh


def load_idx_images(path) -> np.ndarray:
    """Parse an IDX3 ubyte image file into floats scaled to [0, 1]."""
    with _open_maybe_gzip(path) as fh:
        header = fh.read(16)
        if len(header) < 16:
            raise ValueError(f"{path}: truncated IDX header")
        magic, count, rows, cols = struct.unpack(">IIII", header)
        if magic != IDX_IMAGE_MAGIC:
            raise ValueError(
                f"{path}: bad image magic 0x{magic:08x}, expected 0x{IDX_IMAGE_MAGIC:08x}")
        raw = fh.read(count * rows * cols)
        if len(raw) != count * rows * cols:
            raise ValueError(f"{path}: truncated image payload")
        pixels = np.frombuffer(raw, dtype=np.uint8).reshape(count, rows, cols)
        return pixels.astype(float) / 255.0


def load_idx_labels(path) -> np.ndarray:
    with _open_maybe_gzip(path) as fh:
        header = fh.read(8)
        if len(header) < 8:
            raise ValueError(f"{path}: truncated IDX header")
        magic, count = struct.unpack(">II", header)
        if magic != IDX_LABEL_MAGIC:
            raise ValueError(
                f"{path}: bad label magic 0x{magic:08x}, expected 0x{IDX_LABEL_MAGIC:08x}")
        raw = fh.read(count)
        if len(raw) != count:
            raise ValueError(f"{path}: truncated label payload")
        return np.frombuffer(raw, dtype=np.uint8).astype(np.int64)


def write_idx_images(path, images: np.ndarray) -> None:
    """Inverse of load_idx_images; expects uint8 (n, rows, cols)."""
    images = np.asarray(images, dtype=np.uint8)
    n, rows, cols = images.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, n, rows, cols))
        fh.write(images.tobytes())


def write_idx_labels(path, labels: np.ndarray) -> None:
    labels = np.asarray(labels)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABEL_MAGIC, labels.size))
        fh.write(labels.astype(np.uint8).tobytes())


def load_mnist_idx(images_path, labels_path):
    """One IDX image/label pair as (flattened floats, labels, image shape)."""
    images = load_idx_images(images_path)
    labels = load_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise ValueError(
            f"count mismatch: {images.shape[0]} images vs {labels.shape[0]} labels")
    shape = images.shape[1:]
    return images.reshape(images.shape[0], -1), labels, shape


def load_mnist(train_images, train_labels, test_images, test_labels,
               name="mnist") -> Dataset:
    x_train, y_train, shape = load_mnist_idx(train_images, train_labels)
    x_test, y_test, shape_test = load_mnist_idx(test_images, test_labels)
    if shape != shape_test:
        raise ValueError("train and test image shapes differ")
    return Dataset(name=name, x_train=x_train, y_train=y_train,
                   x_test=x_test, y_test=y_test, n_classes=10,
                   image_shape=shape)


@dataclass(frozen=True)
class BlobSpec:
    """Gaussian clusters: one center per class, isotropic per-class std."""

    centers: np.ndarray
    std: float = 1.0
    samples_per_class: int = 100
    seed: int = 0

    def __post_init__(self):
        centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        object.__setattr__(self, "centers", centers)
        if centers.shape[0] < 2:
            raise ValueError("need at least two classes")
        if self.std <= 0:
            raise ValueError("std must be positive")


def make_blobs(spec: BlobSpec) -> Dataset:
    """Sample the clusters and split 80/20 per class (train first, by index)."""
    rng = np.random.default_rng(spec.seed)
    c, d = spec.centers.shape
    xs, ys = [], []
    for cls in range(c):
        xs.append(rng.normal(spec.centers[cls], spec.std,
                             size=(spec.samples_per_class, d)))
        ys.append(np.full(spec.samples_per_class, cls))
    x = np.vstack(xs)
    y = np.concatenate(ys)
    train_idx, test_idx = [], []
    n_train_per = int(round(0.8 * spec.samples_per_class))
    for cls in range(c):
        rows = np.flatnonzero(y == cls)
        rows = rows[rng.permutation(rows.size)]
        train_idx.extend(rows[:n_train_per])
        test_idx.extend(rows[n_train_per:])
    train_idx = np.array(sorted(train_idx))
    test_idx = np.array(sorted(test_idx))
    return Dataset(name="blobs", x_train=x[train_idx], y_train=y[train_idx],
                   x_test=x[test_idx], y_test=y[test_idx], n_classes=c)


@dataclass(frozen=True)
class DigitsSpec:
    """Rendered-glyph digit corpus: deterministic, MNIST-like in shape and scale.

    Each image is a digit glyph drawn at a jittered size, rotated, shifted,
    blurred, and corrupted with pixel noise, on an image_size^2 canvas.
    """

    n_train: int = 12000
    n_test: int = 2000
    image_size: int = 28
    seed: int = 0
    rotation_deg: float = 12.0
    shift_frac: float = 0.08
    scale_jitter: float = 0.12
    blur_max: float = 0.7
    noise_std: float = 0.06

    def __post_init__(self):
        if self.n_train < 10 or self.n_test < 10:
            raise ValueError("need at least one sample per class in each split")


def _render_digit(digit: int, spec: DigitsSpec, rng: np.random.Generator,
                  font_cache: dict) -> np.ndarray:
    from PIL import Image, ImageDraw, ImageFilter, ImageFont

    canvas = spec.image_size * 2
    base = spec.image_size * 1.5
    size = int(round(base * (1.0 + spec.scale_jitter * (2 * rng.random() - 1))))
    if size not in font_cache:
        font_cache[size] = ImageFont.load_default(size=size)
    img = Image.new("L", (canvas, canvas), 0)
    draw = ImageDraw.Draw(img)
    stroke = int(rng.integers(0, 2))
    draw.text((canvas // 2, canvas // 2), str(digit), fill=255,
              font=font_cache[size], anchor="mm", stroke_width=stroke,
              stroke_fill=255)
    angle = spec.rotation_deg * (2 * rng.random() - 1)
    dx = spec.shift_frac * canvas * (2 * rng.random() - 1)
    dy = spec.shift_frac * canvas * (2 * rng.random() - 1)
    img = img.rotate(angle, resample=Image.BILINEAR, translate=(dx, dy),
                     fillcolor=0)
    blur = spec.blur_max * rng.random()
    if blur > 0.05:
        img = img.filter(ImageFilter.GaussianBlur(radius=blur))
    img = img.resize((spec.image_size, spec.image_size), Image.LANCZOS)
    arr = np.asarray(img, dtype=float) / 255.0
    arr = arr * float(rng.uniform(0.7, 1.0))
    arr += rng.normal(0.0, spec.noise_std, size=arr.shape)
    return np.clip(arr, 0.0, 1.0)


def make_digits(spec: DigitsSpec) -> Dataset:
    """Render the corpus; labels cycle 0..9 so classes stay balanced."""
    rng = np.random.default_rng(spec.seed)
    font_cache: dict = {}
    total = spec.n_train + spec.n_test
    labels = np.arange(total) % 10
    images = np.empty((total, spec.image_size * spec.image_size))
    for i in range(total):
        images[i] = _render_digit(int(labels[i]), spec, rng, font_cache).ravel()
    return Dataset(name="digits",
                   x_train=images[:spec.n_train],
                   y_train=labels[:spec.n_train],
                   x_test=images[spec.n_train:],
                   y_test=labels[spec.n_train:],
                   n_classes=10,
                   image_shape=(spec.image_size, spec.image_size))


def dataset_to_idx(dataset: Dataset, directory) -> dict:
    """Export a dataset with image_shape to four canonical IDX files."""
    import os

    if dataset.image_shape is None:
        raise ValueError("dataset has no image shape")
    h, w = dataset.image_shape
    paths = {
        "train_images": os.path.join(directory, "train-images-idx3-ubyte"),
        "train_labels": os.path.join(directory, "train-labels-idx1-ubyte"),
        "test_images": os.path.join(directory, "t10k-images-idx3-ubyte"),
        "test_labels": os.path.join(directory, "t10k-labels-idx1-ubyte"),
    }
    to_u8 = lambda x: np.round(x.reshape(-1, h, w) * 255.0).astype(np.uint8)
    write_idx_images(paths["train_images"], to_u8(dataset.x_train))
    write_idx_labels(paths["train_labels"], dataset.y_train)
    write_idx_images(paths["test_images"], to_u8(dataset.x_test))
    write_idx_labels(paths["test_labels"], dataset.y_test)
    return paths


def write_metrics(records, path, append: bool = False) -> None:
    """Line-delimited JSON, one record per line."""
    mode = "a" if append else "w"
    with open(path, mode, encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
            fh.flush()


def append_metrics(record, path) -> None:
    write_metrics([record], path, append=True)


def read_metrics(path):
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def write_summary_csv(runs, path) -> None:
    """Aggregate per-seed metrics into (round, labeled_fraction, mean, std).

    `runs` is a list of per-seed record lists as produced by the loop; every
    run must cover the same rounds.
    """
    if not runs:
        raise ValueError("no runs to summarize")
    rounds = [r["round"] for r in runs[0]]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["round", "labeled_fraction", "accuracy_mean", "accuracy_std"])
        for i, rnd in enumerate(rounds):
            accs = np.array([run[i]["test_accuracy"] for run in runs])
            frac = runs[0][i]["labeled_fraction"]
            writer.writerow([rnd, f"{frac:.6f}",
                             f"{accs.mean():.6f}", f"{accs.std(ddof=0):.6f}"])
