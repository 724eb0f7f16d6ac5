"""Datasets, interchange formats, label-noise injection and synthetic generation.

A FeatureSet is an immutable (features, labels, num_classes) triple. Two
on-disk formats are supported: a plain CSV (d feature columns then one
integer label column) and the binary ``rogf`` format, which is the contract
with the feature exporter:

    magic "ROGF" | u32 version=1 | u64 N | u64 d | u64 C
    | N*d little-endian f32, row major | N little-endian u32 labels

Corruption masks travel as a sibling file of N raw bytes (0/1).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionError, ParseError, SpecError, ValidationError

ROGF_MAGIC = b"ROGF"
ROGF_VERSION = 1

NoiseKind = str  # "uniform" | "flip" | "open_set"


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class FeatureSet:
    """N x d feature matrix with labels in [0, C)."""

    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if feats.ndim != 2:
            raise DimensionError(f"features must be 2-d, got shape {feats.shape}")
        if labels.ndim != 1 or labels.shape[0] != feats.shape[0]:
            raise DimensionError(
                f"labels shape {labels.shape} does not match {feats.shape[0]} rows"
            )
        if feats.shape[0] < 1 or feats.shape[1] < 1:
            raise ValidationError("need N >= 1 and d >= 1")
        if self.num_classes < 2:
            raise ValidationError(f"num_classes must be >= 2, got {self.num_classes}")
        if not np.all(np.isfinite(feats)):
            raise ValidationError("features contain NaN or Inf")
        if labels.min() < 0 or labels.max() >= self.num_classes:
            raise ValidationError(
                f"labels must lie in [0, {self.num_classes}), "
                f"got range [{labels.min()}, {labels.max()}]"
            )
        object.__setattr__(self, "features", _freeze(feats))
        object.__setattr__(self, "labels", _freeze(labels))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def class_indices(self, c: int) -> np.ndarray:
        return np.flatnonzero(self.labels == c)

    def take(self, rows: np.ndarray) -> "FeatureSet":
        return FeatureSet(self.features[rows], self.labels[rows], self.num_classes)


@dataclass(frozen=True)
class NoiseSpec:
    """Label/feature corruption recipe."""

    kind: NoiseKind
    rate: float
    flip_map: dict[int, int] | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("uniform", "flip", "open_set"):
            raise SpecError(f"unknown noise kind {self.kind!r}")
        if not 0.0 <= self.rate < 1.0:
            raise SpecError(f"rate must be in [0, 1), got {self.rate}")
        if self.flip_map is not None:
            for src, dst in self.flip_map.items():
                if src == dst:
                    raise SpecError(f"flip_map maps class {src} to itself")


@dataclass(frozen=True)
class SynthSpec:
    """Isotropic Gaussian classes contaminated by an isotropic outlier blob.

    Clean rows of class c are drawn from N(class_means[c], sigma2*I); the
    remaining delta_out fraction from N(out_mean, out_sigma2*I), labels kept.
    """

    class_means: np.ndarray
    sigma2: float
    out_mean: np.ndarray
    out_sigma2: float
    delta_out: float
    n_per_class: int
    seed: int = 0

    def __post_init__(self):
        means = np.atleast_2d(np.asarray(self.class_means, dtype=np.float64))
        out_mean = np.atleast_1d(np.asarray(self.out_mean, dtype=np.float64))
        if self.sigma2 <= 0 or self.out_sigma2 <= 0:
            raise SpecError("variances must be positive")
        if not 0.0 <= self.delta_out < 1.0:
            raise SpecError(f"delta_out must be in [0, 1), got {self.delta_out}")
        if self.n_per_class < 1:
            raise SpecError("n_per_class must be >= 1")
        if means.shape[0] < 2:
            raise SpecError("need at least 2 classes")
        if out_mean.shape[0] != means.shape[1]:
            raise DimensionError("out_mean dimension does not match class_means")
        object.__setattr__(self, "class_means", _freeze(means))
        object.__setattr__(self, "out_mean", _freeze(out_mean))

    @property
    def num_classes(self) -> int:
        return self.class_means.shape[0]

    @property
    def dim(self) -> int:
        return self.class_means.shape[1]

    @property
    def outliers_scattered(self) -> bool:
        """True when the outlier blob is wider than the clean classes (A3)."""
        return self.out_sigma2 > self.sigma2


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def save_feature_set(ds: FeatureSet, path: str | Path) -> None:
    """Write a FeatureSet in the rogf binary layout."""
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(ROGF_MAGIC)
        fh.write(struct.pack("<I", ROGF_VERSION))
        fh.write(struct.pack("<QQQ", ds.n, ds.dim, ds.num_classes))
        fh.write(ds.features.astype("<f4").tobytes(order="C"))
        fh.write(ds.labels.astype("<u4").tobytes())


def _load_rogf(path: Path) -> FeatureSet:
    raw = path.read_bytes()
    header = struct.calcsize("<4sIQQQ")
    if len(raw) < header:
        raise ParseError(f"{path}: truncated rogf header")
    magic, version, n, d, c = struct.unpack_from("<4sIQQQ", raw)
    if magic != ROGF_MAGIC:
        raise ParseError(f"{path}: bad magic {magic!r}")
    if version != ROGF_VERSION:
        raise ParseError(f"{path}: unsupported rogf version {version}")
    expect = header + n * d * 4 + n * 4
    if len(raw) != expect:
        raise ParseError(f"{path}: expected {expect} bytes, found {len(raw)}")
    feats = np.frombuffer(raw, dtype="<f4", count=n * d, offset=header)
    labels = np.frombuffer(raw, dtype="<u4", count=n, offset=header + n * d * 4)
    return FeatureSet(feats.reshape(n, d).astype(np.float64),
                      labels.astype(np.int64), int(c))


def _load_csv(path: Path) -> FeatureSet:
    num_classes = None
    declared_d = None
    rows: list[list[float]] = []
    labels: list[int] = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                # optional header "#d=<d>,C=<C>"
                try:
                    parts = dict(kv.split("=") for kv in line[1:].split(","))
                    declared_d = int(parts["d"])
                    num_classes = int(parts["C"])
                except (ValueError, KeyError) as exc:
                    raise ParseError(f"{path}:{lineno}: bad header {line!r}") from exc
                continue
            cells = line.split(",")
            if len(cells) < 2:
                raise ParseError(f"{path}:{lineno}: need features and a label")
            try:
                feats = [float(v) for v in cells[:-1]]
                label = int(cells[-1])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
            if rows and len(feats) != len(rows[0]):
                raise DimensionError(
                    f"{path}:{lineno}: row has {len(feats)} features, "
                    f"expected {len(rows[0])}"
                )
            rows.append(feats)
            labels.append(label)
    if not rows:
        raise ParseError(f"{path}: no data rows")
    if declared_d is not None and declared_d != len(rows[0]):
        raise DimensionError(
            f"{path}: header declares d={declared_d} but rows have {len(rows[0])}"
        )
    if num_classes is None:
        num_classes = max(labels) + 1
    return FeatureSet(np.array(rows), np.array(labels), num_classes)


def load_feature_set(path: str | Path, format: str | None = None) -> FeatureSet:
    """Load a FeatureSet from ``csv`` or ``rogf``; sniffed from suffix if unset."""
    path = Path(path)
    if not path.is_file():
        raise ParseError(f"{path}: no such file")
    if format is None:
        format = "rogf" if path.suffix == ".rogf" else "csv"
    if format == "rogf":
        return _load_rogf(path)
    if format == "csv":
        return _load_csv(path)
    raise SpecError(f"unknown format {format!r}")


def mask_path(path: str | Path) -> Path:
    return Path(str(path) + ".mask")


def save_mask(mask: np.ndarray, path: str | Path) -> None:
    Path(path).write_bytes(np.asarray(mask, dtype=np.uint8).tobytes())


def load_mask(path: str | Path, n: int | None = None) -> np.ndarray:
    raw = Path(path).read_bytes()
    mask = np.frombuffer(raw, dtype=np.uint8).astype(bool)
    if n is not None and mask.shape[0] != n:
        raise ParseError(f"{path}: mask has {mask.shape[0]} bytes, expected {n}")
    return mask


# ---------------------------------------------------------------------------
# corruption and synthesis
# ---------------------------------------------------------------------------

def inject_noise(
    ds: FeatureSet,
    spec: NoiseSpec,
    donor: FeatureSet | None = None,
) -> tuple[FeatureSet, np.ndarray]:
    """Corrupt exactly floor(rate*N) rows; returns (corrupted set, mask).

    uniform: resample the label uniformly among the C-1 other classes.
    flip:    set the label to flip_map[old label].
    open_set: replace the row's features by donor rows (without replacement),
    keeping the label.
    """
    rng = np.random.default_rng(spec.seed)
    n_corrupt = int(spec.rate * ds.n)
    mask = np.zeros(ds.n, dtype=bool)
    if n_corrupt == 0:
        return ds, mask

    rows = rng.choice(ds.n, size=n_corrupt, replace=False)
    mask[rows] = True
    features = ds.features.copy()
    labels = ds.labels.copy()

    if spec.kind == "uniform":
        offset = rng.integers(0, ds.num_classes - 1, size=n_corrupt)
        old = labels[rows]
        labels[rows] = offset + (offset >= old)
    elif spec.kind == "flip":
        if spec.flip_map is None:
            raise SpecError("flip noise requires a flip_map")
        present = np.unique(labels[rows])
        missing = [int(c) for c in present if int(c) not in spec.flip_map]
        if missing:
            raise SpecError(f"flip_map missing classes {missing}")
        table = np.arange(ds.num_classes)
        for src, dst in spec.flip_map.items():
            table[src] = dst
        labels[rows] = table[labels[rows]]
    else:  # open_set
        if donor is None:
            raise SpecError("open_set noise requires a donor FeatureSet")
        if donor.dim != ds.dim:
            raise DimensionError(
                f"donor dimension {donor.dim} does not match {ds.dim}"
            )
        if donor.n < n_corrupt:
            raise SpecError(
                f"donor set exhausted: need {n_corrupt} rows, have {donor.n}"
            )
        picks = rng.choice(donor.n, size=n_corrupt, replace=False)
        features[rows] = donor.features[picks]

    return FeatureSet(features, labels, ds.num_classes), mask


def synthesize(spec: SynthSpec) -> tuple[FeatureSet, np.ndarray]:
    """Draw the contaminated isotropic-Gaussian mixture; mask marks outliers."""
    rng = np.random.default_rng(spec.seed)
    n_clean = int((1.0 - spec.delta_out) * spec.n_per_class)
    n_out = spec.n_per_class - n_clean
    sigma = np.sqrt(spec.sigma2)
    sigma_out = np.sqrt(spec.out_sigma2)

    blocks = []
    labels = []
    masks = []
    for c in range(spec.num_classes):
        clean = spec.class_means[c] + sigma * rng.standard_normal((n_clean, spec.dim))
        out = spec.out_mean + sigma_out * rng.standard_normal((n_out, spec.dim))
        blocks.append(np.vstack([clean, out]))
        labels.append(np.full(spec.n_per_class, c, dtype=np.int64))
        masks.append(np.concatenate([np.zeros(n_clean, bool), np.ones(n_out, bool)]))

    ds = FeatureSet(np.vstack(blocks), np.concatenate(labels), spec.num_classes)
    return ds, np.concatenate(masks)


def average_pool(features: np.ndarray) -> np.ndarray:
    """Spatially average an N x F x H x W tensor down to N x F."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 4:
        raise DimensionError(f"expected N x F x H x W, got shape {features.shape}")
    if features.shape[2] < 1 or features.shape[3] < 1:
        raise DimensionError("spatial dimensions must be >= 1")
    return features.mean(axis=(2, 3))


def split(
    ds: FeatureSet, validation_size: int, seed: int = 0
) -> tuple[FeatureSet, FeatureSet | None]:
    """Disjoint, exhaustive train/validation split, uniform without replacement."""
    if validation_size >= ds.n:
        raise SpecError(f"validation_size {validation_size} >= N {ds.n}")
    if validation_size == 0:
        return ds, None
    rng = np.random.default_rng(seed)
    perm = rng.permutation(ds.n)
    val_rows = np.sort(perm[:validation_size])
    train_rows = np.sort(perm[validation_size:])
    return ds.take(train_rows), ds.take(val_rows)
