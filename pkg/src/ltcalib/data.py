"""Synthetic long-tailed datasets, samplers, and mixup augmentation."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "LongTailedDataset",
    "make_longtail_profile",
    "split_tags",
    "gen_gaussian_blobs",
    "Sampler",
    "MixupConfig",
    "one_hot",
    "mixup_batch",
    "save_dataset",
    "load_dataset",
]

MANY_THRESHOLD = 100  # count > 100  -> "many"
FEW_THRESHOLD = 20  # count < 20   -> "few"; in between -> "medium"


def make_longtail_profile(n_max: int, n_min: int, k: int) -> np.ndarray:
    """Exponentially decaying per-class counts with imbalance factor n_max/n_min.

    counts[j] = round(n_max * beta**(-j/(k-1))); the first and last entries are
    pinned to n_max and n_min exactly so the realized imbalance factor is exact.
    """
    if k < 2:
        raise ValueError("need at least 2 classes")
    if n_min < 1 or n_max < n_min:
        raise ValueError("require n_max >= n_min >= 1")
    beta = n_max / n_min
    j = np.arange(k)
    counts = np.rint(n_max * beta ** (-j / (k - 1))).astype(np.int64)
    counts[0] = n_max
    counts[-1] = n_min
    return counts


def split_tags(counts: np.ndarray) -> list[str]:
    """Tag each class many/medium/few by its training-instance count."""
    return [
        "many" if c > MANY_THRESHOLD else ("few" if c < FEW_THRESHOLD else "medium")
        for c in counts
    ]


@dataclass
class LongTailedDataset:
    """Labeled feature vectors with per-class counts sorted non-increasing."""

    features: np.ndarray  # (N_total, M)
    labels: np.ndarray  # (N_total,) int
    class_counts: np.ndarray  # (K,) non-increasing
    splits: list[str]
    seed: int | None = None
    test_features: np.ndarray | None = None
    test_labels: np.ndarray | None = None
    centers: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        counts = np.asarray(self.class_counts)
        if np.any(counts[:-1] < counts[1:]):
            raise ValueError("class_counts must be non-increasing")
        if counts.sum() != len(self.labels):
            raise ValueError("class_counts must sum to the number of instances")
        hist = np.bincount(self.labels, minlength=len(counts))
        if not np.array_equal(hist, counts):
            raise ValueError("label histogram disagrees with class_counts")

    @property
    def num_classes(self) -> int:
        return len(self.class_counts)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def imbalance_factor(self) -> float:
        return float(self.class_counts[0] / self.class_counts[-1])


def _class_centers(k: int, dim: int, seed: int) -> np.ndarray:
    """Deterministic class centers on the unit sphere in R^dim."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xC3]))
    centers = rng.standard_normal((k, dim))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    return centers


def gen_gaussian_blobs(
    counts,
    dim: int,
    spread: float,
    seed: int,
    test_per_class: int = 50,
) -> LongTailedDataset:
    """Isotropic Gaussian blobs around unit-sphere centers, plus a balanced test set."""
    counts = np.asarray(counts, dtype=np.int64)
    if dim < 2:
        raise ValueError("dim must be >= 2")
    if spread <= 0:
        raise ValueError("spread must be positive")
    k = len(counts)
    centers = _class_centers(k, dim, seed)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xD4]))

    features = np.concatenate(
        [centers[j] + spread * rng.standard_normal((int(counts[j]), dim)) for j in range(k)]
    )
    labels = np.repeat(np.arange(k), counts)

    test_rng = np.random.default_rng(np.random.SeedSequence([seed, 0x7E]))
    test_features = np.concatenate(
        [centers[j] + spread * test_rng.standard_normal((test_per_class, dim)) for j in range(k)]
    )
    test_labels = np.repeat(np.arange(k), test_per_class)

    return LongTailedDataset(
        features=features,
        labels=labels,
        class_counts=counts,
        splits=split_tags(counts),
        seed=seed,
        test_features=test_features,
        test_labels=test_labels,
        centers=centers,
    )


class Sampler:
    """Batch sampler with replacement.

    kind="instance": each training instance equi-probable.
    kind="class": a class is drawn uniformly, then an instance within it.
    """

    KINDS = ("instance", "class")

    def __init__(self, kind: str, dataset: LongTailedDataset, seed: int):
        if kind not in self.KINDS:
            raise ValueError(f"unknown sampler kind {kind!r}")
        if len(dataset.labels) == 0:
            raise ValueError("cannot sample from an empty dataset")
        self.kind = kind
        self.dataset = dataset
        self.rng = np.random.default_rng(seed)
        self._by_class = [np.flatnonzero(dataset.labels == j) for j in range(dataset.num_classes)]

    def next_indices(self, batch: int) -> np.ndarray:
        if batch < 1:
            raise ValueError("batch must be >= 1")
        n = len(self.dataset.labels)
        if self.kind == "instance":
            return self.rng.integers(0, n, size=batch)
        classes = self.rng.integers(0, self.dataset.num_classes, size=batch)
        picks = self.rng.random(batch)
        return np.array(
            [self._by_class[c][int(p * len(self._by_class[c]))] for c, p in zip(classes, picks)]
        )

    def next_batch(self, batch: int) -> tuple[np.ndarray, np.ndarray]:
        idx = self.next_indices(batch)
        return self.dataset.features[idx], self.dataset.labels[idx]


@dataclass
class MixupConfig:
    alpha: float = 0.2
    enabled: bool = True

    def __post_init__(self):
        if self.enabled and self.alpha <= 0:
            raise ValueError("mixup alpha must be positive")


def one_hot(labels, k: int) -> np.ndarray:
    labels = np.atleast_1d(np.asarray(labels))
    out = np.zeros((len(labels), k))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def mixup_batch(x1, y1, x2, y2, cfg: MixupConfig, rng: np.random.Generator, k: int, lam=None):
    """Convex combination of two batches and of their (one-hot) labels.

    y1/y2 may be integer labels or soft label rows; the returned label rows
    are probability vectors. ``lam`` overrides the Beta(alpha, alpha) draw.
    """
    if cfg.alpha <= 0:
        raise ValueError("mixup alpha must be positive")
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    if x1.shape != x2.shape:
        raise ValueError("mixup inputs must share a shape")
    q1 = y1 if np.asarray(y1).ndim == 2 else one_hot(y1, k)
    q2 = y2 if np.asarray(y2).ndim == 2 else one_hot(y2, k)
    if lam is None:
        lam = float(rng.beta(cfg.alpha, cfg.alpha))
    x = lam * x1 + (1.0 - lam) * x2
    q = lam * q1 + (1.0 - lam) * q2
    return x, q


# -- CSV export / import -------------------------------------------------------


def _write_feature_csv(path: Path, features: np.ndarray, labels: np.ndarray):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"feat_{i}" for i in range(features.shape[1])] + ["label"])
        for row, lab in zip(features, labels):
            writer.writerow([repr(float(v)) for v in row] + [int(lab)])


def save_dataset(ds: LongTailedDataset, out_prefix: str | Path):
    """Write <prefix>.csv (+ .test.csv when present) and a JSON sidecar."""
    prefix = Path(out_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    _write_feature_csv(prefix.with_suffix(".csv"), ds.features, ds.labels)
    sidecar = {
        "class_counts": [int(c) for c in ds.class_counts],
        "splits": ds.splits,
        "seed": ds.seed,
        "dim": int(ds.features.shape[1]),
        "imbalance_factor": ds.imbalance_factor,
        "test_csv": None,
    }
    if ds.test_features is not None:
        test_path = prefix.parent / (prefix.name + ".test.csv")
        _write_feature_csv(test_path, ds.test_features, ds.test_labels)
        sidecar["test_csv"] = test_path.name
    with open(prefix.with_suffix(".json"), "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_feature_csv(path: Path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[-1] != "label" or not header[0].startswith("feat_"):
            raise ValueError(f"{path}: not a dataset CSV (header {header[:2]}...)")
        feats, labels = [], []
        for row in reader:
            feats.append([float(v) for v in row[:-1]])
            labels.append(int(row[-1]))
    return np.array(feats), np.array(labels, dtype=np.int64)


def load_dataset(prefix: str | Path) -> LongTailedDataset:
    prefix = Path(prefix)
    with open(prefix.with_suffix(".json")) as fh:
        sidecar = json.load(fh)
    features, labels = _read_feature_csv(prefix.with_suffix(".csv"))
    test_features = test_labels = None
    if sidecar.get("test_csv"):
        test_features, test_labels = _read_feature_csv(prefix.parent / sidecar["test_csv"])
    return LongTailedDataset(
        features=features,
        labels=labels,
        class_counts=np.array(sidecar["class_counts"], dtype=np.int64),
        splits=list(sidecar["splits"]),
        seed=sidecar.get("seed"),
        test_features=test_features,
        test_labels=test_labels,
    )
