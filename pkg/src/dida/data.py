"""Datasets as discrete distributions with permutation-group actions.

A LabeledDataset is an n-sample point set in R^dX with categorical labels in
[0, C). The group acting on it pairs a feature-column permutation with a
class relabeling. Patches (row/feature sub-datasets), synthetic generators
and CSV ingestion live here too.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ContractError, DomainError, IngestionError, NumericError

log = logging.getLogger("dida")

TOY_KINDS = ("gaussian_mixture", "moons", "rings")


@dataclass(frozen=True)
class LabeledDataset:
    features: np.ndarray  # (n, dX) float64
    labels: np.ndarray  # (n,) int64 in [0, C)
    id: str = ""
    n_dropped_rows: int = 0  # ingestion metadata, see load_csv

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        labs = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labs)
        if feats.ndim != 2 or feats.shape[0] < 1 or feats.shape[1] < 1:
            raise ContractError(f"features must be a nonempty 2-D matrix, got {feats.shape}")
        if labs.shape != (feats.shape[0],):
            raise ContractError("labels must be one per sample")
        if not np.all(np.isfinite(feats)):
            raise NumericError("features must be finite")
        if labs.min() < 0:
            raise ContractError("labels must be nonnegative class ids")
        n_classes = int(np.unique(labs).size)
        if n_classes < 2:
            raise ContractError("datasets need at least 2 classes")
        if labs.max() >= n_classes:
            raise ContractError("labels must be densely indexed in [0, C)")
        object.__setattr__(self, "_n_classes", n_classes)
        feats.setflags(write=False)
        labs.setflags(write=False)

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def dx(self):
        return self.features.shape[1]

    @property
    def n_classes(self):
        return self._n_classes

    def class_counts(self):
        return np.bincount(self.labels, minlength=self.n_classes)


@dataclass(frozen=True)
class PermutationPair:
    """A feature-column permutation paired with a class relabeling."""

    sigma_x: tuple  # permutation of [dX]
    sigma_y: tuple  # permutation of [C]

    def __post_init__(self):
        for name, sig in (("sigma_x", self.sigma_x), ("sigma_y", self.sigma_y)):
            if sorted(sig) != list(range(len(sig))):
                raise ContractError(f"{name} is not a permutation: {sig}")

    @classmethod
    def identity(cls, dx, n_classes):
        return cls(tuple(range(dx)), tuple(range(n_classes)))

    @classmethod
    def random(cls, dx, n_classes, rng):
        return cls(tuple(rng.permutation(dx).tolist()), tuple(rng.permutation(n_classes).tolist()))

    def inverse(self):
        return PermutationPair(_invert(self.sigma_x), _invert(self.sigma_y))

    def compose(self, other):
        """self after other: (self . other)(x) = self(other(x))."""
        sx = tuple(self.sigma_x[other.sigma_x[i]] for i in range(len(self.sigma_x)))
        sy = tuple(self.sigma_y[other.sigma_y[i]] for i in range(len(self.sigma_y)))
        return PermutationPair(sx, sy)


def _invert(sigma):
    inv = [0] * len(sigma)
    for i, s in enumerate(sigma):
        inv[s] = i
    return tuple(inv)


@dataclass(frozen=True)
class PatchSpec:
    row_indices: tuple
    feature_indices: tuple
    source_id: str

    def __post_init__(self):
        for name, idx in (("row_indices", self.row_indices), ("feature_indices", self.feature_indices)):
            if len(idx) == 0 or len(set(idx)) != len(idx):
                raise ContractError(f"{name} must be nonempty and distinct")


@dataclass(frozen=True)
class ToyGenConfig:
    kind: str
    n: int
    classes: int
    seed: int
    noise: float = 0.1

    def __post_init__(self):
        if self.kind not in TOY_KINDS:
            raise DomainError(f"unknown toy kind {self.kind!r}")
        if not 2 <= self.classes <= 7:
            raise DomainError("class count must lie in [2, 7]")
        if self.n <= 0:
            raise DomainError("n must be positive")


def apply_permutation(z: LabeledDataset, sigma: PermutationPair) -> LabeledDataset:
    """Column k of the result is column sigma_x^{-1}(k); labels are relabeled."""
    if len(sigma.sigma_x) != z.dx or len(sigma.sigma_y) != z.n_classes:
        raise ContractError("permutation sizes do not match the dataset")
    inv_x = _invert(sigma.sigma_x)
    feats = z.features[:, list(inv_x)]
    labs = np.asarray(sigma.sigma_y, dtype=np.int64)[z.labels]
    return replace(z, features=feats, labels=labs)


def sample_patch(z: LabeledDataset, n_rows, n_features, seed) -> tuple[LabeledDataset, PatchSpec]:
    """Uniform row/feature subsample; labels re-indexed densely.

    Row subsets are redrawn (bounded) until at least two classes appear so the
    patch is itself a valid dataset.
    """
    if n_rows > z.n or n_features > z.dx:
        raise DomainError(
            f"requested {n_rows}x{n_features} patch from a {z.n}x{z.dx} dataset"
        )
    if n_rows < 2:
        raise DomainError("patches need at least 2 rows to span 2 classes")
    rng = np.random.default_rng(seed)
    rows = None
    for _ in range(1000):
        cand = rng.choice(z.n, size=n_rows, replace=False)
        if np.unique(z.labels[cand]).size >= 2:
            rows = cand
            break
    if rows is None:
        raise DomainError("could not draw a patch containing two classes")
    cols = rng.choice(z.dx, size=n_features, replace=False)
    feats = z.features[np.ix_(rows, cols)]
    old_labels = z.labels[rows]
    _, dense = np.unique(old_labels, return_inverse=True)
    patch = LabeledDataset(feats, dense, id=f"{z.id}/patch")
    spec = PatchSpec(tuple(int(r) for r in rows), tuple(int(c) for c in cols), z.id)
    return patch, spec


def _balanced_labels(n, classes):
    counts = [n // classes + (1 if c < n % classes else 0) for c in range(classes)]
    return np.repeat(np.arange(classes), counts)


def generate_toy(cfg: ToyGenConfig) -> LabeledDataset:
    """2-D synthetic benchmark dataset, class-balanced within one sample."""
    rng = np.random.default_rng(cfg.seed)
    labels = _balanced_labels(cfg.n, cfg.classes)
    pts = np.zeros((cfg.n, 2))
    if cfg.kind == "gaussian_mixture":
        centers = rng.uniform(0.15, 0.85, size=(cfg.classes, 2))
        pts = centers[labels] + rng.normal(scale=cfg.noise, size=(cfg.n, 2))
    elif cfg.kind == "moons":
        # half-circle arcs, rotated per class around a common center
        t = rng.uniform(0.0, math.pi, size=cfg.n)
        phase = labels * (2.0 * math.pi / cfg.classes)
        radius = 0.35 + 0.1 * (labels % 2)
        pts[:, 0] = 0.5 + radius * np.cos(t + phase)
        pts[:, 1] = 0.5 + radius * np.sin(t + phase)
        pts += rng.normal(scale=cfg.noise, size=(cfg.n, 2))
    elif cfg.kind == "rings":
        t = rng.uniform(0.0, 2.0 * math.pi, size=cfg.n)
        radius = ring_radii(cfg.classes)[labels] + rng.normal(scale=cfg.noise, size=cfg.n)
        pts[:, 0] = 0.5 + radius * np.cos(t)
        pts[:, 1] = 0.5 + radius * np.sin(t)
    order = rng.permutation(cfg.n)
    return LabeledDataset(pts[order], labels[order], id=f"{cfg.kind}-{cfg.seed}")


def ring_radii(classes):
    return 0.45 * (np.arange(classes) + 1.0) / classes


def normalize_features(z: LabeledDataset) -> LabeledDataset:
    """Per-feature min-max scaling into [0, 1]; constant columns map to 0.5."""
    lo = z.features.min(axis=0)
    hi = z.features.max(axis=0)
    span = hi - lo
    flat = span == 0
    span = np.where(flat, 1.0, span)
    feats = (z.features - lo) / span
    feats[:, flat] = 0.5
    return replace(z, features=feats)


def save_csv(z: LabeledDataset, path, label_column="label"):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"f{k}" for k in range(z.dx)] + [label_column])
        for row, lab in zip(z.features, z.labels):
            writer.writerow([repr(float(v)) for v in row] + [int(lab)])


def load_csv(path, label_column) -> LabeledDataset:
    """Numeric columns become features; rows with missing cells are dropped.

    The number of dropped rows is logged and carried on `n_dropped_rows`.
    """
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                raise IngestionError(f"{path}: empty file")
            rows = list(reader)
    except OSError as exc:
        raise IngestionError(f"cannot read {path}: {exc}") from exc
    if label_column not in header:
        raise IngestionError(f"{path}: no column named {label_column!r}")
    label_idx = header.index(label_column)
    feature_idx = []
    for j in range(len(header)):
        if j == label_idx:
            continue
        if all(_is_number(r[j]) for r in rows if len(r) == len(header) and r[j].strip() != ""):
            feature_idx.append(j)
    if not feature_idx:
        raise IngestionError(f"{path}: no numeric feature columns")

    feats, raw_labels, dropped = [], [], 0
    for r in rows:
        if (
            len(r) != len(header)
            or any(r[j].strip() == "" for j in feature_idx + [label_idx])
            or any(not math.isfinite(float(r[j])) for j in feature_idx)
        ):
            dropped += 1
            continue
        feats.append([float(r[j]) for j in feature_idx])
        raw_labels.append(r[label_idx].strip())
    if dropped:
        log.warning("%s: dropped %d rows with missing values", path, dropped)
    if not feats:
        raise IngestionError(f"{path}: no usable rows")
    _, dense = np.unique(raw_labels, return_inverse=True)
    name = str(path).rsplit("/", 1)[-1].removesuffix(".csv")
    return LabeledDataset(np.asarray(feats), dense, id=name, n_dropped_rows=dropped)


def _is_number(s):
    try:
        float(s)
        return True
    except ValueError:
        return False


def write_manifest(entries, path):
    """entries: list of {id, path, label_column}."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(entries, fh, indent=1)
        fh.write("\n")


def load_manifest(path):
    base = os.path.dirname(os.path.abspath(path))
    with open(path, encoding="utf-8") as fh:
        entries = json.load(fh)
    out = []
    for e in entries:
        p = e["path"]
        if not os.path.isabs(p):
            p = os.path.join(base, p)
        out.append(load_csv(p, e["label_column"]))
    return out


def split_seed(base_seed, index):
    """Independent per-item seed stream, stable across plan order."""
    return int(np.random.SeedSequence(entropy=base_seed, spawn_key=(index,)).generate_state(1)[0])
