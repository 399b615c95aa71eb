"""Dataset construction: synthetic generator, CSV ingestion, standardization.

Datasets are stored class-wise: one d-by-n_c matrix per class label.
Standardization is pooled (all classes together), recording the per-feature
means and standard deviations so the same affine map can be applied to held
out data.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError, ParameterError, ParseError

# Six Gaussian modes on a ring, assigned to three classes in adjacent pairs:
# interleaved bi-modal classes that are discriminative only in the first two
# coordinates, with distinct class centroids so the lam -> 0 (global) limit
# remains informative.
_RING_RADIUS = 3.0
_MODE_STD = 0.3
_MODE_ANGLES_DEG = ((0.0, 60.0), (120.0, 180.0), (240.0, 300.0))


def synthetic_mode_centers() -> list[tuple[np.ndarray, np.ndarray]]:
    """The two 2-d mode centers of each synthetic class."""
    centers = []
    for a0, a1 in _MODE_ANGLES_DEG:
        t0, t1 = np.deg2rad(a0), np.deg2rad(a1)
        centers.append((
            _RING_RADIUS * np.array([np.cos(t0), np.sin(t0)]),
            _RING_RADIUS * np.array([np.cos(t1), np.sin(t1)]),
        ))
    return centers


@dataclass(frozen=True)
class LabeledDataset:
    """Per-class data matrices sharing a feature dimension.

    ``matrices[c]`` has shape (d, n_c). When ``standardized`` is set,
    ``feature_means``/``feature_stds`` hold the statistics that were applied
    and ``constant_features`` flags zero-variance features (centered only).
    """

    labels: tuple
    matrices: tuple
    standardized: bool = False
    feature_means: np.ndarray | None = None
    feature_stds: np.ndarray | None = None
    constant_features: np.ndarray | None = None

    def __post_init__(self):
        if len(self.labels) != len(self.matrices):
            raise DimensionError("one matrix per label is required",
                                 expected=len(self.labels), actual=len(self.matrices))
        if not self.matrices:
            raise ParameterError("dataset needs at least one class")
        dims = {M.shape[0] for M in self.matrices}
        if len(dims) != 1:
            raise DimensionError("all class matrices must share the feature dimension",
                                 actual=sorted(dims))

    @property
    def dim(self) -> int:
        return self.matrices[0].shape[0]

    @property
    def n_classes(self) -> int:
        return len(self.labels)

    @property
    def counts(self) -> tuple[int, ...]:
        return tuple(M.shape[1] for M in self.matrices)

    @property
    def total(self) -> int:
        return sum(self.counts)

    def pooled(self) -> tuple[np.ndarray, np.ndarray]:
        """All points as one (d, N) matrix plus the matching label vector."""
        X = np.hstack(self.matrices)
        y = np.concatenate([np.repeat(lab, M.shape[1])
                            for lab, M in zip(self.labels, self.matrices)])
        return X, y


@dataclass(frozen=True)
class SplitSpec:
    """Seeded train/test split parameters (stratified by default)."""

    train_fraction: float = 0.5
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ParameterError(
                f"train_fraction must lie in (0, 1), got {self.train_fraction}")


def make_synthetic(d: int, counts, seed: int) -> LabeledDataset:
    """Three bi-modal classes, discriminative in the first two coordinates.

    The first two components of each class are drawn from two isotropic
    Gaussian modes (std 0.3) placed on a ring of radius 3, half the points
    per mode; components 3..d are independent standard normal noise. Class
    sizes must be even so the modes split equally. Deterministic per seed.
    """
    if d < 2:
        raise ParameterError(f"d must be >= 2, got {d}")
    counts = tuple(int(c) for c in counts)
    if len(counts) != 3:
        raise ParameterError(f"expected three class sizes, got {len(counts)}")
    if any(c < 2 or c % 2 for c in counts):
        raise ParameterError(f"class sizes must be even and >= 2, got {counts}")
    rng = np.random.default_rng(seed)
    centers = synthetic_mode_centers()
    matrices = []
    for c, n_c in enumerate(counts):
        half = n_c // 2
        lead = np.vstack([rng.normal(loc=center, scale=_MODE_STD, size=(half, 2))
                          for center in centers[c]]).T
        if d > 2:
            noise = rng.standard_normal((d - 2, n_c))
            matrices.append(np.vstack([lead, noise]))
        else:
            matrices.append(lead)
    return LabeledDataset(labels=(0, 1, 2), matrices=tuple(matrices))


def _parse_cell(cell: str, row: int, col: int, path: str) -> float:
    try:
        return float(cell)
    except ValueError:
        raise ParseError(
            f"non-numeric feature value {cell!r} at row {row}, column {col}",
            row=row, column=col, path=path) from None


def load_csv(path, label_column=None) -> LabeledDataset:
    """Load a comma-delimited file of numeric features plus one label column.

    A header row is detected by a non-numeric first row; ``label_column`` may
    be a column index or, with a header, a column name (defaults to the last
    column). Rows are grouped by label in order of first appearance; feature
    column order is preserved. No standardization is applied.
    """
    path = str(path)
    with open(path, newline="", encoding="utf-8") as handle:
        rows = [row for row in csv.reader(handle) if row]
    if not rows:
        raise ParseError("file contains no rows", path=path)

    def all_numeric(row):
        try:
            for cell in row:
                float(cell)
            return True
        except ValueError:
            return False

    header = None
    start = 0
    if not all_numeric(rows[0]) and len(rows) > 1:
        header = [h.strip() for h in rows[0]]
        start = 1

    width = len(rows[start])
    if label_column is None:
        label_idx = width - 1
    elif isinstance(label_column, int):
        label_idx = label_column if label_column >= 0 else width + label_column
    else:
        if header is None:
            raise ParseError(
                f"label column {label_column!r} named but the file has no header",
                path=path)
        try:
            label_idx = header.index(label_column)
        except ValueError:
            raise ParseError(f"label column {label_column!r} not in header {header}",
                             path=path) from None
    if not 0 <= label_idx < width:
        raise ParseError(f"label column index {label_idx} out of range for "
                         f"{width} columns", column=label_idx, path=path)

    by_label: dict = {}
    order: list = []
    for r in range(start, len(rows)):
        row = rows[r]
        if len(row) != width:
            raise ParseError(
                f"row {r} has {len(row)} cells, expected {width}",
                row=r, path=path)
        label = row[label_idx].strip()
        if not label:
            raise ParseError(f"missing label at row {r}", row=r,
                             column=label_idx, path=path)
        features = [_parse_cell(cell, r, c, path)
                    for c, cell in enumerate(row) if c != label_idx]
        if label not in by_label:
            by_label[label] = []
            order.append(label)
        by_label[label].append(features)

    matrices = tuple(np.asarray(by_label[lab], dtype=float).T for lab in order)
    return LabeledDataset(labels=tuple(order), matrices=matrices)


def write_csv(data: LabeledDataset, path) -> None:
    """Write features plus a trailing label column, full double precision."""
    d = data.dim
    with open(str(path), "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow([f"f{i}" for i in range(d)] + ["label"])
        for label, M in zip(data.labels, data.matrices):
            for j in range(M.shape[1]):
                writer.writerow([f"{x:.17g}" for x in M[:, j]] + [str(label)])


def standardization_stats(data: LabeledDataset):
    """Pooled per-feature mean and std; zero-variance features are flagged."""
    X = np.hstack(data.matrices)
    means = X.mean(axis=1)
    stds = X.std(axis=1)
    constant = stds == 0.0
    return means, stds, constant


def apply_standardization(data: LabeledDataset, means: np.ndarray,
                          stds: np.ndarray, constant: np.ndarray) -> LabeledDataset:
    """Center and scale every class matrix; constant features are centered only."""
    scale = np.where(constant, 1.0, stds)
    matrices = tuple((M - means[:, None]) / scale[:, None] for M in data.matrices)
    return LabeledDataset(labels=data.labels, matrices=matrices,
                          standardized=True, feature_means=means,
                          feature_stds=stds, constant_features=constant)


def standardize(data: LabeledDataset) -> LabeledDataset:
    """Pooled standardization to per-feature mean 0 and std 1.

    Standardizing an already standardized dataset is a near-identity map.
    """
    means, stds, constant = standardization_stats(data)
    return apply_standardization(data, means, stds, constant)


def split(data: LabeledDataset, spec: SplitSpec) -> tuple[LabeledDataset, LabeledDataset]:
    """Seeded stratified split with train-side standardization.

    Within each class, a seeded permutation sends the first
    ``floor(train_fraction * n_c)`` points to the training side. The
    standardization statistics are computed on the training side only and
    applied to both, so the test side never leaks into the scaling.
    """
    rng = np.random.default_rng(spec.seed)
    train_mats, test_mats = [], []
    if spec.stratified:
        for label, M in zip(data.labels, data.matrices):
            n = M.shape[1]
            k = int(spec.train_fraction * n)
            if k < 1 or k >= n:
                raise DomainError(
                    f"class {label!r} with {n} points cannot be split at "
                    f"fraction {spec.train_fraction}")
            perm = rng.permutation(n)
            train_mats.append(M[:, perm[:k]])
            test_mats.append(M[:, perm[k:]])
    else:
        X, y = data.pooled()
        n = X.shape[1]
        k = int(spec.train_fraction * n)
        perm = rng.permutation(n)
        tr_idx, te_idx = perm[:k], perm[k:]
        for label in data.labels:
            tr_mask = y[tr_idx] == label
            te_mask = y[te_idx] == label
            if not tr_mask.any() or not te_mask.any():
                raise DomainError(
                    f"class {label!r} has no points on one side of the split")
            train_mats.append(X[:, tr_idx[tr_mask]])
            test_mats.append(X[:, te_idx[te_mask]])

    train = LabeledDataset(labels=data.labels, matrices=tuple(train_mats))
    test = LabeledDataset(labels=data.labels, matrices=tuple(test_mats))
    means, stds, constant = standardization_stats(train)
    return (apply_standardization(train, means, stds, constant),
            apply_standardization(test, means, stds, constant))
