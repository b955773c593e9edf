"""
SMOTE oversampling over real-valued feature vectors.

Synthetic rows are interpolated between a minority row and one of its k nearest minority neighbours, so they always
lie on the segment between two real minority rows. Original rows are kept unchanged and in order, synthetic rows are
appended after them.
"""

import math
import re
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.spatial.distance import cdist

import settings
from errors import (
    DimensionMismatch,
    InvalidParameter,
    NonBinaryLabel,
    SingleClassDataset,
    TooFewMinoritySamples,
)


class FeatureDataset(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    ids: tuple[str, ...]
    features: np.ndarray
    labels: np.ndarray

    @model_validator(mode="after")
    def check_shape(self) -> "FeatureDataset":
        if self.features.ndim != 2 or self.features.shape[1] < 1:
            raise DimensionMismatch(
                f"features must be a 2-d array with at least one column, got shape {self.features.shape}"
            )
        if not (len(self.ids) == len(self.features) == len(self.labels)):
            raise DimensionMismatch(
                f"{len(self.ids)} ids, {len(self.features)} feature rows and {len(self.labels)} labels"
            )
        if not np.isfinite(self.features).all():
            raise InvalidParameter("features must be finite (no NaN or infinity)")
        if self.labels.size and not np.isin(self.labels, (0, 1)).all():
            raise NonBinaryLabel("labels must be 0 or 1")
        return self

    @property
    def dimension(self) -> int:
        return self.features.shape[1]

    def class_counts(self) -> dict:
        return {label: int(np.sum(self.labels == label)) for label in (0, 1)}

    def minority_label(self) -> int:
        counts = self.class_counts()
        # Balanced data treats the positive class as the minority
        return 0 if counts[0] < counts[1] else 1

    def minority_indices(self) -> np.ndarray:
        return np.flatnonzero(self.labels == self.minority_label())


class SmoteConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    k_neighbors: int = Field(default=5, ge=1)
    target_ratio: float = Field(default=1.0, gt=0, le=1)
    seed: int = settings.DEFAULT_SEED
    distance: Literal["euclidean"] = "euclidean"


class Provenance(BaseModel):
    """Where one synthetic row came from: x = parent + lam * (neighbor - parent)"""

    model_config = ConfigDict(frozen=True)

    parent: int
    neighbor: int
    lam: float


def check_classes(data: FeatureDataset, k: int) -> np.ndarray:
    counts = data.class_counts()
    if min(counts.values()) == 0:
        raise SingleClassDataset(
            f"both classes must be present, got {counts[0]} negative and {counts[1]} positive rows"
        )

    minority = data.minority_indices()
    if len(minority) <= k:
        raise TooFewMinoritySamples(
            f"{len(minority)} minority rows is not more than k_neighbors={k}"
        )

    return minority


def neighbor_table(data: FeatureDataset, minority: np.ndarray, k: int) -> np.ndarray:
    """Row r holds the k nearest minority rows of minority[r], as dataset indices"""
    points = data.features[minority]
    distances = cdist(points, points, metric="euclidean")
    np.fill_diagonal(distances, np.inf)

    # Stable sort over ascending indices breaks ties towards the lower row index
    order = np.argsort(distances, axis=1, kind="stable")[:, :k]
    return minority[order]


def knn_minority(data: FeatureDataset, i: int, k: int) -> list:
    minority = check_classes(data, k)
    position = np.flatnonzero(minority == i)
    if position.size == 0:
        raise InvalidParameter(f"row {i} is not a minority row")

    distances = cdist(data.features[[i]], data.features[minority], metric="euclidean")[0]
    distances[position[0]] = np.inf
    order = np.argsort(distances, kind="stable")[:k]

    return [int(index) for index in minority[order]]


def synthetic_count(data: FeatureDataset, target_ratio: float) -> int:
    counts = data.class_counts()
    minority_label = data.minority_label()
    minority, majority = counts[minority_label], counts[1 - minority_label]

    # Rounded first so that 0.3 * 10 doesn't become 4 through float error
    target = math.ceil(round(target_ratio * majority, 9))
    return max(0, target - minority)


def next_synthetic_number(ids: tuple) -> int:
    pattern = re.compile(re.escape(settings.SYNTHETIC_ID_PREFIX) + r"(\d+)")
    numbers = [int(m.group(1)) for m in map(pattern.fullmatch, ids) if m]
    return max(numbers, default=0) + 1


def smote_with_provenance(
    data: FeatureDataset, cfg: SmoteConfig, rng=None
) -> tuple:
    """
    rng only needs integers(low, high, size=) and uniform(low, high, size=),
    which lets tests substitute a stub that forces the neighbour and lam.
    """
    minority = check_classes(data, cfg.k_neighbors)
    count = synthetic_count(data, cfg.target_ratio)
    if rng is None:
        rng = np.random.default_rng(cfg.seed)

    if count == 0:
        return data, []

    neighbors = neighbor_table(data, minority, cfg.k_neighbors)

    # Parents cycle through the minority rows so every row contributes evenly
    slots = np.arange(count) % len(minority)
    choices = np.asarray(rng.integers(0, cfg.k_neighbors, size=count))
    lams = np.asarray(rng.uniform(0.0, 1.0, size=count), dtype=float)

    parents = minority[slots]
    partners = neighbors[slots, choices]
    x_parent = data.features[parents]
    synthetic = x_parent + lams[:, None] * (data.features[partners] - x_parent)

    label = data.minority_label()
    # Numbering continues after any synthetic rows already present
    first = next_synthetic_number(data.ids)
    augmented = FeatureDataset(
        ids=data.ids
        + tuple(f"{settings.SYNTHETIC_ID_PREFIX}{n}" for n in range(first, first + count)),
        features=np.vstack([data.features, synthetic]),
        labels=np.concatenate([data.labels, np.full(count, label, dtype=data.labels.dtype)]),
    )
    provenance = [
        Provenance(parent=int(p), neighbor=int(z), lam=float(lam))
        for p, z, lam in zip(parents, partners, lams)
    ]

    return augmented, provenance


def smote(data: FeatureDataset, cfg: SmoteConfig, rng: Optional[object] = None) -> FeatureDataset:
    augmented, _ = smote_with_provenance(data, cfg, rng)
    return augmented
