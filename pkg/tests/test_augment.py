import numpy as np
import pytest

from augment import (
    FeatureDataset,
    SmoteConfig,
    knn_minority,
    smote,
    smote_with_provenance,
    synthetic_count,
)
from errors import (
    DimensionMismatch,
    InvalidParameter,
    NonBinaryLabel,
    SingleClassDataset,
    TooFewMinoritySamples,
)


class FixedRng:
    """Always picks the nearest neighbour and the given lam"""

    def __init__(self, lam: float):
        self.lam = lam

    def integers(self, low, high, size=None):
        return np.zeros(size, dtype=int)

    def uniform(self, low, high, size=None):
        return np.full(size, self.lam)


def dataset(features, labels) -> FeatureDataset:
    features = np.asarray(features, dtype=float)
    return FeatureDataset(
        ids=tuple(f"r{i}" for i in range(len(features))),
        features=features,
        labels=np.asarray(labels, dtype=np.int8),
    )


def imbalanced(n_majority=100, n_minority=10, d=4, seed=0) -> FeatureDataset:
    rng = np.random.default_rng(seed)
    features = np.vstack([rng.normal(0, 1, (n_majority, d)), rng.normal(3, 1, (n_minority, d))])
    return dataset(features, [0] * n_majority + [1] * n_minority)


def test_midpoint_of_two_minority_rows():
    data = dataset([[0, 0], [1, 1], [5, 5], [6, 5], [5, 6]], [1, 1, 0, 0, 0])
    out = smote(data, SmoteConfig(k_neighbors=1), rng=FixedRng(0.5))

    assert len(out.ids) == 6
    np.testing.assert_allclose(out.features[-1], [0.5, 0.5])
    assert out.labels[-1] == 1
    assert out.ids[-1] == "synthetic-1"


def test_balances_100_to_10():
    data = imbalanced()
    out = smote(data, SmoteConfig(k_neighbors=5, seed=3))

    assert len(out.ids) == 200
    assert out.class_counts() == {0: 100, 1: 100}


def test_original_rows_kept_in_order():
    data = imbalanced()
    out = smote(data, SmoteConfig(seed=3))

    assert out.ids[: len(data.ids)] == data.ids
    np.testing.assert_array_equal(out.features[: len(data.ids)], data.features)
    np.testing.assert_array_equal(out.labels[: len(data.ids)], data.labels)
    assert all(i.startswith("synthetic-") for i in out.ids[len(data.ids):])


def test_partial_target_ratio():
    data = imbalanced(n_majority=10, n_minority=2)

    assert synthetic_count(data, 0.3) == 1
    assert synthetic_count(data, 0.1) == 0
    assert smote(data, SmoteConfig(k_neighbors=1, target_ratio=0.1)) is data


def test_repeated_oversampling_keeps_ids_unique():
    data = imbalanced()
    once = smote(data, SmoteConfig(k_neighbors=5, target_ratio=0.5, seed=3))
    twice = smote(once, SmoteConfig(k_neighbors=5, target_ratio=1.0, seed=4))

    assert once.ids[-40:] == tuple(f"synthetic-{n}" for n in range(1, 41))
    assert twice.ids[-50:] == tuple(f"synthetic-{n}" for n in range(41, 91))
    assert len(set(twice.ids)) == len(twice.ids) == 200


def test_minority_is_the_zero_class_when_rarer():
    data = dataset([[0.0], [1.0], [2.0], [3.0], [10.0], [11.0]], [1, 1, 1, 1, 0, 0])
    out = smote(data, SmoteConfig(k_neighbors=1))

    assert out.class_counts() == {0: 4, 1: 4}
    assert all(10.0 <= x <= 11.0 for x in out.features[len(data.ids):, 0])


def test_too_few_minority_rows():
    data = imbalanced(n_minority=5)
    with pytest.raises(TooFewMinoritySamples):
        smote(data, SmoteConfig(k_neighbors=5))


def test_single_class():
    data = dataset([[0.0], [1.0], [2.0]], [0, 0, 0])
    with pytest.raises(SingleClassDataset):
        smote(data, SmoteConfig(k_neighbors=1))


def test_dataset_validation():
    with pytest.raises(DimensionMismatch):
        FeatureDataset(ids=("a", "b"), features=np.zeros((3, 2)), labels=np.zeros(3))
    with pytest.raises(InvalidParameter):
        dataset([[0.0, np.nan]], [0])
    with pytest.raises(NonBinaryLabel):
        dataset([[0.0], [1.0]], [0, 2])


def test_knn_examples():
    data = dataset([[0.0], [1.0], [3.0], [7.0], [50.0], [51.0], [52.0], [53.0], [54.0]], [1, 1, 1, 1, 0, 0, 0, 0, 0])

    assert knn_minority(data, 0, 2) == [1, 2]
    assert knn_minority(data, 3, 1) == [2]
    with pytest.raises(InvalidParameter):
        knn_minority(data, 4, 1)


def test_knn_ties_go_to_lower_index():
    data = dataset([[0.0], [-1.0], [1.0], [9.0], [9.0], [9.0], [9.0]], [1, 1, 1, 0, 0, 0, 0])

    assert knn_minority(data, 0, 1) == [1]


def test_synthetic_rows_lie_on_segments():
    data = imbalanced(n_majority=1100, n_minority=20, d=3, seed=8)
    out, provenance = smote_with_provenance(data, SmoteConfig(k_neighbors=5, seed=4))

    assert len(provenance) >= 1000
    minority = set(data.minority_indices().tolist())
    synthetic = out.features[len(data.ids):]
    for x, p in zip(synthetic, provenance):
        assert p.parent in minority and p.neighbor in minority
        assert p.parent != p.neighbor
        assert 0.0 <= p.lam <= 1.0
        expected = data.features[p.parent] + p.lam * (data.features[p.neighbor] - data.features[p.parent])
        np.testing.assert_allclose(x, expected, atol=1e-12)


def test_synthetic_rows_within_minority_bounding_box():
    data = imbalanced(seed=5)
    out = smote(data, SmoteConfig(seed=6))
    minority = data.features[data.minority_indices()]
    synthetic = out.features[len(data.ids):]

    assert (synthetic >= minority.min(axis=0) - 1e-12).all()
    assert (synthetic <= minority.max(axis=0) + 1e-12).all()
    assert (out.labels[len(data.ids):] == 1).all()


def test_neighbours_come_from_k_nearest():
    data = imbalanced(seed=2)
    out, provenance = smote_with_provenance(data, SmoteConfig(k_neighbors=3, seed=2))

    for p in provenance:
        assert p.neighbor in knn_minority(data, p.parent, 3)


def test_deterministic_for_seed():
    data = imbalanced()
    first = smote(data, SmoteConfig(seed=17))
    second = smote(data, SmoteConfig(seed=17))
    other = smote(data, SmoteConfig(seed=18))

    np.testing.assert_array_equal(first.features, second.features)
    assert not np.array_equal(first.features, other.features)
