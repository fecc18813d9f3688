import numpy as np
import pytest
from sklearn.linear_model import LogisticRegression

from dartsprime.data import DatasetSpec, generate_dataset


def test_moons_shapes_and_standardization():
    ds = generate_dataset(DatasetSpec(size=2000, seed=101))
    assert ds.x.shape == (2000, 2) and ds.x_test.shape == (1000, 2)
    assert set(np.unique(ds.y)) == {0, 1}
    np.testing.assert_allclose(ds.x.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(ds.x.std(axis=0), 1.0, atol=1e-12)


def test_noise_free_moons_are_not_linearly_separable():
    ds = generate_dataset(DatasetSpec(noise=0.0, size=1000, seed=1))
    probe = LogisticRegression().fit(ds.x, ds.y)
    assert probe.score(ds.x, ds.y) < 0.95


def test_same_seed_same_data():
    a = generate_dataset(DatasetSpec(seed=3))
    b = generate_dataset(DatasetSpec(seed=3))
    c = generate_dataset(DatasetSpec(seed=4))
    assert a.x.tobytes() == b.x.tobytes() and a.y.tobytes() == b.y.tobytes()
    assert a.x.tobytes() != c.x.tobytes()


def test_separated_blobs_are_linearly_separable():
    ds = generate_dataset(DatasetSpec(kind="blobs", classes=3, noise=0.5, seed=2))
    probe = LogisticRegression(max_iter=1000).fit(ds.x, ds.y)
    assert probe.score(ds.x_test, ds.y_test) >= 0.99


def test_spirals_have_all_classes():
    ds = generate_dataset(DatasetSpec(kind="spirals", classes=3, noise=0.05, seed=0))
    assert set(np.unique(ds.y)) == {0, 1, 2}


@pytest.mark.parametrize("bad", [dict(kind="mnist"), dict(size=2), dict(classes=3), dict(noise=-1.0)])
def test_invalid_specs(bad):
    with pytest.raises(ValueError):
        generate_dataset(DatasetSpec(**bad))
