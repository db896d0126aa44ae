"""Synthetic generators: shapes, seeding, and statistical sanity."""

import numpy as np
import pytest

from vizgrad.dataset import CATEGORICAL, QUANTITATIVE
from vizgrad.datagen import correlated_pairs, gaussian_blobs, generate, uniform_noise
from vizgrad.errors import DataError


def test_blobs_shape_labels_and_determinism():
    d = gaussian_blobs(200, seed=5, blobs=4, spread=0.05)
    assert d.n_items == 200
    names = {a.name: a for a in d.attributes}
    assert names["x"].kind == QUANTITATIVE and names["y"].kind == QUANTITATIVE
    assert names["blob"].kind == CATEGORICAL
    assert names["blob"].levels == ("b0", "b1", "b2", "b3")
    assert set(np.unique(d.columns["blob"])) <= set(range(4))
    again = gaussian_blobs(200, seed=5, blobs=4, spread=0.05)
    np.testing.assert_array_equal(d.columns["x"], again.columns["x"])
    other = gaussian_blobs(200, seed=6, blobs=4, spread=0.05)
    assert not np.array_equal(d.columns["x"], other.columns["x"])


def test_blobs_cluster_around_their_centers():
    d = gaussian_blobs(3000, seed=1, blobs=2, spread=0.02)
    lab = d.columns["blob"]
    for k in (0, 1):
        sel = lab == k
        # within-cluster spread tracks the requested sigma
        assert np.std(d.columns["x"][sel]) < 0.05
    with pytest.raises(DataError):
        gaussian_blobs(0, seed=0)
    with pytest.raises(DataError):
        gaussian_blobs(10, seed=0, blobs=0)


def test_correlated_pairs_hit_requested_rho():
    d = correlated_pairs(20_000, seed=2, rho=0.7)
    got = np.corrcoef(d.columns["x"], d.columns["y"])[0, 1]
    assert got == pytest.approx(0.7, abs=0.03)
    with pytest.raises(DataError):
        correlated_pairs(10, seed=0, rho=1.0)


def test_uniform_noise_fills_unit_square():
    d = uniform_noise(5000, seed=3)
    for col in ("x", "y"):
        v = d.columns[col]
        assert v.min() >= 0.0 and v.max() <= 1.0
        assert np.mean(v) == pytest.approx(0.5, abs=0.03)


def test_generate_dispatch():
    assert generate("blobs", 10, 0, blobs=2).n_items == 10
    assert generate("correlated", 10, 0, rho=0.5).n_items == 10
    assert generate("uniform", 10, 0).n_items == 10
    with pytest.raises(DataError, match="unknown generator"):
        generate("spiral", 10, 0)
