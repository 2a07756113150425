"""Clustering and chance-corrected alignment scoring."""

import numpy as np
import pytest

from smaug.analysis import adjusted_mutual_info, curve_area, kmeans


class TestKmeans:
    def test_separated_blobs_recovered(self):
        rng = np.random.default_rng(0)
        centers = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]])
        points = np.concatenate([c + 0.1 * rng.normal(size=(40, 2))
                                 for c in centers])
        labels = kmeans(points, 3, np.random.default_rng(1))
        truth = np.repeat(np.arange(3), 40)
        assert adjusted_mutual_info(labels, truth) > 0.99

    def test_deterministic_given_rng(self):
        rng_data = np.random.default_rng(2)
        pts = rng_data.normal(size=(60, 3))
        a = kmeans(pts, 4, np.random.default_rng(5))
        b = kmeans(pts, 4, np.random.default_rng(5))
        assert np.array_equal(a, b)


class TestAdjustedMutualInfo:
    def test_identical_labelings_score_one(self):
        labels = np.array([0, 0, 1, 1, 2, 2, 3, 3] * 5)
        assert adjusted_mutual_info(labels, labels) == pytest.approx(1.0)

    def test_permuted_names_score_one(self):
        labels = np.array([0, 1, 2, 0, 1, 2] * 10)
        renamed = (labels + 1) % 3
        assert adjusted_mutual_info(labels, renamed) == pytest.approx(1.0)

    def test_random_labelings_near_zero(self):
        rng = np.random.default_rng(3)
        scores = [
            adjusted_mutual_info(rng.integers(4, size=500),
                                 rng.integers(4, size=500))
            for _ in range(20)
        ]
        assert all(abs(s) < 0.05 for s in scores)
        assert abs(np.mean(scores)) < 0.01

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="differ"):
            adjusted_mutual_info(np.zeros(3), np.zeros(4))

    def test_trivial_single_cluster_pair(self):
        assert adjusted_mutual_info(np.zeros(10), np.zeros(10)) == 1.0


def test_curve_area_trapezoid():
    assert curve_area([0, 10], [1.0, 1.0]) == pytest.approx(10.0)
    assert curve_area([0, 10, 20], [0.0, 1.0, 0.0]) == pytest.approx(10.0)
    assert curve_area([5], [3.0]) == 0.0
