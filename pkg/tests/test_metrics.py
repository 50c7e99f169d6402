import numpy as np
import pytest

from topomoe.metrics import auc_per_task, mean_over_valid, rmse_per_task, roc_auc

from .oracles import auc_pair_oracle


class TestRmse:
    def test_perfect_predictions(self):
        p = np.array([[1.0], [2.0]])
        assert rmse_per_task(p, p, np.ones_like(p)) == [0.0]

    def test_hand_value(self):
        p = np.array([[0.0], [0.0]])
        t = np.array([[3.0], [4.0]])
        (val,) = rmse_per_task(p, t, np.ones_like(p))
        assert val == pytest.approx(np.sqrt(12.5), abs=1e-12)

    def test_masked_entries_excluded(self):
        p = np.array([[0.0, 9.0], [0.0, 9.0]])
        t = np.array([[1.0, 0.0], [1.0, 0.0]])
        m = np.array([[1.0, 0.0], [1.0, 0.0]])
        vals = rmse_per_task(p, t, m)
        assert vals[0] == pytest.approx(1.0)
        assert np.isnan(vals[1])


class TestRocAuc:
    def test_known_value(self):
        assert roc_auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == pytest.approx(0.75)

    def test_perfect_separation(self):
        assert roc_auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == pytest.approx(1.0)

    def test_constant_predictor_is_half(self):
        assert roc_auc([0.5, 0.5, 0.5, 0.5], [0, 1, 0, 1]) == pytest.approx(0.5)

    def test_single_class_is_nan(self):
        assert np.isnan(roc_auc([0.1, 0.9], [1, 1]))

    def test_matches_pair_counting_oracle(self, rng):
        for _ in range(20):
            n = int(rng.integers(4, 30))
            scores = np.round(rng.uniform(size=n), 2)  # rounding forces ties
            labels = rng.integers(0, 2, size=n)
            if labels.sum() in (0, n):
                continue
            assert roc_auc(scores, labels) == pytest.approx(
                auc_pair_oracle(scores, labels), abs=1e-12
            )


class TestPerTask:
    def test_warns_and_excludes_single_class_task(self, rng):
        scores = rng.uniform(size=(6, 2))
        labels = np.zeros((6, 2))
        labels[:3, 0] = 1.0  # task 0 has both classes, task 1 only negatives
        masks = np.ones((6, 2))
        with pytest.warns(UserWarning, match="task 1"):
            vals = auc_per_task(scores, labels, masks)
        assert not np.isnan(vals[0])
        assert np.isnan(vals[1])
        assert mean_over_valid(vals) == pytest.approx(vals[0])
