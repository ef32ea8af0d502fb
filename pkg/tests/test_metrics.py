import numpy as np
import pytest

from sattext.sat_corpus import Example
from sattext.sat_errors import UsageError
from sattext.sat_metrics import classification_scores, evaluate
from sattext.sat_model import MainNetwork


class TestClassificationScores:
    def test_perfect(self):
        assert classification_scores([0, 1, 2, 1], [0, 1, 2, 1], 3) == (1.0, 1.0)

    def test_collapsed_binary_predictor(self):
        acc, f1 = classification_scores([0, 1], [0, 0], 2)
        assert acc == 0.5
        # class 0: P = 1/2, R = 1, F1 = 2/3; class 1 is never predicted
        assert f1 == pytest.approx(1 / 3)

    def test_absent_class_counts_as_zero(self):
        acc, f1 = classification_scores([0, 1, 0, 1], [0, 1, 0, 1], 3)
        assert acc == 1.0
        assert f1 == pytest.approx(2 / 3)

    def test_empty(self):
        with pytest.raises(UsageError):
            classification_scores([], [], 2)

    def test_bounds(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            y, p = rng.integers(0, 4, size=30), rng.integers(0, 4, size=30)
            acc, f1 = classification_scores(y, p, 4)
            assert 0.0 <= f1 <= 1.0
            assert acc == pytest.approx(np.mean(y == p))


class TestEvaluate:
    def _examples(self, labels):
        return [Example(uid=str(i), text="", words=(), tokens=(2 + i % 3,), label=y) for i, y in enumerate(labels)]

    def test_matches_predict(self):
        model = MainNetwork(10, 3, np.random.default_rng(1), init_scale=1.0)
        examples = self._examples([0, 1, 2, 0, 1])
        preds = model.predict([ex.tokens for ex in examples])
        expected = classification_scores([ex.label for ex in examples], preds, 3)
        assert evaluate(model, examples, batch_size=2) == expected

    def test_unlabeled_rejected(self):
        model = MainNetwork(10, 3, np.random.default_rng(1))
        with pytest.raises(UsageError):
            evaluate(model, self._examples([0, None]))

    def test_empty_rejected(self):
        with pytest.raises(UsageError):
            evaluate(MainNetwork(10, 3, np.random.default_rng(1)), [])
