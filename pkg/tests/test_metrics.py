import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from speechscreen.metrics import aggregate_folds, confusion_and_scores, mean_std, roc_auc, roc_csv

from tests.helpers import pair_count_auc


class TestConfusionAndScores:
    def test_spec_example(self):
        out = confusion_and_scores(["ASD", "ASD", "NT", "NT"], ["ASD", "NT", "NT", "NT"])
        cm = out.confusion
        assert (cm.tp, cm.fn, cm.tn, cm.fp) == (1, 1, 2, 0)
        assert out.accuracy == 0.75
        assert out.positive.precision == 1.0
        assert out.positive.recall == 0.5
        assert out.positive.f1 == pytest.approx(2 / 3)
        assert not out.positive.degenerate

    def test_all_correct(self):
        y = ["ASD", "NT", "ASD", "NT"]
        out = confusion_and_scores(y, y)
        assert out.accuracy == 1.0
        assert out.positive.precision == 1.0
        assert out.positive.recall == 1.0
        assert out.positive.f1 == 1.0
        assert out.weighted.f1 == 1.0

    def test_no_positive_predictions_degenerate(self):
        out = confusion_and_scores(["ASD", "NT"], ["NT", "NT"])
        assert out.positive.precision == 0.0
        assert out.positive.degenerate

    def test_weighted_recall_equals_accuracy(self):
        rng = np.random.default_rng(2)
        y = np.where(rng.random(50) < 0.3, "ASD", "NT").astype(object)
        p = np.where(rng.random(50) < 0.5, "ASD", "NT").astype(object)
        out = confusion_and_scores(y, p)
        assert out.weighted.recall == pytest.approx(out.accuracy, abs=1e-12)

    def test_weighted_equals_macro_on_balanced_data(self):
        rng = np.random.default_rng(3)
        y = np.array(["ASD"] * 25 + ["NT"] * 25, dtype=object)
        p = np.where(rng.random(50) < 0.5, "ASD", "NT").astype(object)
        out = confusion_and_scores(y, p)
        cm = out.confusion
        prec_pos = cm.tp / (cm.tp + cm.fp) if cm.tp + cm.fp else 0.0
        prec_neg = cm.tn / (cm.tn + cm.fn) if cm.tn + cm.fn else 0.0
        assert out.weighted.precision == pytest.approx((prec_pos + prec_neg) / 2, abs=1e-12)

    def test_accuracy_equals_mean_match(self):
        rng = np.random.default_rng(4)
        y = np.where(rng.random(81) < 0.4, "ASD", "NT").astype(object)
        p = np.where(rng.random(81) < 0.6, "ASD", "NT").astype(object)
        out = confusion_and_scores(y, p)
        assert out.accuracy == np.mean(y == p)

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="length"):
            confusion_and_scores(["ASD"], ["ASD", "NT"])

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            confusion_and_scores([], [])


class TestRocAuc:
    def test_perfect_ranking(self):
        y = ["ASD", "ASD", "NT", "NT"]
        curve = roc_auc(y, [0.9, 0.8, 0.2, 0.1])
        assert curve.auc == 1.0

    def test_inverted_ranking(self):
        y = ["ASD", "ASD", "NT", "NT"]
        curve = roc_auc(y, [0.1, 0.2, 0.8, 0.9])
        assert curve.auc == 0.0

    def test_endpoints_and_monotonicity(self):
        rng = np.random.default_rng(5)
        y = np.where(rng.random(60) < 0.5, "ASD", "NT").astype(object)
        s = np.round(rng.random(60), 1)  # plenty of ties
        curve = roc_auc(y, s)
        assert (curve.fpr[0], curve.tpr[0]) == (0.0, 0.0)
        assert (curve.fpr[-1], curve.tpr[-1]) == (1.0, 1.0)
        assert np.all(np.diff(curve.fpr) >= 0)
        assert np.all(np.diff(curve.tpr) >= 0)
        assert math.isinf(curve.thresholds[0])

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(5, 200), st.integers(1, 10))
    def test_matches_pair_counting_oracle(self, seed, n, levels):
        rng = np.random.default_rng(seed)
        y01 = rng.integers(0, 2, size=n)
        if y01.min() == y01.max():
            y01[0] = 1 - y01[0]
        scores = np.round(rng.random(n) * levels) / levels  # quantized -> ties
        labels = np.where(y01 == 1, "ASD", "NT").astype(object)
        curve = roc_auc(labels, scores)
        assert curve.auc == pytest.approx(pair_count_auc(y01, scores), abs=1e-9)

    def test_increasing_transform_invariance(self):
        rng = np.random.default_rng(6)
        y = np.where(rng.random(100) < 0.5, "ASD", "NT").astype(object)
        y[0], y[1] = "ASD", "NT"
        s = rng.normal(size=100)
        base = roc_auc(y, s).auc
        assert roc_auc(y, 2.0 * s + 1.0).auc == pytest.approx(base, abs=1e-12)
        assert roc_auc(y, s**3).auc == pytest.approx(base, abs=1e-12)

    def test_single_class_undefined(self):
        with pytest.raises(ValueError, match="one class"):
            roc_auc(["ASD", "ASD"], [0.4, 0.6])

    def test_csv_format(self):
        curve = roc_auc(["ASD", "NT"], [0.75, 0.25])
        text = roc_csv(curve, comments=["# fold 0"])
        lines = text.splitlines()
        assert lines[0] == "# fold 0"
        assert lines[1] == "threshold,fpr,tpr"
        assert lines[2].startswith("inf,0.0,0.0")


class TestAggregation:
    def test_constant_folds(self):
        mean, std = mean_std([0.7] * 5)
        assert (mean, std) == (0.7, 0.0)

    def test_spec_two_value_example(self):
        mean, std = mean_std([0.8, 0.6])
        assert mean == pytest.approx(0.7)
        assert std == pytest.approx(math.sqrt(0.02))

    def test_single_value_std_zero(self):
        assert mean_std([0.5]) == (0.5, 0.0)

    def test_aggregate_mirrors_metric_names(self):
        folds = [
            {"accuracy": 0.7, "precision": 0.6, "recall": 0.8, "f1": 0.7, "auroc": 0.9},
            {"accuracy": 0.8, "precision": 0.7, "recall": 0.7, "f1": 0.8, "auroc": None},
        ]
        agg = aggregate_folds(folds)
        assert set(agg) == {"accuracy", "precision", "recall", "f1", "auroc"}
        assert agg["accuracy"]["mean"] == pytest.approx(0.75)
        assert agg["auroc"]["n"] == 1
        assert agg["auroc"]["excluded"] == 1

    def test_all_absent_metric_rejected(self):
        with pytest.raises(ValueError, match="no present values"):
            aggregate_folds([{"auroc": None}, {"auroc": None}])

    def test_empty_folds_rejected(self):
        with pytest.raises(ValueError, match="no folds"):
            aggregate_folds([])
