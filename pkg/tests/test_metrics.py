import itertools
import os

import numpy as np
import numpy.testing as npt
import pytest

from causalgnn import system
from causalgnn.errors import ContractError
from causalgnn.metrics import EvalReport, UndefinedMetricError, auprc, auroc, pr_curve, roc_curve


def brute_force_auroc(scores, labels):
    positives = [s for s, y in zip(scores, labels) if y == 1]
    negatives = [s for s, y in zip(scores, labels) if y == 0]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p, n in itertools.product(positives, negatives))
    return wins / (len(positives) * len(negatives))


def brute_force_auprc(scores, labels):
    total, previous_recall = 0.0, 0.0
    for threshold in sorted(set(scores), reverse=True):
        selected = [y for s, y in zip(scores, labels) if s >= threshold]
        recall = sum(selected) / sum(labels)
        total += (sum(selected) / len(selected)) * (recall - previous_recall)
        previous_recall = recall
    return total


class TestAgainstBruteForce:
    @pytest.mark.parametrize('size', range(2, 13))
    def test_every_labelling_with_distinct_scores(self, size):
        scores = np.random.default_rng(size).permutation(size) / size + 0.05
        for labels in itertools.product((0, 1), repeat=size):
            if 0 < sum(labels) < size:
                assert auroc(scores, labels) == pytest.approx(brute_force_auroc(list(scores), list(labels)), abs=1e-12)
                assert auprc(scores, labels) == pytest.approx(brute_force_auprc(list(scores), list(labels)), abs=1e-12)

    def test_random_samples_with_ties(self):
        rng = np.random.default_rng(3)
        for _ in range(120):
            size = int(rng.integers(4, 13))
            labels = np.zeros(size, dtype=int)
            labels[rng.choice(size, size=int(rng.integers(1, size)), replace=False)] = 1
            scores = rng.integers(0, 4, size=size).astype(float)
            assert auroc(scores, labels) == pytest.approx(brute_force_auroc(list(scores), list(labels)), abs=1e-12)
            assert auprc(scores, labels) == pytest.approx(brute_force_auprc(list(scores), list(labels)), abs=1e-12)


def test_auroc_ignores_strictly_monotone_transforms():
    rng = np.random.default_rng(4)
    labels = np.arange(60) % 3 == 0
    scores = np.round(rng.normal(size=60), 1)
    expected = auroc(scores, labels)
    assert auroc(np.exp(scores), labels) == expected
    assert auroc(3.0 * scores - 2.0, labels) == expected


def test_random_scorer_concentrates_at_the_positive_fraction():
    size, positives = 5000, 55
    labels = np.zeros(size, dtype=int)
    labels[:positives] = 1
    rng = np.random.default_rng(12)
    values = np.array([auprc(rng.random(size), labels) for _ in range(1000)])
    fraction = positives / size
    assert abs(values.mean() - fraction) < 3 * np.sqrt(fraction * (1 - fraction) / size)
    # expected average precision of a uniformly random ranking
    harmonic = np.sum(1.0 / np.arange(1, size + 1))
    expected = (positives - 1) / (size - 1) + harmonic * (size - positives) / (size * (size - 1))
    assert abs(values.mean() - expected) < 4 * values.std() / np.sqrt(len(values))


class TestEdgeCases:
    def test_perfect_ranking(self):
        scores, labels = [0.9, 0.8, 0.3, 0.1], [1, 1, 0, 0]
        assert auprc(scores, labels) == 1.0
        assert auroc(scores, labels) == 1.0

    def test_inverted_ranking(self):
        assert auroc([0.1, 0.2, 0.8, 0.9], [1, 1, 0, 0]) == 0.0

    def test_constant_scores_give_the_chance_level(self):
        labels = np.array([1, 0, 0, 0, 1, 0, 0, 0, 0, 0])
        scores = np.full(10, 0.3)
        assert auprc(scores, labels) == pytest.approx(0.2)
        assert auroc(scores, labels) == 0.5

    def test_single_class_is_undefined(self):
        with pytest.raises(UndefinedMetricError):
            auprc([0.1, 0.5], [0, 0])
        with pytest.raises(UndefinedMetricError):
            auroc([0.1, 0.5], [1, 1])

    def test_rejects_mismatched_inputs(self):
        with pytest.raises(ContractError):
            auprc([0.1, 0.2, 0.3], [0, 1])
        with pytest.raises(ContractError):
            auroc([0.1, np.nan], [0, 1])

    def test_random_scores_give_half_the_roc_area(self):
        rng = np.random.default_rng(11)
        labels = (rng.random(5000) < 0.1).astype(int)
        assert auroc(rng.random(5000), labels) == pytest.approx(0.5, abs=0.05)


class TestCurves:
    def test_one_point_per_distinct_score(self):
        precision, recall, thresholds = pr_curve([0.9, 0.9, 0.5, 0.1], [1, 0, 1, 0])
        npt.assert_allclose(thresholds, [0.9, 0.5, 0.1])
        npt.assert_allclose(precision, [0.5, 2 / 3, 0.5])
        npt.assert_allclose(recall, [0.5, 1.0, 1.0])

    def test_roc_runs_from_the_origin_to_the_corner(self):
        fpr, tpr, thresholds = roc_curve([0.9, 0.7, 0.4, 0.2], [1, 0, 1, 0])
        assert (fpr[0], tpr[0]) == (0.0, 0.0)
        assert (fpr[-1], tpr[-1]) == (1.0, 1.0)
        assert thresholds[0] == np.inf


class TestEvalReport:
    def report(self):
        labels = np.array([1, 0, 0, 1, 0, 0, 0, 0])
        scores = [np.linspace(1.0, 0.0, 8), labels * 0.5 + 0.1]
        return EvalReport('gnn_causal', 2, [0, 1], scores, labels)

    def test_summary(self):
        report = self.report()
        assert report.auprc[1] == 1.0
        assert report.random_auprc == 0.25
        assert report.mean_auroc == pytest.approx((auroc(np.linspace(1.0, 0.0, 8), [1, 0, 0, 1, 0, 0, 0, 0]) + 1.0) / 2)
        assert report.std_auprc == pytest.approx(np.std(report.auprc))

    def test_needs_one_score_vector_per_seed(self):
        with pytest.raises(ContractError):
            EvalReport('lstm', 1, [0, 1], [np.zeros(4)], np.array([0, 1, 0, 1]))

    def test_save(self, tmp_path):
        report = self.report()
        report.save(str(tmp_path))
        document = system.read_json(os.path.join(str(tmp_path), 'gnn_causal_report.json'))
        assert document['horizon'] == 2
        assert [entry['seed'] for entry in document['seeds']] == [0, 1]
        assert document['mean_auprc'] == pytest.approx(report.mean_auprc)
        header, rows = system.read_csv(os.path.join(str(tmp_path), 'gnn_causal_curves.csv'))
        assert header == ['seed', 'curve', 'x', 'y', 'threshold']
        assert {row[1] for row in rows} == {'pr', 'roc'}
