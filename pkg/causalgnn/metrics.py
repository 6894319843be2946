"""Ranking metrics for imbalanced binary forecasts and the evaluation report"""

import os

import numpy as np

from causalgnn import log, system
from causalgnn.errors import ContractError, DataError


__all__ = ('UndefinedMetricError', 'pr_curve', 'roc_curve', 'auprc', 'auroc', 'EvalReport', 'evaluate')


logger = log.get_logger(__name__)


class UndefinedMetricError(DataError):
    """The metric needs both classes among the labels"""


def _check(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.ndim != 1 or scores.shape != labels.shape:
        raise ContractError('scores and labels must be vectors of equal length')
    if not np.all((labels == 0) | (labels == 1)):
        raise ContractError('labels must be 0 or 1')
    if not np.isfinite(scores).all():
        raise ContractError('scores must be finite')
    positives = int(labels.sum())
    if positives == 0 or positives == labels.size:
        raise UndefinedMetricError('the metric is undefined when only one class is present')
    return scores, labels.astype(np.int64)


def _threshold_counts(scores, labels):
    """Cumulative true and false positives at every distinct score, highest threshold first"""
    order = np.argsort(-scores, kind='stable')
    scores, labels = scores[order], labels[order]
    last_of_group = np.r_[np.flatnonzero(np.diff(scores)), scores.size - 1]
    true_positives = np.cumsum(labels)[last_of_group]
    false_positives = (last_of_group + 1) - true_positives
    return true_positives, false_positives, scores[last_of_group]


def pr_curve(scores, labels):
    """(precision, recall, thresholds), one point per distinct score; tied scores form one step"""
    scores, labels = _check(scores, labels)
    true_positives, false_positives, thresholds = _threshold_counts(scores, labels)
    precision = true_positives / (true_positives + false_positives)
    recall = true_positives / labels.sum()
    return precision, recall, thresholds


def roc_curve(scores, labels):
    """(false positive rate, true positive rate, thresholds) starting at the origin"""
    scores, labels = _check(scores, labels)
    true_positives, false_positives, thresholds = _threshold_counts(scores, labels)
    tpr = np.r_[0.0, true_positives / labels.sum()]
    fpr = np.r_[0.0, false_positives / (labels.size - labels.sum())]
    return fpr, tpr, np.r_[np.inf, thresholds]


def auprc(scores, labels):
    """Average precision: sum of precision × recall increment over the distinct thresholds"""
    precision, recall, _ = pr_curve(scores, labels)
    increments = np.diff(np.r_[0.0, recall])
    return float(np.sum(precision * increments))


def auroc(scores, labels):
    """Mann-Whitney statistic: P(positive outranks negative) with ties counted one half"""
    scores, labels = _check(scores, labels)
    _, inverse, counts = np.unique(scores, return_inverse=True, return_counts=True)
    ranks = (np.cumsum(counts) - (counts - 1) / 2.0)[inverse]
    positives = labels.sum()
    negatives = labels.size - positives
    statistic = ranks[labels == 1].sum() - positives * (positives + 1) / 2.0
    return float(statistic / (positives * negatives))


class EvalReport(object):
    """Test metrics of one model kind over its seeds"""

    def __init__(self, model, horizon, seeds, scores, labels):
        labels = np.asarray(labels)
        if len(seeds) != len(scores) or not seeds:
            raise ContractError('need one score vector per seed')
        self.model = model
        self.horizon = horizon
        self.seeds = [int(seed) for seed in seeds]
        self.positive_fraction = float(labels.mean())
        self.sample_count = int(labels.size)
        self.auprc = [auprc(item, labels) for item in scores]
        self.auroc = [auroc(item, labels) for item in scores]
        self.pr_curves = [pr_curve(item, labels) for item in scores]
        self.roc_curves = [roc_curve(item, labels) for item in scores]

    def __repr__(self):
        return '%s(%r, auprc=%.4f, auroc=%.4f)' % (self.__class__.__name__, self.model, self.mean_auprc, self.mean_auroc)

    @property
    def mean_auprc(self):
        return float(np.mean(self.auprc))

    @property
    def mean_auroc(self):
        return float(np.mean(self.auroc))

    @property
    def std_auprc(self):
        return float(np.std(self.auprc))

    @property
    def std_auroc(self):
        return float(np.std(self.auroc))

    @property
    def random_auprc(self):
        return self.positive_fraction

    @property
    def random_auroc(self):
        return 0.5

    def to_json(self):
        return {'model': self.model,
                'horizon': self.horizon,
                'samples': self.sample_count,
                'positive_fraction': self.positive_fraction,
                'random_auprc': self.random_auprc,
                'random_auroc': self.random_auroc,
                'seeds': [{'seed': seed, 'auprc': pr, 'auroc': roc} for seed, pr, roc in zip(self.seeds, self.auprc, self.auroc)],
                'mean_auprc': self.mean_auprc,
                'mean_auroc': self.mean_auroc,
                'std_auprc': self.std_auprc,
                'std_auroc': self.std_auroc}

    def curve_rows(self):
        for seed, (precision, recall, pr_thresholds), (fpr, tpr, roc_thresholds) in zip(self.seeds, self.pr_curves, self.roc_curves):
            for x, y, threshold in zip(recall, precision, pr_thresholds):
                yield [seed, 'pr', x, y, threshold]
            for x, y, threshold in zip(fpr, tpr, roc_thresholds):
                yield [seed, 'roc', x, y, threshold]

    def save(self, directory):
        """Write <model>_report.json and <model>_curves.csv into directory"""
        system.makedirs(directory)
        system.write_json(os.path.join(directory, '%s_report.json' % self.model), self.to_json())
        system.write_csv(os.path.join(directory, '%s_curves.csv' % self.model), ['seed', 'curve', 'x', 'y', 'threshold'], self.curve_rows())
        logger.info('%s: AUPRC %.4f ± %.4f, AUROC %.4f ± %.4f (random AUPRC %.4f)', self.model, self.mean_auprc, self.std_auprc,
                    self.mean_auroc, self.std_auroc, self.random_auprc)


def evaluate(results, test):
    """EvalReport of trained runs (one per seed) on the untouched test split"""
    if not results:
        raise ContractError('nothing to evaluate')
    scores = [result.model.confidence(test) for result in results]
    return EvalReport(results[0].kind, test.horizon, [result.seed for result in results], scores, test.y)
