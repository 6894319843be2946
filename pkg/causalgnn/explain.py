"""
Shapley value attribution of model confidence to groups of input coordinates.

Coordinates outside a coalition are replaced by the mean of a background
set. The value of a coalition is the positive class confidence of the model
on the resulting input, so the value of the empty coalition (the baseline) is
the confidence at the background mean.
"""

import math
import os
from dataclasses import dataclass

import numpy as np

from causalgnn import log, system
from causalgnn.errors import ContractError
from causalgnn.notification import NotificationCenter, NotificationData
from causalgnn.python.threadpool import run_jobs


__all__ = ('ComplexityError', 'Feature', 'Attribution', 'ModelValueFunction', 'default_groups', 'shapley_estimate',
           'exact_shapley', 'aggregate_abs_by_lag', 'explain_samples', 'local_scatter_rows', 'save_attributions')


logger = log.get_logger(__name__)

MAX_EXACT_GROUPS = 12


class ComplexityError(ContractError):
    """Exact enumeration was requested for too many groups"""


@dataclass(frozen=True)
class Feature(object):
    """A group of input coordinates: a whole local window (lag None) or one lag of an index"""

    variable: str
    kind: str
    lag: int
    coordinates: tuple

    @property
    def label(self):
        return self.variable if self.lag is None else '%s@%d' % (self.variable, self.lag)


@dataclass
class Attribution(object):
    values: np.ndarray
    features: tuple
    baseline: float
    prediction: float
    sample: int = None

    @property
    def efficiency_gap(self):
        """prediction - (baseline + sum of values); zero up to rounding"""
        return self.prediction - (self.baseline + float(self.values.sum()))


class ModelValueFunction(object):
    """Positive class confidence of a model on rows of flattened inputs laid out like a template batch"""

    def __init__(self, model, template, chunk_size=1024):
        self.model = model
        self.template = template
        self.chunk_size = chunk_size

    def __call__(self, inputs):
        return self.model.confidence(self.template.with_flat_inputs(inputs), self.chunk_size)


def default_groups(local_names, oci_names, local_window, oci_window):
    """
    One group per local variable (its whole window) and one per index and
    lag; lag 0 is the most recent index step.
    """
    groups = []
    for position, name in enumerate(local_names):
        start = position * local_window
        groups.append(Feature(name, 'local', None, tuple(range(start, start + local_window))))
    offset = len(local_names) * local_window
    for position, name in enumerate(oci_names):
        for lag in range(oci_window):
            step = oci_window - 1 - lag
            groups.append(Feature(name, 'oci', lag, (offset + position * oci_window + step,)))
    return groups


def _prepare(sample, background, groups):
    sample = np.asarray(sample, dtype=np.float64).ravel()
    background = np.asarray(background, dtype=np.float64)
    if background.ndim == 1:
        background = background[None, :]
    if background.shape[0] < 1 or background.shape[1] != sample.size:
        raise ContractError('background must be a non-empty N×%d matrix' % sample.size)
    groups = [group if isinstance(group, Feature) else Feature('g%d' % index, 'group', None, tuple(group)) for index, group in enumerate(groups)]
    if not groups:
        raise ContractError('at least one feature group is required')
    seen = set()
    for group in groups:
        if not group.coordinates:
            raise ContractError('feature group %s is empty' % group.label)
        if seen.intersection(group.coordinates):
            raise ContractError('feature groups overlap at %s' % group.label)
        if min(group.coordinates) < 0 or max(group.coordinates) >= sample.size:
            raise ContractError('feature group %s refers to missing coordinates' % group.label)
        seen.update(group.coordinates)
    return sample, background.mean(axis=0), groups


def shapley_estimate(value_fn, sample, background, groups, n_permutations=500, rng=None, chunk_size=64):
    """
    Permutation sampling estimate: for each random order of the groups the
    marginal contribution of every group is the change in value when it joins
    the groups before it. The contributions of one order always add up to
    prediction - baseline.
    """
    sample, reference, groups = _prepare(sample, background, groups)
    if n_permutations < 1:
        raise ContractError('need at least one permutation')
    rng = rng if rng is not None else np.random.default_rng()
    count = len(groups)
    coordinates = [np.array(group.coordinates) for group in groups]
    totals = np.zeros(count)
    baseline = prediction = None
    for start in range(0, n_permutations, chunk_size):
        orders = [rng.permutation(count) for _ in range(min(chunk_size, n_permutations - start))]
        inputs = np.empty((len(orders), count + 1, sample.size))
        for row, order in enumerate(orders):
            current = reference.copy()
            inputs[row, 0] = current
            for position, group in enumerate(order, 1):
                current[coordinates[group]] = sample[coordinates[group]]
                inputs[row, position] = current
        values = np.asarray(value_fn(inputs.reshape(-1, sample.size)), dtype=np.float64).reshape(len(orders), count + 1)
        contributions = np.diff(values, axis=1)
        for row, order in enumerate(orders):
            totals[order] += contributions[row]
        if baseline is None:
            baseline, prediction = float(values[0, 0]), float(values[0, -1])
    return Attribution(totals / n_permutations, tuple(groups), baseline, prediction)


def exact_shapley(value_fn, sample, background, groups):
    """Shapley values by enumerating all 2^k coalitions of k <= 12 groups"""
    sample, reference, groups = _prepare(sample, background, groups)
    count = len(groups)
    if count > MAX_EXACT_GROUPS:
        raise ComplexityError('exact Shapley values need at most %d groups, got %d' % (MAX_EXACT_GROUPS, count))
    masks = np.arange(2 ** count)
    inputs = np.tile(reference, (masks.size, 1))
    for index, group in enumerate(groups):
        members = (masks >> index) & 1 == 1
        inputs[np.ix_(members, group.coordinates)] = sample[list(group.coordinates)]
    values = np.asarray(value_fn(inputs), dtype=np.float64)
    sizes = np.array([bin(mask).count('1') for mask in masks])
    weights = np.array([math.factorial(size) * math.factorial(count - size - 1) / math.factorial(count) if size < count else 0.0 for size in range(count + 1)])
    result = np.zeros(count)
    for index in range(count):
        bit = 1 << index
        without = masks[(masks & bit) == 0]
        result[index] = np.sum(weights[sizes[without]] * (values[without | bit] - values[without]))
    return Attribution(result, tuple(groups), float(values[0]), float(values[-1]))


def aggregate_abs_by_lag(attributions, scale=False):
    """
    Mean |value| of every (index, lag) feature over the samples, as an
    index × lag matrix with the index names. With scale each row is min-max
    scaled to [0, 1]; a row without spread becomes zero.
    """
    if not attributions:
        raise ContractError('no attributions to aggregate')
    features = attributions[0].features
    if any(item.features != features for item in attributions):
        raise ContractError('attributions must share their feature groups')
    cells = [(index, feature) for index, feature in enumerate(features) if feature.kind == 'oci']
    names = list(dict.fromkeys(feature.variable for _, feature in cells))
    lags = max((feature.lag for _, feature in cells), default=-1) + 1
    magnitude = np.mean([np.abs(item.values) for item in attributions], axis=0)
    matrix = np.zeros((len(names), lags))
    for index, feature in cells:
        matrix[names.index(feature.variable), feature.lag] = magnitude[index]
    if scale:
        low = matrix.min(axis=1, keepdims=True)
        spread = matrix.max(axis=1, keepdims=True) - low
        matrix = np.where(spread > 0, (matrix - low) / np.where(spread > 0, spread, 1.0), 0.0)
    return matrix, names


def _local_means(attributions):
    features = attributions[0].features
    magnitude = np.mean([np.abs(item.values) for item in attributions], axis=0)
    return [(feature.variable, magnitude[index]) for index, feature in enumerate(features) if feature.kind == 'local']


def explain_samples(model, batch, background, groups=None, n_permutations=500, seed_rng=None, jobs=1):
    """Permutation Shapley attribution of every sample of batch against the flattened background batch"""
    config = model.config
    if groups is None:
        groups = default_groups(['local%d' % index for index in range(config.local_count)], ['oci%d' % index for index in range(config.oci_count)],
                                config.local_window, config.oci_window)
    value_fn = ModelValueFunction(model, batch)
    inputs = batch.flat_inputs()
    reference = background.flat_inputs() if hasattr(background, 'flat_inputs') else np.asarray(background)
    rngs = seed_rng.spawn(len(batch)) if seed_rng is not None else [np.random.default_rng(index) for index in range(len(batch))]
    notification_center = NotificationCenter()

    def explain(index):
        attribution = shapley_estimate(value_fn, inputs[index], reference, groups, n_permutations, rngs[index])
        attribution.sample = index
        notification_center.post_notification('ExplainerDidFinishSample', data=NotificationData(index=index, prediction=attribution.prediction))
        return attribution
    attributions = run_jobs(explain, range(len(batch)), max_threads=jobs, name='explain')
    logger.info('explained %d samples with %d groups', len(attributions), len(groups))
    return attributions


def local_scatter_rows(attributions, batch):
    """(sample, variable, value, mean window value) rows for every local feature"""
    rows = []
    inputs = batch.flat_inputs()
    for attribution in attributions:
        for index, feature in enumerate(attribution.features):
            if feature.kind == 'local':
                window_mean = float(inputs[attribution.sample, list(feature.coordinates)].mean())
                rows.append([attribution.sample, feature.variable, float(attribution.values[index]), window_mean])
    return rows


def save_attributions(directory, attributions, batch=None, scale=True):
    """
    Write shap_values.csv (features × samples), shap_lag_aggregate.csv (index
    rows with one column per lag, then one row per local variable with its
    whole window value) and, given the batch, shap_local_scatter.csv.
    """
    system.makedirs(directory)
    features = attributions[0].features
    header = ['feature'] + ['sample_%d' % (item.sample if item.sample is not None else position) for position, item in enumerate(attributions)]
    rows = [[feature.label] + [float(item.values[index]) for item in attributions] for index, feature in enumerate(features)]
    rows.append(['<baseline>'] + [item.baseline for item in attributions])
    system.write_csv(os.path.join(directory, 'shap_values.csv'), header, rows)

    matrix, names = aggregate_abs_by_lag(attributions, scale=scale)
    lags = matrix.shape[1]
    header = ['variable', 'kind'] + ['lag_%d' % lag for lag in range(lags)] + ['window']
    rows = [[name, 'oci'] + [float(value) for value in row] + [None] for name, row in zip(names, matrix)]
    rows += [[name, 'local'] + [None] * lags + [float(value)] for name, value in _local_means(attributions)]
    system.write_csv(os.path.join(directory, 'shap_lag_aggregate.csv'), header, rows)

    if batch is not None:
        system.write_csv(os.path.join(directory, 'shap_local_scatter.csv'), ['sample', 'variable', 'shap', 'window_mean'], local_scatter_rows(attributions, batch))
