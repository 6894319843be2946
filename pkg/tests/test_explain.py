import os

import numpy as np
import numpy.testing as npt
import pytest

from causalgnn import seeding, system
from causalgnn.errors import ContractError
from causalgnn.explain import (ComplexityError, ModelValueFunction, aggregate_abs_by_lag, default_groups, exact_shapley, explain_samples,
                               save_attributions, shapley_estimate)
from causalgnn.models import Batch, Model, ModelConfig
from causalgnn.training import init_params


LOCALS = ('t2m', 'tp', 'vpd')
INDICES = ('nao', 'ao', 'nina34')


def smooth_value(inputs):
    inputs = np.atleast_2d(inputs)
    return 1.0 / (1.0 + np.exp(-(0.3 * inputs.sum(axis=1) + 0.2 * inputs[:, 0] * inputs[:, 1] - 0.1 * inputs[:, 2] ** 2)))


class TestGroups:
    def test_layout_follows_the_flat_inputs(self):
        groups = default_groups(['t2m', 'tp'], ['nao', 'ao'], local_window=4, oci_window=5)
        assert [group.label for group in groups[:3]] == ['t2m', 'tp', 'nao@0']
        assert groups[1].coordinates == (4, 5, 6, 7)
        # lag 0 is the last index step of the window
        assert groups[2].coordinates == (12,)
        assert groups[5].coordinates == (9,)
        assert len(groups) == 2 + 2 * 5

    def test_groups_must_not_overlap(self, rng):
        with pytest.raises(ContractError):
            exact_shapley(smooth_value, rng.normal(size=4), rng.normal(size=(5, 4)), [(0, 1), (1, 2)])

    def test_groups_must_not_be_empty(self, rng):
        with pytest.raises(ContractError):
            exact_shapley(smooth_value, rng.normal(size=4), rng.normal(size=(5, 4)), [(0,), ()])


class TestExactShapley:
    def test_values_add_up_to_the_prediction(self, rng):
        sample, background = rng.normal(size=8), rng.normal(size=(20, 8))
        attribution = exact_shapley(smooth_value, sample, background, [(0, 1), (2,), (3, 4, 5), (6,), (7,)])
        assert abs(attribution.efficiency_gap) < 1e-10
        assert attribution.prediction == pytest.approx(smooth_value(sample)[0])
        assert attribution.baseline == pytest.approx(smooth_value(background.mean(axis=0))[0])

    def test_additive_function(self, rng):
        weights = rng.normal(size=6)
        sample, background = rng.normal(size=6), rng.normal(size=(10, 6))
        attribution = exact_shapley(lambda inputs: np.atleast_2d(inputs) @ weights, sample, background, [(0,), (1, 2), (3, 4, 5)])
        contribution = weights * (sample - background.mean(axis=0))
        npt.assert_allclose(attribution.values, [contribution[0], contribution[1:3].sum(), contribution[3:].sum()], atol=1e-12)

    def test_at_most_twelve_groups(self, rng):
        with pytest.raises(ComplexityError):
            exact_shapley(smooth_value, rng.normal(size=13), rng.normal(size=(3, 13)), [(index,) for index in range(13)])


class TestPermutationEstimate:
    def test_every_estimate_is_efficient(self, rng):
        sample, background = rng.normal(size=6), rng.normal(size=(10, 6))
        attribution = shapley_estimate(smooth_value, sample, background, [(index,) for index in range(6)], n_permutations=7, rng=rng)
        assert abs(attribution.efficiency_gap) < 1e-12

    def test_converges_to_the_exact_values(self):
        rng = np.random.default_rng(3)
        sample, background = rng.normal(size=10), rng.normal(size=(30, 10))
        groups = [(index,) for index in range(10)]
        exact = exact_shapley(smooth_value, sample, background, groups)
        estimate = shapley_estimate(smooth_value, sample, background, groups, n_permutations=5000, rng=rng)
        assert np.max(np.abs(estimate.values - exact.values)) < 0.02

    def test_error_halves_with_four_times_the_permutations(self):
        rng = np.random.default_rng(8)
        background = rng.normal(size=(30, 8))
        groups = [(index,) for index in range(8)]
        errors = {500: [], 2000: []}
        for _ in range(20):
            sample = rng.normal(size=8)
            exact = exact_shapley(smooth_value, sample, background, groups)
            for n_permutations, found in errors.items():
                estimate = shapley_estimate(smooth_value, sample, background, groups, n_permutations, rng)
                found.append(np.mean(np.abs(estimate.values - exact.values)))
        assert np.median(errors[2000]) < 0.65 * np.median(errors[500])

    def test_same_stream_same_estimate(self, rng):
        sample, background = rng.normal(size=5), rng.normal(size=(4, 5))
        groups = [(index,) for index in range(5)]
        first = shapley_estimate(smooth_value, sample, background, groups, 50, seeding.stream(2, 'explain'))
        second = shapley_estimate(smooth_value, sample, background, groups, 50, seeding.stream(2, 'explain'))
        npt.assert_array_equal(first.values, second.values)

    def test_needs_a_permutation(self, rng):
        with pytest.raises(ContractError):
            shapley_estimate(smooth_value, rng.normal(size=3), rng.normal(size=(2, 3)), [(0,), (1, 2)], n_permutations=0)


class TestLagAggregate:
    def test_planted_lag_is_found(self, rng):
        groups = default_groups(['t2m', 'tp'], ['nao', 'ao'], local_window=4, oci_window=5)
        coordinate = [group for group in groups if group.label == 'nao@3'][0].coordinates[0]

        def value(inputs):
            return 1.0 / (1.0 + np.exp(-2.0 * np.atleast_2d(inputs)[:, coordinate]))

        background = rng.normal(size=(50, 18))
        attributions = [exact_shapley(value, sample, background, groups[:2] + groups[2:7]) for sample in rng.normal(size=(5, 18))]
        matrix, names = aggregate_abs_by_lag(attributions)
        assert names == ['nao']
        assert matrix.shape == (1, 5)
        assert int(np.argmax(matrix[0])) == 3
        npt.assert_allclose(np.delete(matrix[0], 3), 0.0, atol=1e-12)

    def test_index_rows_and_lag_columns(self, rng):
        groups = default_groups(LOCALS, INDICES, local_window=4, oci_window=10)
        sample_size = 3 * 4 + 3 * 10
        attributions = [shapley_estimate(smooth_value, sample, rng.normal(size=(8, sample_size)), groups, n_permutations=10, rng=rng)
                        for sample in rng.normal(size=(3, sample_size))]
        matrix, names = aggregate_abs_by_lag(attributions)
        assert names == list(INDICES)
        assert matrix.shape == (3, 10)
        scaled, _ = aggregate_abs_by_lag(attributions, scale=True)
        assert scaled.min() >= 0.0 and scaled.max() <= 1.0
        for row in scaled:
            assert row.min() == 0.0 and (row.max() == 1.0 or not row.any())

    def test_constant_rows_scale_to_zero(self, rng):
        groups = default_groups(['t2m'], ['nao', 'ao'], local_window=2, oci_window=3)

        def value(inputs):
            return np.atleast_2d(inputs)[:, :5].sum(axis=1)

        attribution = exact_shapley(value, rng.normal(size=8), rng.normal(size=(4, 8)), groups)
        scaled, names = aggregate_abs_by_lag([attribution], scale=True)
        assert names == ['nao', 'ao']
        npt.assert_array_equal(scaled[1], 0.0)

    def test_nothing_to_aggregate(self):
        with pytest.raises(ContractError):
            aggregate_abs_by_lag([])


def small_model():
    config = ModelConfig(local_count=3, oci_count=3, local_window=4, oci_window=10, hidden_dim=3, gnn_hidden=4)
    return Model('gnn_corr', config, init_params('gnn_corr', config, np.random.default_rng(0)))


def small_batch(rng, size):
    return Batch(rng.normal(size=(size, 3, 4)), rng.normal(size=(size, 3, 10)), np.ones(size, dtype=np.int64))


class TestModelExplanations:
    def test_value_function_scores_flat_rows(self, rng):
        model = small_model()
        batch = small_batch(rng, 3)
        npt.assert_allclose(ModelValueFunction(model, batch)(batch.flat_inputs()), model.confidence(batch), atol=1e-12)

    def test_explain_samples(self, rng, tmp_path):
        model = small_model()
        batch, background = small_batch(rng, 2), small_batch(rng, 6)
        groups = default_groups(LOCALS, INDICES, 4, 10)
        attributions = explain_samples(model, batch, background, groups, n_permutations=5, seed_rng=seeding.stream(0, 'explain'))
        assert [item.sample for item in attributions] == [0, 1]
        for item in attributions:
            assert abs(item.efficiency_gap) < 1e-10
        again = explain_samples(model, batch, background, groups, n_permutations=5, seed_rng=seeding.stream(0, 'explain'), jobs=2)
        npt.assert_array_equal(np.stack([item.values for item in again]), np.stack([item.values for item in attributions]))

        directory = str(tmp_path / 'explain')
        save_attributions(directory, attributions, batch)
        header, rows = system.read_csv(os.path.join(directory, 'shap_lag_aggregate.csv'))
        assert header == ['variable', 'kind'] + ['lag_%d' % lag for lag in range(10)] + ['window']
        assert [row[0] for row in rows] == list(INDICES) + list(LOCALS)
        header, rows = system.read_csv(os.path.join(directory, 'shap_values.csv'))
        assert header == ['feature', 'sample_0', 'sample_1']
        assert len(rows) == len(groups) + 1
        _, rows = system.read_csv(os.path.join(directory, 'shap_local_scatter.csv'))
        assert len(rows) == 2 * len(LOCALS)
