import numpy as np
import numpy.testing as npt
import pytest

from causalgnn.errors import ContractError
from causalgnn.pcmci import (PCMCI, CausalGraph, InsufficientDataError, Link, LinkAssumptions, PCMCIConfig, TimeSeriesDataset, fdr_bh,
                             graph_precision_recall, mci_test, pc1_select_parents, preprocess_causal_stationarity, run_pcmci)
from causalgnn.synthdata import generate, preset


def chain(seed, T=600, strength=0.6):
    """x -> y -> z at lag one; x has no direct effect on z"""
    rng = np.random.default_rng(seed)
    noise = rng.normal(size=(T, 3))
    values = np.zeros((T, 3))
    for t in range(1, T):
        values[t, 0] = noise[t, 0]
        values[t, 1] = strength * values[t - 1, 0] + noise[t, 1]
        values[t, 2] = strength * values[t - 1, 1] + noise[t, 2]
    return TimeSeriesDataset(values - values.mean(axis=0), ('x', 'y', 'z'), ('local', 'local', 'target'))


class TestDataset:
    def test_needs_exactly_one_target(self):
        with pytest.raises(ContractError):
            TimeSeriesDataset(np.zeros((10, 2)), ('a', 'b'), ('local', 'local'))

    def test_values_are_read_only(self):
        data = chain(0, T=50)
        with pytest.raises(ValueError):
            data.values[0, 0] = 1.0

    def test_lookup(self):
        data = chain(0, T=50)
        assert data.target_index == 2
        assert data.index('y') == 1
        assert data.indices('local') == [0, 1]


class TestPreprocess:
    def test_removes_the_seasonal_cycle(self):
        period = 12
        t = np.arange(240)
        raw = np.column_stack([np.sin(2 * np.pi * t / period) + 5.0, np.cos(2 * np.pi * t / period)])
        data = preprocess_causal_stationarity(raw, period)
        npt.assert_allclose(data.values, 0.0, atol=1e-12)

    def test_output_is_centered(self, rng):
        data = preprocess_causal_stationarity(rng.normal(3.0, 1.0, size=(120, 3)), 12)
        assert data.is_centered()

    def test_block_averaging(self):
        raw = np.arange(96, dtype=float).reshape(48, 2)
        data = preprocess_causal_stationarity(raw, period=1, resample=2)
        assert data.T == 24
        expected = raw.reshape(24, 2, 2).mean(axis=1)
        npt.assert_allclose(data.values, expected - expected.mean(axis=0))

    def test_too_short_for_the_period(self, rng):
        with pytest.raises(InsufficientDataError):
            preprocess_causal_stationarity(rng.normal(size=(30, 2)), period=12, resample=2)


class TestLinkAssumptions:
    kinds = ('target', 'local', 'local', 'oci', 'oci')

    def test_mediator_ordering(self):
        assumptions = LinkAssumptions.mediator_ordering(self.kinds, tau_max=3)
        for i, tau, j in assumptions:
            assert (i, tau) != (j, 0)
            if self.kinds[j] == 'oci':
                assert self.kinds[i] == 'oci'
            if self.kinds[j] == 'local':
                assert self.kinds[i] in ('local', 'oci')
            if self.kinds[i] == 'target':
                assert i == j and tau >= 1
        assert assumptions.allows(0, 1, 0)
        assert assumptions.allows(3, 0, 1)
        assert not assumptions.allows(1, 1, 3)

    def test_without_target_autolinks_or_contemporaneous_links(self):
        assumptions = LinkAssumptions.mediator_ordering(self.kinds, tau_max=3, target_autolinks=False, contemporaneous=False)
        assert not assumptions.allows(0, 1, 0)
        assert all(tau >= 1 for _, tau, _ in assumptions)

    def test_rejects_contemporaneous_self_links(self):
        with pytest.raises(ContractError):
            LinkAssumptions([(1, 0, 1)], 2, 2)

    def test_dictionary_form(self):
        assumptions = LinkAssumptions.mediator_ordering(self.kinds, tau_max=2)
        assert LinkAssumptions.from_dict(assumptions.to_dict(), 5, 2).to_dict() == assumptions.to_dict()
        assert (3, -2) in assumptions.to_dict()[1]

    def test_forbid_into(self):
        assumptions = LinkAssumptions.full(3, 2).forbid_into(1)
        assert assumptions.candidates(1) == []
        assert assumptions.candidates(0)


def test_fdr_bh_known_values():
    npt.assert_allclose(fdr_bh([0.01, 0.04, 0.03, 0.005]), [0.02, 0.04, 0.04, 0.02])
    assert fdr_bh([]).size == 0


class TestCausalGraph:
    def graph(self):
        links = [Link(0, 1, 1, 0.5, 0.001), Link(1, 1, 2, -0.3, 0.01), Link(0, 0, 2, 0.2, 0.02)]
        return CausalGraph(('x', 'y', 'z'), ('local', 'local', 'target'), 2, 0.05, links)

    def test_rejects_insignificant_links(self):
        with pytest.raises(ContractError):
            CausalGraph(('x', 'y'), ('local', 'target'), 2, 0.05, [Link(0, 1, 1, 0.5, 0.2)])

    def test_rejects_out_of_range_strength(self):
        with pytest.raises(ContractError):
            CausalGraph(('x', 'y'), ('local', 'target'), 2, 0.05, [Link(0, 1, 1, 1.5, 0.01)])

    def test_lagged_and_contemporaneous_links(self):
        graph = self.graph()
        assert graph.edge_set() == {(0, 1, 1), (1, 1, 2)}
        assert len(graph.contemporaneous_links()) == 1
        assert graph.parents_of(2) == [(1, 1)]

    def test_json_document(self, tmp_path):
        graph = self.graph()
        graph.save(str(tmp_path / 'graph.json'))
        loaded = CausalGraph.load(str(tmp_path / 'graph.json'))
        assert loaded.edge_set(lagged_only=False) == graph.edge_set(lagged_only=False)
        assert loaded.to_json() == graph.to_json()

    def test_dot_and_table(self):
        graph = self.graph()
        dot = graph.to_dot()
        assert dot.startswith('digraph')
        assert '"x" -> "y"' in dot
        assert 'style=dashed' in dot
        table = graph.to_link_table().splitlines()
        assert len(table) == 4
        assert table[0].split() == ['source', 'lag', 'target', 'mci', 'pvalue']


class TestPCMCI:
    def test_chain_is_recovered(self):
        graph = run_pcmci(chain(1), LinkAssumptions.full(3, 2), tau_max=2, fdr_method='fdr_bh')
        assert (0, 1, 1) in graph.edge_set()
        assert (1, 1, 2) in graph.edge_set()
        assert graph.respects(LinkAssumptions.full(3, 2))

    def test_spurious_chain_link_is_rejected(self):
        rejected = 0
        for seed in range(20):
            graph = run_pcmci(chain(seed), LinkAssumptions.full(3, 2), tau_max=2, fdr_method='fdr_bh')
            rejected += (0, 2, 2) not in graph.edge_set()
        assert rejected >= 18

    def test_pc1_keeps_the_true_parent_first(self):
        data = chain(2)
        parents = pc1_select_parents(data, 2, LinkAssumptions.full(3, 2), tau_max=2)
        assert parents[0] == (1, 1)

    def test_mci_conditions_on_both_ends(self):
        data = chain(3)
        engine = PCMCI(data, LinkAssumptions.full(3, 2), PCMCIConfig(tau_max=2, p_x=1))
        conditions = engine.conditions((0, 2), 2, {2: [(1, 1), (0, 2)], 0: [(1, 1), (2, 2)]})
        assert conditions == [(1, 1), (1, 3)]

    def test_mci_test_blocks_the_indirect_path(self):
        data = chain(4)
        result = mci_test(data, ((0, 2), 2), [(1, 1)], [], tau_max=2)
        assert result.pvalue > 0.001
        direct = mci_test(data, ((1, 1), 2), [(1, 1)], [(0, 1)], tau_max=2)
        assert direct.pvalue < 1e-6

    def test_alpha_one_keeps_every_allowed_link(self):
        assumptions = LinkAssumptions.full(3, 2)
        graph = run_pcmci(chain(5, T=200), assumptions, tau_max=2, alpha=1.0)
        assert len(graph) == len(assumptions)

    def test_variable_without_candidates_gets_no_parents(self):
        assumptions = LinkAssumptions.full(3, 2).forbid_into(2)
        graph = run_pcmci(chain(6), assumptions, tau_max=2, alpha=1.0)
        assert not [link for link in graph if link.target == 2]

    def test_smaller_alpha_gives_a_subset(self):
        engine = PCMCI(chain(7), LinkAssumptions.full(3, 2), PCMCIConfig(tau_max=2))
        results = engine.run_mci(engine.run_pc1())
        strict = results.to_graph(0.01).edge_set(lagged_only=False)
        loose = results.to_graph(0.05).edge_set(lagged_only=False)
        assert strict <= loose
        assert results.to_graph(0.05, 'fdr_bh').edge_set(lagged_only=False) <= loose

    def test_deterministic_copy_does_not_fail(self):
        data = chain(8, T=300)
        values = np.column_stack([data.values, data.values[:, 0]])
        copied = TimeSeriesDataset(values, ('x', 'y', 'z', 'x2'), ('local', 'local', 'target', 'local'))
        graph = run_pcmci(copied, LinkAssumptions.full(4, 2), tau_max=2)
        assert (1, 1, 2) in graph.edge_set()

    def test_parallel_run_matches_sequential(self):
        data = chain(9, T=300)
        sequential = run_pcmci(data, LinkAssumptions.full(3, 2), tau_max=2)
        parallel = run_pcmci(data, LinkAssumptions.full(3, 2), tau_max=2, jobs=3)
        assert sequential.to_json() == parallel.to_json()

    def test_too_few_samples(self):
        with pytest.raises(InsufficientDataError):
            PCMCI(chain(0, T=13), LinkAssumptions.full(3, 6), PCMCIConfig(tau_max=6))

    def test_assumptions_must_fit_tau_max(self):
        with pytest.raises(ContractError):
            PCMCI(chain(0, T=100), LinkAssumptions.full(3, 4), PCMCIConfig(tau_max=2))

def white_noise(seed, T=500):
    values = np.random.default_rng(seed).normal(size=(T, 4))
    return TimeSeriesDataset(values - values.mean(axis=0), ('a', 'b', 'c', 'fire'), ('local', 'local', 'oci', 'target'))


class TestFalsePositives:
    """Independent white noise series: every kept link is a false positive"""

    datasets = 20
    assumptions = LinkAssumptions.full(4, 3, contemporaneous=False)

    @staticmethod
    def band(alpha, tests):
        return 3 * np.sqrt(alpha * (1 - alpha) / tests)

    def test_unconditional_selection_keeps_alpha_pc_of_the_candidates(self):
        kept = sum(len(pc1_select_parents(white_noise(seed), j, self.assumptions, tau_max=3, alpha_pc=0.2, p_max=0))
                   for seed in range(self.datasets) for j in range(4))
        tests = self.datasets * len(self.assumptions)
        assert abs(kept / tests - 0.2) < self.band(0.2, tests)

    def test_conditioning_only_removes_candidates(self):
        kept = sum(len(pc1_select_parents(white_noise(seed), j, self.assumptions, tau_max=3, alpha_pc=0.2))
                   for seed in range(self.datasets) for j in range(4))
        tests = self.datasets * len(self.assumptions)
        assert kept / tests < 0.2 + self.band(0.2, tests)

    def test_mci_keeps_alpha_of_the_links(self):
        kept = sum(len(run_pcmci(white_noise(seed), self.assumptions, tau_max=3, alpha=0.05)) for seed in range(self.datasets))
        tests = self.datasets * len(self.assumptions)
        assert tests == 960
        assert abs(kept / tests - 0.05) < self.band(0.05, tests)



def _default_preset_scores(seed):
    data = generate(preset('fig6-default'), 2000, seed=seed)
    prepared = preprocess_causal_stationarity(data.dataset, period=12)
    found = run_pcmci(prepared, tau_max=6, alpha=0.05, fdr_method='fdr_bh')
    return graph_precision_recall(found, data.truth)


def test_default_preset_structure_is_recovered():
    precision, recall = _default_preset_scores(0)
    assert precision >= 0.8
    assert recall >= 0.9


@pytest.mark.slow
def test_default_preset_structure_over_seeds():
    scores = np.array([_default_preset_scores(seed) for seed in range(10)])
    precision, recall = scores.mean(axis=0)
    assert precision >= 0.9
    assert recall >= 0.9
