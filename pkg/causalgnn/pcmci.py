"""
Time series causal discovery with the PCMCI method.

A dataset is first made causally stationary (coarse resampling, removal of
the calendar-phase climatology, centering). The PC1 phase then selects, for
every variable, a small ordered set of lagged parent candidates and the MCI
phase tests every allowed link conditioned on the parents of both of its
ends. Links whose p-value passes the significance level form the graph.
"""

import math
from dataclasses import dataclass

import numpy as np

from causalgnn import log, stats, system
from causalgnn.errors import ContractError, DataError
from causalgnn.notification import NotificationCenter, NotificationData
from causalgnn.python.threadpool import run_jobs


__all__ = ('KINDS', 'InsufficientDataError', 'TimeSeriesDataset', 'LinkAssumptions', 'Link', 'CausalGraph',
           'PCMCIConfig', 'PCMCI', 'MCIResults', 'preprocess_causal_stationarity', 'pc1_select_parents',
           'mci_test', 'run_pcmci', 'fdr_bh', 'graph_precision_recall')


logger = log.get_logger(__name__)

KINDS = ('target', 'local', 'oci')

FDR_METHODS = ('none', 'fdr_bh')


class InsufficientDataError(DataError):
    """Not enough samples for the requested preprocessing or test"""


class TimeSeriesDataset(object):
    """A T×C matrix of observations with a name and a kind for every column"""

    def __init__(self, values, names, kinds):
        values = np.array(values, dtype=np.float64)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2:
            raise ContractError('dataset values must be a T×C matrix')
        names = tuple(str(name) for name in names)
        kinds = tuple(kinds)
        if len(names) != values.shape[1] or len(kinds) != values.shape[1]:
            raise ContractError('dataset has %d columns but %d names and %d kinds' % (values.shape[1], len(names), len(kinds)))
        if len(set(names)) != len(names):
            raise ContractError('variable names must be unique')
        invalid = [kind for kind in kinds if kind not in KINDS]
        if invalid:
            raise ContractError('invalid variable kinds: %s' % ', '.join(map(str, invalid)))
        if kinds.count('target') != 1:
            raise ContractError('a dataset needs exactly one target variable, got %d' % kinds.count('target'))
        if not np.isfinite(values).all():
            raise DataError('dataset contains missing or non-finite values')
        values.flags.writeable = False
        self.values = values
        self.names = names
        self.kinds = kinds

    def __repr__(self):
        return '%s(T=%d, names=%r)' % (self.__class__.__name__, self.T, self.names)

    def __len__(self):
        return self.values.shape[0]

    @property
    def T(self):
        return self.values.shape[0]

    @property
    def C(self):
        return self.values.shape[1]

    @property
    def target_index(self):
        return self.kinds.index('target')

    def indices(self, kind):
        return [index for index, value in enumerate(self.kinds) if value == kind]

    def index(self, name):
        try:
            return self.names.index(name)
        except ValueError:
            raise ContractError('unknown variable %r' % name) from None

    def column(self, name):
        return self.values[:, self.index(name)]

    def is_centered(self, tolerance=1e-9):
        return bool(np.all(np.abs(self.values.mean(axis=0)) < tolerance))


def preprocess_causal_stationarity(raw, period, resample=1, names=None, kinds=None):
    """
    Make a raw fine-step series causally stationary.

    The rows are block averaged `resample` at a time (a trailing partial
    block is dropped), the mean of every calendar phase (row index modulo
    `period`) is subtracted and every column is centered.
    """
    if isinstance(raw, TimeSeriesDataset):
        names = raw.names if names is None else names
        kinds = raw.kinds if kinds is None else kinds
        values = raw.values
    else:
        values = np.asarray(raw, dtype=np.float64)
        if values.ndim == 1:
            values = values[:, None]
    if values.ndim != 2:
        raise ContractError('raw data must be a T×C matrix')
    if period < 1 or resample < 1:
        raise ContractError('period and resample must be positive')
    if not np.isfinite(values).all():
        raise DataError('raw data contains missing or non-finite values')
    columns = values.shape[1]
    if names is None:
        names = ['x%d' % index for index in range(columns)]
    if kinds is None:
        kinds = ('target',) + ('local',) * (columns - 1)
    length = values.shape[0] // resample
    if length < 2 * period:
        raise InsufficientDataError('need at least %d coarse steps for period %d, got %d' % (2 * period, period, length))
    coarse = values[:length * resample].reshape(length, resample, columns).mean(axis=1)
    phases = np.arange(length) % period
    for phase in range(period):
        selected = phases == phase
        coarse[selected] -= coarse[selected].mean(axis=0)
    coarse -= coarse.mean(axis=0)
    logger.debug('preprocessed %d raw steps into %d coarse steps (period %d)', values.shape[0], length, period)
    return TimeSeriesDataset(coarse, names, kinds)


class LinkAssumptions(object):
    """
    The set of candidate links (i, -tau) -> j that discovery may test.

    Links are stored as (i, tau, j) triples with tau >= 0. A variable is
    never its own contemporaneous parent.
    """

    def __init__(self, allowed, variable_count, tau_max):
        if variable_count < 1 or tau_max < 0:
            raise ContractError('invalid link assumption dimensions')
        links = set()
        for i, tau, j in allowed:
            i, tau, j = int(i), int(tau), int(j)
            if not (0 <= i < variable_count and 0 <= j < variable_count):
                raise ContractError('link %d -> %d refers to an unknown variable' % (i, j))
            if not 0 <= tau <= tau_max:
                raise ContractError('link lag %d outside [0, %d]' % (tau, tau_max))
            if i == j and tau == 0:
                raise ContractError('variable %d cannot be its own contemporaneous parent' % i)
            links.add((i, tau, j))
        self.variable_count = variable_count
        self.tau_max = tau_max
        self._links = frozenset(links)

    @classmethod
    def full(cls, variable_count, tau_max, contemporaneous=True):
        tau_min = 0 if contemporaneous else 1
        return cls(((i, tau, j) for j in range(variable_count) for i in range(variable_count)
                    for tau in range(tau_min, tau_max + 1) if (i, tau) != (j, 0)), variable_count, tau_max)

    @classmethod
    def mediator_ordering(cls, kinds, tau_max, target_autolinks=True, contemporaneous=True):
        """
        Oscillation indices drive indices, local weather and the target;
        local weather drives local weather and the target; the target drives
        nothing but (optionally) its own future.
        """
        sources = {'oci': {'oci'}, 'local': {'oci', 'local'}, 'target': {'oci', 'local'}}
        tau_min = 0 if contemporaneous else 1
        allowed = []
        for j, target_kind in enumerate(kinds):
            for i, source_kind in enumerate(kinds):
                if source_kind in sources[target_kind]:
                    allowed.extend((i, tau, j) for tau in range(tau_min, tau_max + 1) if (i, tau) != (j, 0))
                elif i == j and target_autolinks:
                    allowed.extend((i, tau, j) for tau in range(1, tau_max + 1))
        return cls(allowed, len(kinds), tau_max)

    @classmethod
    def from_dict(cls, mapping, variable_count, tau_max):
        """Build from a {j: {(i, -tau), ...}} dictionary"""
        return cls(((i, -lag, j) for j, parents in mapping.items() for i, lag in parents), variable_count, tau_max)

    def to_dict(self):
        return {j: sorted((i, -tau) for i, tau in self.candidates(j)) for j in range(self.variable_count)}

    def __contains__(self, link):
        return tuple(link) in self._links

    def __iter__(self):
        return iter(sorted(self._links))

    def __len__(self):
        return len(self._links)

    def allows(self, i, tau, j):
        return (i, tau, j) in self._links

    def candidates(self, j, tau_min=0):
        """Allowed (i, tau) parents of j ordered by (variable, lag)"""
        return sorted((i, tau) for i, tau, target in self._links if target == j and tau >= tau_min)

    def forbid_into(self, j):
        return LinkAssumptions((link for link in self._links if link[2] != j), self.variable_count, self.tau_max)


@dataclass(frozen=True)
class Link(object):
    source: int
    lag: int
    target: int
    mci: float
    pvalue: float

    @property
    def key(self):
        return self.source, self.lag, self.target

    @property
    def contemporaneous(self):
        return self.lag == 0


class CausalGraph(object):
    """
    Links retained by discovery (or planted by a simulation). Lag-zero links
    are diagnostics only and carry no direction.
    """

    def __init__(self, variables, kinds, tau_max, alpha, links=(), fdr_method='none'):
        self.variables = tuple(variables)
        self.kinds = tuple(kinds)
        if len(self.variables) != len(self.kinds):
            raise ContractError('a graph needs one kind per variable')
        self.tau_max = int(tau_max)
        self.alpha = float(alpha)
        self.fdr_method = fdr_method
        self.links = {}
        for link in links:
            if not (0 <= link.source < len(self.variables) and 0 <= link.target < len(self.variables)):
                raise ContractError('link %r refers to an unknown variable' % (link,))
            if not 0 <= link.lag <= self.tau_max:
                raise ContractError('link %r has a lag outside [0, %d]' % (link, self.tau_max))
            if abs(link.mci) > 1.0:
                raise ContractError('link %r has |mci| > 1' % (link,))
            if link.pvalue > self.alpha:
                raise ContractError('link %r is not significant at alpha=%g' % (link, self.alpha))
            self.links[link.key] = link

    def __repr__(self):
        return '%s(%d variables, %d links, tau_max=%d, alpha=%g)' % (self.__class__.__name__, len(self.variables), len(self.links), self.tau_max, self.alpha)

    def __iter__(self):
        return (self.links[key] for key in sorted(self.links))

    def __len__(self):
        return len(self.links)

    def __contains__(self, key):
        return tuple(key) in self.links

    @property
    def target_index(self):
        return self.kinds.index('target')

    def lagged_links(self):
        return [link for link in self if not link.contemporaneous]

    def contemporaneous_links(self):
        return [link for link in self if link.contemporaneous]

    def parents_of(self, j):
        """Lagged parents (i, tau) of j, strongest first"""
        parents = [link for link in self.lagged_links() if link.target == j]
        return [(link.source, link.lag) for link in sorted(parents, key=lambda link: (-abs(link.mci), link.source, link.lag))]

    def edge_set(self, lagged_only=True):
        return {link.key for link in self if not (lagged_only and link.contemporaneous)}

    def respects(self, assumptions):
        return all(key in assumptions for key in self.links)

    def to_json(self):
        return {'variables': list(self.variables),
                'kinds': list(self.kinds),
                'tau_max': self.tau_max,
                'alpha': self.alpha,
                'fdr_method': self.fdr_method,
                'links': [{'source': self.variables[link.source], 'lag': link.lag, 'target': self.variables[link.target],
                           'mci': link.mci, 'pvalue': link.pvalue} for link in self]}

    @classmethod
    def from_json(cls, data):
        variables = list(data['variables'])
        try:
            links = [Link(variables.index(entry['source']), int(entry['lag']), variables.index(entry['target']), float(entry['mci']), float(entry['pvalue']))
                     for entry in data['links']]
        except (KeyError, ValueError) as e:
            raise DataError('malformed graph document: %s' % e) from None
        kinds = data.get('kinds') or ['local'] * len(variables)
        return cls(variables, kinds, data['tau_max'], data['alpha'], links, data.get('fdr_method', 'none'))

    def save(self, path):
        system.write_json(path, self.to_json())

    @classmethod
    def load(cls, path):
        return cls.from_json(system.read_json(path))

    def to_dot(self):
        lines = ['digraph causal_graph {', '    rankdir=LR;']
        for name, kind in zip(self.variables, self.kinds):
            shape = {'target': 'doublecircle', 'oci': 'box'}.get(kind, 'ellipse')
            lines.append('    "%s" [shape=%s];' % (name, shape))
        for link in self:
            attributes = ['label="%d: %.3f"' % (link.lag, link.mci),
                          'color="%s"' % ('firebrick' if link.mci > 0 else 'steelblue'),
                          'penwidth=%.2f' % (1.0 + 4.0 * abs(link.mci))]
            if link.contemporaneous:
                attributes += ['style=dashed', 'dir=none']
            lines.append('    "%s" -> "%s" [%s];' % (self.variables[link.source], self.variables[link.target], ', '.join(attributes)))
        lines.append('}')
        return '\n'.join(lines) + '\n'

    def to_link_table(self):
        width = max([len(name) for name in self.variables] + [6])
        lines = ['%-*s  %3s  %-*s  %8s  %10s' % (width, 'source', 'lag', width, 'target', 'mci', 'pvalue')]
        for link in self:
            lines.append('%-*s  %3d  %-*s  %8.4f  %10.3g' % (width, self.variables[link.source], link.lag, width, self.variables[link.target], link.mci, link.pvalue))
        return '\n'.join(lines)


@dataclass(frozen=True)
class PCMCIConfig(object):
    tau_max: int = 6
    alpha: float = 0.05
    alpha_pc: float = 0.2
    p_max: int = 10
    p_x: int = 10
    fdr_method: str = 'none'
    jobs: int = 1

    def __post_init__(self):
        if self.tau_max < 1:
            raise ContractError('tau_max must be at least 1')
        if not 0.0 < self.alpha <= 1.0 or not 0.0 < self.alpha_pc <= 1.0:
            raise ContractError('significance levels must be in (0, 1]')
        if self.p_max < 0 or self.p_x < 0:
            raise ContractError('p_max and p_x must be non-negative')
        if self.fdr_method not in FDR_METHODS:
            raise ContractError('fdr_method must be one of %s' % ', '.join(FDR_METHODS))


def fdr_bh(pvalues):
    """Benjamini-Hochberg adjusted p-values, in input order"""
    pvalues = np.asarray(pvalues, dtype=np.float64)
    count = pvalues.size
    if count == 0:
        return pvalues.copy()
    order = np.argsort(pvalues, kind='stable')
    scaled = pvalues[order] * count / np.arange(1, count + 1)
    adjusted = np.minimum.accumulate(scaled[::-1])[::-1]
    qvalues = np.empty(count)
    qvalues[order] = np.minimum(adjusted, 1.0)
    return qvalues


def _independent_columns(matrix):
    """Indices of a maximal set of columns that stay linearly independent together with an intercept"""
    design = np.ones((matrix.shape[0], 1))
    kept = []
    for index in range(matrix.shape[1]):
        candidate = np.column_stack([design, matrix[:, index]])
        if np.linalg.matrix_rank(candidate) == candidate.shape[1]:
            design = candidate
            kept.append(index)
    return kept


class MCIResults(object):
    """Every MCI test of a discovery run, before thresholding"""

    def __init__(self, data, tau_max, parents, tests):
        self.variables = data.names
        self.kinds = data.kinds
        self.tau_max = tau_max
        self.parents = parents
        self.tests = tests

    def __len__(self):
        return len(self.tests)

    def pvalue(self, i, tau, j):
        return self.tests[(i, tau, j)].pvalue

    def to_graph(self, alpha, fdr_method='none'):
        if fdr_method not in FDR_METHODS:
            raise ContractError('fdr_method must be one of %s' % ', '.join(FDR_METHODS))
        keys = sorted(self.tests)
        pvalues = np.array([self.tests[key].pvalue for key in keys])
        adjusted = fdr_bh(pvalues) if fdr_method == 'fdr_bh' else pvalues
        links = [Link(i, tau, j, float(self.tests[(i, tau, j)].statistic), float(self.tests[(i, tau, j)].pvalue))
                 for (i, tau, j), qvalue in zip(keys, adjusted) if qvalue <= alpha]
        return CausalGraph(self.variables, self.kinds, self.tau_max, alpha, links, fdr_method)


class PCMCI(object):
    """
    PC1 condition selection followed by momentary conditional independence
    tests, with partial correlation as the independence test.

    Every test uses the same rows t in [2*tau_max, T), the window in which
    both the lagged candidates and the lag-shifted parents of a source exist.
    """

    def __init__(self, data, assumptions, config=None):
        self.config = config = config or PCMCIConfig()
        if assumptions.variable_count != data.C:
            raise ContractError('link assumptions cover %d variables, dataset has %d' % (assumptions.variable_count, data.C))
        if any(tau > config.tau_max for _, tau, _ in assumptions):
            raise ContractError('link assumptions contain lags beyond tau_max=%d' % config.tau_max)
        self.data = data
        self.assumptions = assumptions
        self.cut_off = 2 * config.tau_max
        self.sample_size = data.T - self.cut_off
        if self.sample_size < 3:
            raise InsufficientDataError('%d steps leave no samples after a cut off of %d' % (data.T, self.cut_off))
        self._lagged = np.stack([data.values[self.cut_off - tau:data.T - tau] for tau in range(self.cut_off + 1)])

    def _column(self, node):
        i, tau = node
        return self._lagged[tau, :, i]

    def _matrix(self, nodes):
        if not nodes:
            return np.empty((self.sample_size, 0))
        return np.column_stack([self._column(node) for node in nodes])

    def test(self, source, j, conditions):
        """Partial correlation test of source (i, tau) against (j, 0) given a list of (k, lag) conditions"""
        if self.sample_size - 2 - len(conditions) < 1:
            raise InsufficientDataError('%d samples are too few for a test with %d conditions' % (self.sample_size, len(conditions)))
        x = self._column(source)
        y = self._column((j, 0))
        z = self._matrix(conditions)
        try:
            return stats.parcorr_test(x, y, z)
        except stats.SingularDesignError:
            kept = _independent_columns(z)
            logger.debug('dropping %d collinear conditions testing %r -> %d', z.shape[1] - len(kept), source, j)
            z = z[:, kept]
        except stats.DegenerateSeriesError:
            return self._independent(z)
        try:
            return stats.parcorr_test(x, y, z)
        except stats.DegenerateSeriesError:
            return self._independent(z)

    def _independent(self, z):
        # one side is fully determined by the conditions
        return stats.CITestResult(statistic=0.0, pvalue=1.0, dof=self.sample_size - 2 - z.shape[1])

    def select_parents(self, j):
        """PC1 condition selection for variable j; parents ordered by decreasing strength"""
        config = self.config
        parents = self.assumptions.candidates(j, tau_min=1)
        strength = {node: math.inf for node in parents}
        for dimension in range(config.p_max + 1):
            if len(parents) - 1 < dimension:
                break
            rejected = []
            for parent in parents:
                conditions = [node for node in parents if node != parent][:dimension]
                result = self.test(parent, j, conditions)
                strength[parent] = min(strength[parent], abs(result.statistic))
                if result.pvalue > config.alpha_pc:
                    rejected.append(parent)
            for parent in rejected:
                del strength[parent]
            parents = sorted(strength, key=lambda node: (-strength[node], node))
        logger.debug('PC1 selected %d parents for %s', len(parents), self.data.names[j])
        NotificationCenter().post_notification('PCMCIDidSelectParents', sender=self,
                                               data=NotificationData(variable=self.data.names[j], parents=list(parents)))
        return parents

    def run_pc1(self):
        selected = run_jobs(self.select_parents, range(self.data.C), max_threads=self.config.jobs, name='pc1')
        return dict(enumerate(selected))

    def conditions(self, source, j, parents):
        """MCI conditions: parents of j without the source, then the lag-shifted strongest parents of the source"""
        i, tau = source
        conditions = [node for node in parents.get(j, ()) if node != source]
        shifted = [(k, tau + lag) for k, lag in parents.get(i, ())[:self.config.p_x]]
        conditions += [node for node in shifted if node not in conditions and node != source]
        return conditions

    def mci_test(self, source, j, parents):
        return self.test(source, j, self.conditions(source, j, parents))

    def _mci_variable(self, j, parents):
        return {(i, tau, j): self.mci_test((i, tau), j, parents) for i, tau in self.assumptions.candidates(j)}

    def run_mci(self, parents):
        tests = {}
        for result in run_jobs(lambda j: self._mci_variable(j, parents), range(self.data.C), max_threads=self.config.jobs, name='mci'):
            tests.update(result)
        return MCIResults(self.data, self.config.tau_max, parents, tests)

    def run(self):
        logger.info('running PCMCI on %d variables, %d samples, %d candidate links (tau_max=%d)',
                    self.data.C, self.sample_size, len(self.assumptions), self.config.tau_max)
        results = self.run_mci(self.run_pc1())
        graph = results.to_graph(self.config.alpha, self.config.fdr_method)
        logger.info('PCMCI retained %d of %d links (%d lagged)', len(graph), len(results), len(graph.lagged_links()))
        NotificationCenter().post_notification('PCMCIDidFinish', sender=self, data=NotificationData(graph=graph))
        return graph


def pc1_select_parents(data, j, assumptions, tau_max, alpha_pc=0.2, p_max=10):
    return PCMCI(data, assumptions, PCMCIConfig(tau_max=tau_max, alpha_pc=alpha_pc, p_max=p_max)).select_parents(j)


def mci_test(data, link, parents_of_j, parents_of_i, p_x=10, tau_max=6):
    """MCI test of link ((i, tau), j) given the PC1 parents of both ends"""
    (i, tau), j = link
    assumptions = LinkAssumptions.full(data.C, tau_max)
    if not assumptions.allows(i, tau, j):
        raise ContractError('link (%d, %d) -> %d is not a valid candidate' % (i, tau, j))
    engine = PCMCI(data, assumptions, PCMCIConfig(tau_max=tau_max, p_x=p_x))
    parents = {j: list(parents_of_j)}
    if i != j:
        parents[i] = list(parents_of_i)
    return engine.mci_test((i, tau), j, parents)


def run_pcmci(data, assumptions=None, tau_max=6, alpha=0.05, alpha_pc=0.2, p_max=10, p_x=10, fdr_method='none', jobs=1):
    if assumptions is None:
        assumptions = LinkAssumptions.mediator_ordering(data.kinds, tau_max)
    config = PCMCIConfig(tau_max=tau_max, alpha=alpha, alpha_pc=alpha_pc, p_max=p_max, p_x=p_x, fdr_method=fdr_method, jobs=jobs)
    return PCMCI(data, assumptions, config).run()


def graph_precision_recall(found, truth, lagged_only=True):
    """Precision and recall of the found edge set against the true one"""
    found_edges = found.edge_set(lagged_only)
    true_edges = truth.edge_set(lagged_only)
    hits = len(found_edges & true_edges)
    precision = hits / len(found_edges) if found_edges else 1.0
    recall = hits / len(true_edges) if true_edges else 1.0
    return precision, recall
