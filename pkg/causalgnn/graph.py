"""Adjacency matrices for the graph network: causal, correlation based and fully connected, plus their normalization"""

import numpy as np

from causalgnn import log, system
from causalgnn.errors import ContractError, DataError


__all__ = ('ADJACENCY_KINDS', 'EmptyGraphError', 'AdjacencyMatrix', 'node_order', 'causal_adjacency',
           'corr_adjacency', 'full_adjacency', 'normalize_adjacency')


logger = log.get_logger(__name__)

ADJACENCY_KINDS = ('causal', 'corr', 'full')


class EmptyGraphError(ContractError):
    """The graph has no variable left once the target is masked out"""


class AdjacencyMatrix(object):
    """
    Non-negative weights between the non-target variables; weights[i][j] is
    the strength of the link i -> j. A stack of per-sample matrices (B×C×C)
    is accepted for batch dependent adjacencies.
    """

    def __init__(self, weights, variables, kind, normalized=False):
        weights = np.array(weights, dtype=np.float64)
        if weights.ndim not in (2, 3) or weights.shape[-1] != weights.shape[-2]:
            raise ContractError('adjacency weights must be square, got shape %s' % (weights.shape,))
        variables = tuple(variables)
        if len(variables) != weights.shape[-1]:
            raise ContractError('adjacency has %d nodes but %d variable names' % (weights.shape[-1], len(variables)))
        if kind not in ADJACENCY_KINDS:
            raise ContractError('adjacency kind must be one of %s' % ', '.join(ADJACENCY_KINDS))
        if not np.isfinite(weights).all() or (weights < 0).any():
            raise ContractError('adjacency weights must be finite and non-negative')
        weights.flags.writeable = False
        self.weights = weights
        self.variables = variables
        self.kind = kind
        self.normalized = normalized

    def __repr__(self):
        return '%s(kind=%r, nodes=%d, normalized=%r)' % (self.__class__.__name__, self.kind, self.size, self.normalized)

    @property
    def size(self):
        return self.weights.shape[-1]

    @property
    def batched(self):
        return self.weights.ndim == 3

    def permuted(self, order):
        """Relabel the nodes: node k of the result is node order[k] of this matrix"""
        order = list(order)
        weights = self.weights[..., order, :][..., :, order]
        return AdjacencyMatrix(weights, [self.variables[index] for index in order], self.kind, self.normalized)

    def save(self, path):
        if self.batched:
            raise ContractError('only a single adjacency matrix can be exported')
        rows = [[name] + [float(value) for value in row] for name, row in zip(self.variables, self.weights)]
        system.write_csv(path, ['variable'] + list(self.variables), rows)

    @classmethod
    def load(cls, path, kind='causal', normalized=False):
        header, rows = system.read_csv(path)
        try:
            weights = [[float(value) for value in row[1:]] for row in rows]
        except ValueError as e:
            raise DataError('malformed adjacency file %s: %s' % (path, e)) from None
        return cls(weights, header[1:], kind, normalized)


def node_order(kinds):
    """Graph node order: local variables first, then oscillation indices; the target is masked out"""
    return [index for index, kind in enumerate(kinds) if kind == 'local'] + [index for index, kind in enumerate(kinds) if kind == 'oci']


def causal_adjacency(graph):
    """Strongest retained |MCI| value over the positive lags of every directed pair"""
    order = node_order(graph.kinds)
    if not order:
        raise EmptyGraphError('the causal graph has no variable besides the target')
    position = {variable: index for index, variable in enumerate(order)}
    weights = np.zeros((len(order), len(order)))
    for link in graph.lagged_links():
        if link.source in position and link.target in position:
            a, b = position[link.source], position[link.target]
            weights[a, b] = max(weights[a, b], abs(link.mci))
    return AdjacencyMatrix(weights, [graph.variables[index] for index in order], 'causal')


def corr_adjacency(node_features, variables=None):
    """
    Absolute correlation between node feature rows (C×d, or B×C×d for one
    matrix per sample). A constant row has no correlation and is left as a
    zero row and column.
    """
    features = np.asarray(node_features, dtype=np.float64)
    if features.ndim not in (2, 3) or features.shape[-1] < 2:
        raise ContractError('corr_adjacency needs C×d or B×C×d features with d >= 2')
    centered = features - features.mean(axis=-1, keepdims=True)
    norms = np.sqrt((centered * centered).sum(axis=-1))
    scale = np.abs(features).max(axis=-1)
    degenerate = norms <= 1e-12 * np.maximum(scale, 1e-300) * np.sqrt(features.shape[-1])
    if degenerate.any():
        logger.warning('%d constant node feature rows; using zero correlation for them', int(degenerate.sum()))
    normalized = centered / np.where(degenerate, 1.0, norms)[..., None]
    normalized[degenerate] = 0.0
    weights = np.clip(np.abs(normalized @ np.swapaxes(normalized, -1, -2)), 0.0, 1.0)
    diagonal = np.arange(features.shape[-2])
    weights[..., diagonal, diagonal] = np.where(degenerate, 0.0, 1.0)
    if variables is None:
        variables = ['node%d' % index for index in range(features.shape[-2])]
    return AdjacencyMatrix(weights, variables, 'corr')


def full_adjacency(variables):
    variables = list(variables)
    if not variables:
        raise EmptyGraphError('a fully connected graph needs at least one node')
    return AdjacencyMatrix(np.ones((len(variables), len(variables))), variables, 'full')


def normalize_adjacency(adjacency):
    """
    D_out^-1/2 (A + I) D_in^-1/2 where self loops are only added to nodes
    that have none (diagonal raised to 1). The largest singular value of the
    result is at most 1.
    """
    weights = np.array(adjacency.weights)
    diagonal = np.arange(adjacency.size)
    weights[..., diagonal, diagonal] = np.maximum(weights[..., diagonal, diagonal], 1.0)
    out_degree = weights.sum(axis=-1)
    in_degree = weights.sum(axis=-2)
    normalized = weights / np.sqrt(out_degree)[..., :, None] / np.sqrt(in_degree)[..., None, :]
    return AdjacencyMatrix(normalized, adjacency.variables, adjacency.kind, normalized=True)
