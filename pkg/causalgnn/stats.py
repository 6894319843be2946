"""Correlation based statistics: Pearson and partial correlation, Student-t tail probabilities and correlation matrices"""

import math
from dataclasses import dataclass

import numpy as np

from causalgnn import log
from causalgnn.errors import ContractError, DataError, NumericalError
from causalgnn.python import limit


__all__ = ('CITestResult', 'SingularDesignError', 'DegenerateSeriesError', 'betainc', 'student_t_sf',
           'pearson', 'partial_correlation', 'parcorr_pvalue', 'parcorr_test', 'corrcoef_matrix')


logger = log.get_logger(__name__)

RIDGE = 1e-10
R_CLAMP = 1.0 - 1e-15
_TINY = 1e-300


class SingularDesignError(NumericalError):
    """The conditioning set (with intercept) is rank deficient"""


class DegenerateSeriesError(DataError):
    """A series (or its regression residual) has zero variance"""


@dataclass(frozen=True)
class CITestResult(object):
    statistic: float
    pvalue: float
    dof: int


def _betacf(a, b, x, tolerance=1e-14, max_iterations=10000):
    """Continued fraction of the incomplete beta function, modified Lentz evaluation"""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, max_iterations + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tolerance:
            return h
    raise NumericalError('incomplete beta continued fraction did not converge for a=%g, b=%g, x=%g' % (a, b, x))


def betainc(a, b, x):
    """Regularized incomplete beta function I_x(a, b)"""
    if a <= 0 or b <= 0:
        raise ContractError('betainc needs a > 0 and b > 0')
    if not 0.0 <= x <= 1.0:
        raise ContractError('betainc needs 0 <= x <= 1, got %r' % x)
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    log_front = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    else:
        return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_sf(t, dof):
    """Survival function P(T > t) of Student's t distribution with dof degrees of freedom"""
    if dof <= 0:
        raise ContractError('degrees of freedom must be positive')
    tail = 0.5 * betainc(dof / 2.0, 0.5, dof / (dof + t * t))
    return tail if t >= 0 else 1.0 - tail


def pearson(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ContractError('pearson needs two series of equal length')
    return _correlate(x - x.mean(), y - y.mean(), x, y)


def _correlate(rx, ry, x, y):
    sxx = float(rx @ rx)
    syy = float(ry @ ry)
    for residual_ss, series in ((sxx, x), (syy, y)):
        scale = float(((series - series.mean()) ** 2).sum())
        if residual_ss <= 1e-20 * max(scale, 1e-300) or residual_ss == 0.0:
            raise DegenerateSeriesError('series has zero residual variance')
    return float(limit(float(rx @ ry) / math.sqrt(sxx * syy), min=-1.0, max=1.0))


def _residuals(targets, z):
    """OLS residuals of the columns of targets regressed on [1, z]"""
    n = targets.shape[0]
    design = np.column_stack([np.ones(n), z]) if z.size else np.ones((n, 1))
    if np.linalg.matrix_rank(design) < design.shape[1]:
        raise SingularDesignError('conditioning set is rank deficient (%d columns)' % (design.shape[1] - 1))
    gram = design.T @ design
    gram[np.diag_indices_from(gram)] += RIDGE
    coefficients = np.linalg.solve(gram, design.T @ targets)
    return targets - design @ coefficients


def _as_conditions(z, n):
    if z is None:
        return np.empty((n, 0))
    z = np.asarray(z, dtype=np.float64)
    if z.ndim == 1:
        z = z[:, None]
    if z.shape[0] != n:
        raise ContractError('conditioning matrix must have %d rows, got %d' % (n, z.shape[0]))
    return z


def partial_correlation(x, y, z=None):
    """Correlation of the residuals of x and y after regressing both on z (intercept included)"""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or x.shape != y.shape:
        raise ContractError('partial_correlation needs two series of equal length')
    n = x.shape[0]
    z = _as_conditions(z, n)
    k = z.shape[1]
    if n <= k + 2:
        raise ContractError('partial_correlation needs n > k + 2 (n=%d, k=%d)' % (n, k))
    residuals = _residuals(np.column_stack([x, y]), z)
    return _correlate(residuals[:, 0], residuals[:, 1], x, y)


def parcorr_pvalue(r, n, k):
    """Two sided p-value of a partial correlation r from n samples with k conditions"""
    dof = n - 2 - k
    if dof < 1:
        raise ContractError('not enough samples for the test: n=%d, k=%d' % (n, k))
    if abs(r) >= 1.0:
        return 0.0
    r = limit(r, min=-R_CLAMP, max=R_CLAMP)
    t_squared = dof * r * r / (1.0 - r * r)
    return float(limit(betainc(dof / 2.0, 0.5, dof / (dof + t_squared)), min=0.0, max=1.0))


def parcorr_test(x, y, z=None):
    """ParCorr conditional independence test of x and y given z"""
    n = len(x)
    z = _as_conditions(z, n)
    r = partial_correlation(x, y, z)
    dof = n - 2 - z.shape[1]
    return CITestResult(statistic=r, pvalue=parcorr_pvalue(r, n, z.shape[1]), dof=dof)


def corrcoef_matrix(features):
    """Pearson correlation matrix between the rows of a C×d feature matrix"""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] < 2:
        raise ContractError('corrcoef_matrix needs a C×d matrix with d >= 2')
    centered = features - features.mean(axis=1, keepdims=True)
    norms = np.sqrt((centered * centered).sum(axis=1))
    scale = np.abs(features).max(axis=1)
    degenerate = norms <= 1e-12 * np.maximum(scale, 1e-300) * math.sqrt(features.shape[1])
    if degenerate.any():
        raise DegenerateSeriesError('constant feature rows: %s' % np.flatnonzero(degenerate).tolist())
    normalized = centered / norms[:, None]
    matrix = np.clip(normalized @ normalized.T, -1.0, 1.0)
    np.fill_diagonal(matrix, 1.0)
    return matrix
