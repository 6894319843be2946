"""Basic data types to describe the type of the entries in the configuration file"""

import re

from causalgnn import log


__all__ = ('Boolean', 'LogLevel', 'StringList', 'IntegerList', 'PositiveInteger', 'NonNegativeFloat', 'Probability',
           'ModelKind', 'Preset', 'FDRMethod')


class Boolean(object):
    """A boolean validator that handles multiple boolean input keywords: yes/no, true/false, on/off, 1/0"""

    __valuemap__ = {'1': True,  'yes': True, 'true': True,   'on': True,
                    '0': False, 'no': False, 'false': False, 'off': False}

    def __new__(cls, value):
        if isinstance(value, (int, float)):
            return bool(value)
        elif not hasattr(value, 'lower'):
            raise TypeError('value must be a string, number or boolean')
        try:
            return cls.__valuemap__[value.lower()]
        except KeyError:
            raise ValueError('not a boolean value: %r' % value)


class LogLevel(object):
    """A log level indicated by a non-negative integer or one of the named attributes of log.level"""

    def __new__(cls, value):
        if not isinstance(value, (str, int)):
            raise TypeError('value must be a string or number')
        return log.level.parse(value)


class StringList(object):
    """A list of strings separated by commas"""

    def __new__(cls, value):
        if isinstance(value, (tuple, list)):
            return [str(x) for x in value]
        elif isinstance(value, str):
            if value.lower() in ('none', ''):
                return []
            return re.split(r'\s*,\s*', value.strip())
        else:
            raise TypeError('value must be a string, list or tuple')


class IntegerList(object):
    """A list of integers separated by commas (seeds, horizons)"""

    def __new__(cls, value):
        items = StringList(value) if not isinstance(value, int) else [value]
        try:
            return [int(item) for item in items]
        except ValueError:
            raise ValueError('not a list of integers: %r' % value)


class PositiveInteger(int):
    def __new__(cls, value):
        instance = int.__new__(cls, value)
        if instance < 1:
            raise ValueError('value must be a positive integer: %r' % value)
        return int(instance)


class NonNegativeFloat(float):
    def __new__(cls, value):
        instance = float.__new__(cls, value)
        if not instance >= 0:
            raise ValueError('value must be a non-negative number: %r' % value)
        return float(instance)


class Probability(float):
    """A number in the closed interval [0, 1] (significance levels, rates)"""

    def __new__(cls, value):
        instance = float.__new__(cls, value)
        if not 0 <= instance <= 1:
            raise ValueError('value must be between 0 and 1: %r' % value)
        return float(instance)


class _Choice(str):
    choices = ()
    name = 'value'

    def __new__(cls, value):
        if not isinstance(value, str):
            raise TypeError('%s must be a string' % cls.name)
        value = value.strip().lower().replace('_', '-') if cls.normalize_dashes else value.strip().lower()
        if value not in cls.choices:
            raise ValueError('invalid %s: %r (expected one of %s)' % (cls.name, value, ', '.join(cls.choices)))
        return str(value)

    normalize_dashes = False


class ModelKind(_Choice):
    """The model roster: recurrent baselines and the three graph variants"""
    choices = ('lstm', 'gru', 'gnn_corr', 'gnn_full', 'gnn_causal')
    name = 'model kind'


class Preset(_Choice):
    """Named synthetic data presets"""
    choices = ('mediterranean', 'boreal', 'fig6-default')
    name = 'preset'
    normalize_dashes = True


class FDRMethod(_Choice):
    choices = ('none', 'fdr_bh')
    name = 'FDR method'
