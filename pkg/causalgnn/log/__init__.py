"""Logging for the causal-gnn library and command line tools"""

import abc
import logging
import os
import warnings


__all__ = 'ContextualLogger', 'RunLogger', 'level', 'debug', 'info', 'warning', 'error', 'exception', 'get_logger', 'capture_warnings'


ENVIRONMENT_VARIABLE = 'CAUSAL_GNN_LOG'


class Formatter(logging.Formatter):
    """Repeats the level and logger prefix on every line of a message, tracebacks included"""

    prefix_format = '{record.levelname:<8s} [{record.name}] '

    def format(self, record):
        record.message = record.getMessage()
        if record.exc_info and not record.exc_text:
            record.exc_text = self.formatException(record.exc_info)
        lines = [record.message] if record.message else []
        if record.exc_text:
            lines.append(record.exc_text)
        prefix = self.prefix_format.format(record=record)
        return '\n'.join(prefix + line for line in '\n'.join(lines).split('\n'))


stream_handler = logging.StreamHandler()
stream_handler.setFormatter(Formatter())
package_logger = logging.getLogger('causalgnn')
package_logger.addHandler(stream_handler)


def get_logger(name=None):
    """The package logger, or the logger of a module below it"""
    if name is None or name == 'causalgnn':
        return package_logger
    if not name.startswith('causalgnn.'):
        name = 'causalgnn.' + name
    return logging.getLogger(name)


def debug(message, *args, **kw):
    package_logger.debug(message, *args, **kw)


def info(message, *args, **kw):
    package_logger.info(message, *args, **kw)


def warning(message, *args, **kw):
    package_logger.warning(message, *args, **kw)


def error(message, *args, **kw):
    package_logger.error(message, *args, **kw)


def exception(message='', *args, **kw):
    package_logger.error(message, *args, exc_info=kw.pop('exc_info', None) or True, **kw)


_warnings_showwarning = warnings.showwarning
_warning_logger = logging.getLogger('causalgnn.warnings')


# noinspection PyShadowingBuiltins
def _showwarning(message, category, filename, lineno, file=None, line=None):
    if file is not None:
        _warnings_showwarning(message, category, filename, lineno, file, line)
    else:
        _warning_logger.warning(warnings.formatwarning(message, category, filename, lineno, line).rstrip('\n'))


def capture_warnings(capture=True):
    """Route python warnings (numpy RuntimeWarnings included) through the package logger, or stop doing so"""
    warnings.showwarning = _showwarning if capture else _warnings_showwarning


class ContextualLogger(object, metaclass=abc.ABCMeta):
    """Wraps a logger and rewrites every message with apply_context"""

    def __init__(self, logger, **context):
        self.logger = logger
        self.__dict__.update(context)

    @abc.abstractmethod
    def apply_context(self, message):
        return message

    def debug(self, message, *args, **kw):
        self.logger.debug(self.apply_context(message), *args, **kw)

    def info(self, message, *args, **kw):
        self.logger.info(self.apply_context(message), *args, **kw)

    def warning(self, message, *args, **kw):
        self.logger.warning(self.apply_context(message), *args, **kw)

    def error(self, message, *args, **kw):
        self.logger.error(self.apply_context(message), *args, **kw)

    def exception(self, message='', *args, **kw):
        self.logger.error(self.apply_context(message), *args, exc_info=kw.pop('exc_info', None) or True, **kw)


class RunLogger(ContextualLogger):
    """Prefix messages with the model kind and seed of a training run"""

    def __init__(self, logger, model, seed):
        super(RunLogger, self).__init__(logger, model=model, seed=seed)

    def apply_context(self, message):
        return '[{0.model} seed={0.seed}] {1}'.format(self, message)


class NamedLevel(int):
    """A logging level that prints as its name and formats as a number with d"""

    _instances = {}

    # noinspection PyInitNewSignature,PyArgumentList
    def __new__(cls, value):
        try:
            return cls._instances[value]
        except KeyError:
            instance = cls._instances[value] = int.__new__(cls, value)
            instance.name = logging.getLevelName(value)
            return instance

    def __repr__(self):
        return self.name

    __str__ = __repr__

    def __format__(self, fmt):
        if fmt.endswith('s'):
            return self.name.__format__(fmt)
        return super(NamedLevel, self).__format__(fmt)


class LevelHandler(object):
    NOTSET = NamedLevel(logging.NOTSET)
    DEBUG = NamedLevel(logging.DEBUG)
    INFO = NamedLevel(logging.INFO)
    WARNING = NamedLevel(logging.WARNING)
    ERROR = NamedLevel(logging.ERROR)
    CRITICAL = NamedLevel(logging.CRITICAL)

    named_levels = NOTSET, DEBUG, INFO, WARNING, ERROR, CRITICAL

    @property
    def current(self):
        """The level of the package logger"""
        return NamedLevel(package_logger.level)

    @current.setter
    def current(self, value):
        package_logger.setLevel(value)

    def parse(self, value):
        """Turn a level name or number into a NamedLevel (ValueError if it is neither)"""
        if isinstance(value, str):
            name = value.strip().upper()
            for named_level in self.named_levels:
                if named_level.name == name:
                    return named_level
        try:
            return NamedLevel(max(int(value), logging.NOTSET))
        except (TypeError, ValueError):
            raise ValueError('invalid log level: %s' % value)


level = LevelHandler()
level.current = level.INFO


def _apply_environment():
    value = os.environ.get(ENVIRONMENT_VARIABLE)
    if not value:
        return
    try:
        level.current = level.parse(value)
    except ValueError:
        warning('ignoring invalid %s=%s (using %s)', ENVIRONMENT_VARIABLE, value, level.current)


_apply_environment()
