import logging
import warnings

import pytest

from causalgnn import log


def test_get_logger_places_modules_below_the_package_logger():
    assert log.get_logger() is log.package_logger
    assert log.get_logger('causalgnn.pcmci').name == 'causalgnn.pcmci'
    assert log.get_logger('reports').name == 'causalgnn.reports'


def test_run_logger_prefixes_the_run_context(caplog):
    logger = log.RunLogger(log.get_logger('causalgnn.training'), model='gnn_causal', seed=2)
    with caplog.at_level(logging.INFO, logger='causalgnn'):
        logger.info('epoch %d finished', 4)
    assert '[gnn_causal seed=2] epoch 4 finished' in caplog.messages


def test_formatter_prefixes_every_line():
    record = logging.LogRecord('causalgnn.graph', logging.WARNING, __file__, 1, 'first\nsecond', None, None)
    lines = log.Formatter().format(record).split('\n')
    assert lines == ['WARNING  [causalgnn.graph] first', 'WARNING  [causalgnn.graph] second']


class TestLevel:
    def test_parse(self):
        assert log.level.parse('debug') is log.level.DEBUG
        assert log.level.parse('25') == 25
        with pytest.raises(ValueError):
            log.level.parse('chatty')

    def test_current_sets_the_package_logger_level(self):
        previous = log.level.current
        try:
            log.level.current = log.level.ERROR
            assert log.package_logger.level == logging.ERROR
        finally:
            log.level.current = previous

    def test_named_level_formatting(self):
        assert '{:s}'.format(log.level.WARNING) == 'WARNING'
        assert '{:d}'.format(log.level.WARNING) == '30'


def test_captured_warnings_go_through_logging(caplog):
    with warnings.catch_warnings():
        warnings.simplefilter('always')
        log.capture_warnings()
        warnings.warn('invalid value encountered', RuntimeWarning)
        log.capture_warnings(False)
    assert 'invalid value encountered' in caplog.text
