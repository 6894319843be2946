import gc

import pytest
from zope.interface import implementer

from causalgnn.notification import Any, IObserver, NotificationCenter, NotificationData, ObserverWeakrefProxy, ProgressObserver


@implementer(IObserver)
class Recorder(object):
    def __init__(self):
        self.received = []

    def handle_notification(self, notification):
        self.received.append(notification)


@pytest.fixture
def center():
    return NotificationCenter('test')


class TestNotificationCenter:
    def test_is_a_singleton_per_name(self):
        assert NotificationCenter('test') is NotificationCenter('test')
        assert NotificationCenter('test') is not NotificationCenter('other')

    def test_observers_must_implement_the_interface(self, center):
        with pytest.raises(TypeError):
            center.add_observer(object())

    def test_subscription_by_name(self, center):
        recorder = Recorder()
        center.add_observer(recorder, name='TrainerDidFinishEpoch')
        try:
            center.post_notification('TrainerDidFinishEpoch', data=NotificationData(epoch=3, loss=0.5))
            center.post_notification('PCMCIDidFinish')
        finally:
            center.remove_observer(recorder, name='TrainerDidFinishEpoch')
        assert [item.name for item in recorder.received] == ['TrainerDidFinishEpoch']
        assert recorder.received[0].data.epoch == 3

    def test_subscription_by_sender(self, center):
        recorder, sender = Recorder(), object()
        center.add_observer(recorder, sender=sender)
        try:
            center.post_notification('ExplainerDidFinishSample', sender=sender)
            center.post_notification('ExplainerDidFinishSample')
        finally:
            center.discard_observer(recorder, sender=sender)
        assert len(recorder.received) == 1
        assert recorder.received[0].sender is sender

    def test_remove_unknown_observer(self, center):
        with pytest.raises(KeyError):
            center.remove_observer(Recorder(), name='PCMCIDidFinish')
        center.discard_observer(Recorder(), name='PCMCIDidFinish')

    def test_nested_posts_are_delivered_in_order(self, center):
        order = []

        @implementer(IObserver)
        class Reposter(object):
            def handle_notification(self, notification):
                order.append(notification.name)
                if notification.name == 'First':
                    center.post_notification('Second')

        reposter = Reposter()
        center.add_observer(reposter)
        try:
            center.post_notification('First')
        finally:
            center.discard_observer(reposter)
        assert order == ['First', 'Second']

    def test_failing_observer_does_not_stop_delivery(self, center, caplog):
        @implementer(IObserver)
        class Broken(object):
            def handle_notification(self, notification):
                raise RuntimeError('broken')

        broken, recorder = Broken(), Recorder()
        center.add_observer(broken)
        center.add_observer(recorder)
        try:
            center.post_notification('PCMCIDidFinish')
        finally:
            center.purge_observer(broken)
            center.purge_observer(recorder)
        assert len(recorder.received) == 1
        assert 'Unhandled exception in notification observer' in caplog.text

    def test_any_is_not_a_notification_name(self, center):
        with pytest.raises(ValueError):
            center.post_notification(Any)


def test_weakref_proxy_drops_dead_observers(center):
    recorder = Recorder()
    proxy = ObserverWeakrefProxy(recorder)
    assert ObserverWeakrefProxy(recorder) is proxy
    center.add_observer(proxy, name='TrainerDidSelectModel')
    center.post_notification('TrainerDidSelectModel')
    assert len(recorder.received) == 1
    del recorder
    gc.collect()
    assert ('TrainerDidSelectModel', Any) not in center.observers


def test_observing_subscribes_for_the_block(center):
    recorder = Recorder()
    with center.observing(recorder, name='PCMCIDidFinish'):
        center.post_notification('PCMCIDidFinish')
    center.post_notification('PCMCIDidFinish')
    assert len(recorder.received) == 1
    assert ('PCMCIDidFinish', Any) not in center.observers


def test_progress_observer_dispatches_by_name(center):
    class Epochs(ProgressObserver):
        def __init__(self):
            self.epochs = []

        def _NH_TrainerDidFinishEpoch(self, notification):
            self.epochs.append(notification.data.epoch)

    observer = Epochs()
    with center.observing(observer):
        for epoch in range(3):
            center.post_notification('TrainerDidFinishEpoch', data=NotificationData(epoch=epoch))
        center.post_notification('TrainerDidSelectModel', data=NotificationData(epoch=1))
    assert observer.epochs == [0, 1, 2]
