"""Progress notifications posted by discovery, training and explanation"""

import weakref
from collections import deque
from contextlib import contextmanager
from threading import Lock, local
from time import time
from zope.interface import Interface, implementer

from causalgnn import log
from causalgnn.python.types import Singleton, MarkerType


__all__ = 'Any', 'Anonymous', 'IObserver', 'ProgressObserver', 'NotificationData', 'Notification', 'NotificationCenter', 'ObserverWeakrefProxy'


logger = log.get_logger(__name__)


class Any(object, metaclass=MarkerType):
    """Matches every sender or notification name in a subscription"""


class Anonymous(object, metaclass=MarkerType):
    """Sender of notifications posted outside of an object (module level loops)"""


class IObserver(Interface):
    """An object that receives posted notifications"""

    # noinspection PyMethodMayBeStatic
    def handle_notification(notification):
        """Called once for every matching notification, in posting order"""


@implementer(IObserver)
class ProgressObserver(object):
    """Dispatch every notification to the _NH_<name> method if the subclass defines one"""

    def handle_notification(self, notification):
        handler = getattr(self, '_NH_%s' % notification.name, None)
        if handler is not None:
            handler(notification)


@implementer(IObserver)
class ObserverWeakrefProxy(object):
    """
    Holds an observer by weak reference. Once the observer is collected its
    remaining subscriptions are purged from every notification center.
    """

    observer_map = weakref.WeakKeyDictionary()
    lock = Lock()

    def __new__(cls, observer):
        if not IObserver.providedBy(observer):
            raise TypeError('observer must implement the IObserver interface')
        with cls.lock:
            try:
                return cls.observer_map[observer]
            except KeyError:
                instance = object.__new__(cls)
                instance.observer_ref = weakref.ref(observer, instance.cleanup)
                cls.observer_map[observer] = instance
                return instance

    # noinspection PyUnusedLocal
    def cleanup(self, ref):
        for notification_center in list(NotificationCenter.__instances__.values()):
            notification_center.purge_observer(self)

    def handle_notification(self, notification):
        observer = self.observer_ref()
        if observer is not None:
            observer.handle_notification(notification)


class NotificationData(object):
    """Keyword payload of a notification, read as attributes"""

    def __init__(self, **kwargs):
        self.__dict__.update(kwargs)

    def __repr__(self):
        return '%s(%s)' % (self.__class__.__name__, ', '.join('%s=%r' % item for item in self.__dict__.items()))


class Notification(object):
    def __init__(self, name, sender=Anonymous, data=None):
        if name is Any or sender is Any:
            raise ValueError('Any is only valid in subscriptions, not as a notification name or sender')
        self.name = name
        self.sender = sender
        self.data = data if data is not None else NotificationData()
        self.timestamp = time()

    def __repr__(self):
        return '%s(%r, %r, %r)' % (self.__class__.__name__, self.name, self.sender, self.data)


class NotificationCenter(object, metaclass=Singleton):
    """
    Delivers posted notifications to the observers subscribed to their name,
    their sender, both or neither (Any).

    A notification posted by an observer while it handles another one is
    queued and delivered when the current delivery is over. The queue is per
    thread, so seed-parallel training runs post without interleaving their
    deliveries.
    """

    def __init__(self, name='default'):
        self.name = name
        self.observers = {}
        self.lock = Lock()
        self._local = local()

    @property
    def queue(self):
        try:
            return self._local.queue
        except AttributeError:
            queue = self._local.queue = deque()
            return queue

    def add_observer(self, observer, name=Any, sender=Any):
        if not IObserver.providedBy(observer):
            raise TypeError('observer must implement the IObserver interface')
        with self.lock:
            self.observers.setdefault((name, sender), set()).add(observer)

    def remove_observer(self, observer, name=Any, sender=Any):
        """Remove the (name, sender) subscription of observer, KeyError if there is none"""
        with self.lock:
            try:
                observer_set = self.observers[(name, sender)]
                observer_set.remove(observer)
            except KeyError:
                raise KeyError('observer %r not registered for %r notifications from %r' % (observer, name, sender))
            if not observer_set:
                del self.observers[(name, sender)]

    def discard_observer(self, observer, name=Any, sender=Any):
        """Remove the (name, sender) subscription of observer if there is one"""
        with self.lock:
            observer_set = self.observers.get((name, sender))
            if observer_set is not None:
                observer_set.discard(observer)
                if not observer_set:
                    del self.observers[(name, sender)]

    def purge_observer(self, observer):
        """Remove every subscription of observer"""
        with self.lock:
            for key in [key for key, observer_set in self.observers.items() if observer in observer_set]:
                self.observers[key].remove(observer)
                if not self.observers[key]:
                    del self.observers[key]

    @contextmanager
    def observing(self, observer, name=Any, sender=Any):
        """Keep observer subscribed for the duration of the with block"""
        self.add_observer(observer, name, sender)
        try:
            yield observer
        finally:
            self.discard_observer(observer, name, sender)

    def post_notification(self, name, sender=Anonymous, data=None):
        notification = Notification(name, sender, data)
        queue = self.queue
        queue.append(notification)
        if len(queue) > 1:  # posted from inside a handler
            return
        while queue:
            self._deliver(queue[0])
            queue.popleft()

    def _subscribers(self, notification):
        keys = (Any, Any), (Any, notification.sender), (notification.name, Any), (notification.name, notification.sender)
        with self.lock:
            return set().union(*(self.observers.get(key, ()) for key in keys))

    def _deliver(self, notification):
        for observer in self._subscribers(notification):
            try:
                observer.handle_notification(notification)
            except Exception:
                logger.exception('Unhandled exception in notification observer %r while handling %s', observer, notification.name)
