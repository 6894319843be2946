"""Types and meta classes"""

from functools import wraps


__all__ = 'Singleton', 'MarkerType'


class Singleton(type):
    """Metaclass for making singletons keyed by their construction arguments"""

    # noinspection PyInitNewSignature
    def __init__(cls, name, bases, dictionary):
        super().__init__(name, bases, dictionary)
        cls.__instances__ = {}

        @wraps(cls.__init__)
        def instance_creator(*args, **kw):
            key = (args, tuple(sorted(kw.items())))
            try:
                hash(key)
            except TypeError:
                raise TypeError('cannot have singletons for classes with unhashable arguments')
            if key not in cls.__instances__:
                cls.__instances__[key] = super(Singleton, cls).__call__(*args, **kw)
            return cls.__instances__[key]

        cls.__instantiate__ = instance_creator

    def __call__(cls, *args, **kw):
        return cls.__instantiate__(*args, **kw)


class MarkerType(type):
    """Metaclass for defining marker entities"""

    __boolean__ = False

    def __call__(cls, *args, **kw):
        return cls

    def __repr__(cls):
        return cls.__name__

    def __bool__(cls):
        return cls.__boolean__
