"""Python language extensions"""

from builtins import min as minimum, max as maximum


__all__ = 'limit', 'negative_infinite', 'positive_infinite'


negative_infinite = float('-infinity')
positive_infinite = float('infinity')


# noinspection PyShadowingBuiltins
def limit(value, min=negative_infinite, max=positive_infinite):
    """Limit a numeric value to the specified range"""
    return maximum(min, minimum(value, max))
