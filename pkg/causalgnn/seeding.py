"""Named random streams derived from a single 64-bit seed

Every consumer asks for its own stream by name, so adding a consumer never
perturbs the numbers another consumer sees.
"""

import hashlib

import numpy as np


__all__ = 'stream', 'stream_seed'


def _name_key(name):
    digest = hashlib.sha256(name.encode('utf-8')).digest()
    return tuple(int.from_bytes(digest[i:i+4], 'little') for i in range(0, 16, 4))


def stream_seed(seed, name):
    """A SeedSequence for the (seed, name) pair"""
    if not 0 <= int(seed) < 2**64:
        raise ValueError('seed must be a 64-bit unsigned integer')
    return np.random.SeedSequence(entropy=int(seed), spawn_key=_name_key(name))


def stream(seed, name):
    """A numpy Generator for the (seed, name) pair"""
    return np.random.Generator(np.random.PCG64(stream_seed(seed, name)))
