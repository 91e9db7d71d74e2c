"""Keyed random streams.

Every stochastic step in the simulator draws from a ``random.Random`` whose
seed is derived from a tuple key (master seed, grid point, trial, ...). String
seeds are hashed with SHA-512 by the stdlib, so a key always maps to the same
stream regardless of process, thread or scheduling order.
"""

import random
import secrets


def stream(*key) -> random.Random:
    return random.Random(":".join(str(k) for k in key))


def fresh_seed() -> int:
    """A random 32-bit master seed, for runs where the user gave none."""
    return secrets.randbits(32)
