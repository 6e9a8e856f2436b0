"""Counter-based random streams.

Every draw is fixed by ``(seed, stream_id)`` plus the Philox counter, so a
block of replicas gets the same numbers regardless of which worker runs it.
"""
import numpy as np


def stream(seed, *stream_id):
    """Return a ``Generator`` backed by Philox keyed on ``(seed, *stream_id)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(s) for s in stream_id))
    return np.random.Generator(np.random.Philox(ss))


def as_generator(rng):
    """Accept a Generator, an int seed or None and return a Generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is None:
        return stream(0)
    return stream(int(rng))
