"""Deterministic stream derivation for replicated Monte Carlo runs.

Every random quantity in the library is drawn from a generator obtained
through :func:`substream`.  Streams are keyed by ``(seed, *key)`` through
numpy's ``SeedSequence`` spawning mechanism, so

* the same key always yields the same draws (bit-identical replay), and
* distinct keys yield statistically independent streams whose output does
  not depend on the order in which they are created.  Replications can
  therefore be split across workers without changing any result.

Conventional key layout used throughout the package::

    substream(seed, rep)             innovations of replication `rep`
    substream(seed, rep, purpose)    auxiliary draws (coupling copies, ...)
"""

from __future__ import annotations

import numpy as np

__all__ = ["substream", "spawn_keys"]


def substream(seed: int, *key: int) -> np.random.Generator:
    """Return the generator for the ``(seed, *key)`` stream."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(int(k) for k in key))
    return np.random.default_rng(ss)


def spawn_keys(reps: int, start: int = 0):
    """Iterate replication ids ``start .. start+reps-1`` (helper for batch loops)."""
    return range(start, start + reps)
