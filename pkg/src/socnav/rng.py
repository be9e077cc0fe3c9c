"""Named counter-based random streams derived from a single run seed.

Each concern (person motion, exploration, spawn placement, task events,
clustering) gets its own Philox stream so that any one of them can be
replayed in isolation without disturbing the draw order of the others.
"""

from __future__ import annotations

import numpy as np

# Fixed stream ids. Changing these invalidates recorded runs.
_STREAMS = {
    "spawn": 1,
    "motion": 2,
    "explore": 3,
    "events": 4,
    "kmeans": 5,
}


def stream(seed: int, name: str) -> np.random.Generator:
    """Return the named Philox stream for a run seed."""
    if name not in _STREAMS:
        raise KeyError(f"unknown rng stream {name!r}")
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(_STREAMS[name],))
    return np.random.Generator(np.random.Philox(ss))


class RunStreams:
    """Bundle of all named streams for one run seed."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self.spawn = stream(seed, "spawn")
        self.motion = stream(seed, "motion")
        self.explore = stream(seed, "explore")
        self.events = stream(seed, "events")
        self.kmeans = stream(seed, "kmeans")
