"""Single-seed RNG discipline.

Every run owns one integer seed. Independent random purposes draw from named
substreams spawned from that seed in a fixed order, so adding draws to one
purpose never perturbs another.
"""

from __future__ import annotations

import numpy as np

# Fixed substream order; append only, never reorder.
SUBSTREAMS = ("initial_state", "probes", "curvature", "audit", "demo")


def rng_substream(seed: int, name: str) -> np.random.Generator:
    """Return the named child generator of ``seed``."""
    try:
        index = SUBSTREAMS.index(name)
    except ValueError:
        raise ValueError(f"unknown substream {name!r}; known: {SUBSTREAMS}") from None
    children = np.random.SeedSequence(seed).spawn(len(SUBSTREAMS))
    return np.random.default_rng(children[index])
