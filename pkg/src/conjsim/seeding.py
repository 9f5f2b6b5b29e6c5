"""Deterministic random-stream derivation.

Every stochastic entry point takes an explicit numpy Generator; nested
work units (events, traces, Monte Carlo batches) get child streams
derived from (seed, index path) so results do not depend on scheduling
or worker count.
"""

from __future__ import annotations

import numpy as np


def derive_rng(seed: int, *path: int) -> np.random.Generator:
    """Generator for the work unit identified by an integer index path."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, path)]))
