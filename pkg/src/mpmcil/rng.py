"""Deterministic named random substreams derived from one root seed.

All randomness in a run flows from a single 64-bit seed through a tree of
``SeedSequence`` spawn keys. A stream is addressed by an integer path, e.g.
``(STREAM_ENGINE, epoch)`` or ``(STREAM_MODEL, epoch, chunk)``. Because the
path, not the execution order, determines the stream, serial and thread-pool
execution of the same chunks produce identical draws.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Top-level stream ids. Reordering these would silently change every seeded
# result, so they are fixed.
STREAM_DATA = 0      # observed-data / synthetic-data generation
STREAM_ENGINE = 1    # particle draws inside the update iterations
STREAM_MODEL = 2     # likelihood-estimate draws inside the update iterations
STREAM_PROPOSAL = 3  # new-component search
STREAM_ORACLE = 4    # rejection benchmark
STREAM_REPORT = 5    # marginal sample export


@dataclass(frozen=True)
class StreamKey:
    """Value-passed address of a random substream."""

    seed: int
    path: tuple[int, ...] = ()

    def child(self, *ids: int) -> "StreamKey":
        return StreamKey(self.seed, self.path + tuple(int(i) for i in ids))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=self.path)
        return np.random.Generator(np.random.PCG64(ss))
