"""Named random substreams.

All randomness in a run flows from one seed; each consumer (init, dropout,
shuffle, synth, ...) gets its own independent stream so component tests can
pin streams without replaying the whole pipeline.
"""

import zlib

import numpy as np


def rng_stream(seed, name):
    return np.random.default_rng(
        np.random.SeedSequence([int(seed), zlib.crc32(name.encode("utf-8"))])
    )
