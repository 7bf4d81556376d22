"""Counter-style random stream derivation.

Every consumer of randomness names its stream by a tuple of small integers
under one root seed. Streams are derived with SeedSequence spawn keys over
the Philox bit generator, so any (root_seed, *key) pair maps to the same
byte stream on every machine and under any parallel schedule. Reductions
over chunks are then free to run in any order as long as results are
combined by chunk index.

Stream id conventions (first key element):
    0  single noise paths (NoisePath), second element = user stream id
    1  ensemble path chunks, second element = chunk index
    2  first-passage chunks
    3  scratch/probing (Lipschitz probes etc.)
"""

import numpy as np

STREAM_PATH = 0
STREAM_ENSEMBLE = 1
STREAM_PASSAGE = 2
STREAM_PROBE = 3

# Paths are processed in fixed-size chunks and noise paths in fixed-size
# step blocks. These sizes are part of the reproducibility contract:
# changing them changes which stream generates which increment.
CHUNK_PATHS = 8192
BLOCK_STEPS = 65536


def derive_rng(root_seed, *key):
    """Generator for the stream named by `key` under `root_seed`.

    Key elements must be non-negative integers (negative block indices are
    offset by callers before arriving here).
    """
    if any(k < 0 for k in key):
        raise ValueError(f"stream key must be non-negative, got {key}")
    ss = np.random.SeedSequence(root_seed, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))
