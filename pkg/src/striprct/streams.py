"""Counter-based random substreams.

Each substream is a Philox4x64 key derived from ``(seed, purpose, *ids)`` with
``SeedSequence``. Draw ``k`` of a substream occupies a fixed slice of the
counter space, so any replicate can be generated directly without producing
the ones before it. This keeps results identical under any chunking.
"""

from __future__ import annotations

import numpy as np

ROW_AXIS = 0
COL_AXIS = 1

PURPOSE_ASSIGNMENT = 0
PURPOSE_NOISE = 1

_WORDS_PER_COUNTER = 4


def stream_key(seed: int, *path: int) -> np.ndarray:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return ss.generate_state(2, dtype=np.uint64)


def raw_words(key: np.ndarray, start: int, count: int, width: int) -> np.ndarray:
    """uint64 words for draws ``start .. start+count-1``, shape (count, width)."""
    per_draw = -(-width // _WORDS_PER_COUNTER)
    counter = np.array([start * per_draw, 0, 0, 0], dtype=np.uint64)
    bg = np.random.Philox(key=key, counter=counter)
    words = bg.random_raw(count * per_draw * _WORDS_PER_COUNTER)
    return words.reshape(count, per_draw * _WORDS_PER_COUNTER)[:, :width]


def permutations(key: np.ndarray, start: int, count: int, n: int) -> np.ndarray:
    """Uniform random permutations of ``range(n)``, shape (count, n).

    Ranks of iid 64-bit keys; ties have probability below n^2 / 2^64 and are
    broken by position.
    """
    return np.argsort(raw_words(key, start, count, n), axis=1, kind="stable")


def uniforms(key: np.ndarray, start: int, count: int, width: int) -> np.ndarray:
    """Uniform [0, 1) doubles with 53 random bits, shape (count, width)."""
    return (raw_words(key, start, count, width) >> np.uint64(11)).astype(np.float64) * 2.0**-53
