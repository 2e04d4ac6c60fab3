"""Named random substreams.

Every random draw in the package flows from one base seed through a
``module:purpose:index`` name.  Streams are Philox (counter based) keyed by a
``SeedSequence`` built from the seed and a stable hash of the name, so
replicate ``i`` of cell ``c`` is reproducible without generating anything
before it.
"""

from __future__ import annotations

import zlib

import numpy as np


def _name_words(name: str) -> list[int]:
    return [zlib.crc32(part.encode()) for part in name.split(":")]


def substream(seed: int, name: str, *index: int) -> np.random.Generator:
    """Return an independent generator for ``(seed, name, index...)``."""
    entropy = [int(seed) & 0xFFFFFFFF, *_name_words(name), *(int(i) for i in index)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def as_generator(rng) -> np.random.Generator:
    """Accept an int seed, a Generator, or None."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)
