"""Deterministic random-stream derivation.

Every stochastic routine takes an explicit integer seed and derives
independent substreams with :func:`substream`. The scheme is a counter
scheme built on ``numpy.random.SeedSequence``: the base seed is the
entropy and the path elements form the spawn key, so

    substream(seed, j, t)

is the same generator no matter which process, thread, or iteration
order asks for it. Batch drivers key one substream per (grid index,
trial index) and therefore produce results that are independent of the
parallelism degree.

String path elements are allowed for readability; they are mapped to
integers with SHA-256, which is stable across platforms and runs
(unlike the builtin ``hash``).
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["substream", "path_key"]


def path_key(element: int | str) -> int:
    """Map one path element to a non-negative 64-bit spawn-key entry."""
    if isinstance(element, (int, np.integer)):
        if element < 0:
            raise ValueError(f"substream path elements must be non-negative, got {element}")
        return int(element)
    digest = hashlib.sha256(element.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def substream(seed: int, *path: int | str) -> np.random.Generator:
    """Return the generator for ``seed`` at the given derivation path."""
    key = tuple(path_key(p) for p in path)
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=key))
