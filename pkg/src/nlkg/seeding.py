"""Named, counter-based random streams derived from a single integer seed."""

from __future__ import annotations

import hashlib

import numpy as np


def stream_key(seed: int, name: str) -> int:
    h = hashlib.sha256(f"{int(seed)}:{name}".encode()).digest()
    return int.from_bytes(h[:16], "little")


def stream(seed: int, name: str) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=stream_key(seed, name)))


def sample_stream(seed: int, name: str, index: int) -> np.random.Generator:
    """Generator for sample ``index`` of a stream; independent of how samples are batched."""
    return np.random.Generator(np.random.Philox(key=stream_key(seed, name), counter=[0, 0, 0, int(index)]))
