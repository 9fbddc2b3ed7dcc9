"""SplitMix64 words mapped to standard normals with Box-Muller.

SplitMix64 is counter based: word ``j`` (0-based) of the stream seeded
with ``s`` is ``mix(s + (j + 1) * GOLDEN)``, which lets whole batches of
per-trial substreams be generated with vectorized uint64 arithmetic.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

GOLDEN = 0x9E3779B97F4A7C15
_MASK = (1 << 64) - 1
DEFAULT_SEED = 42
SEED_ENV = "TCEMU_SEED"


def default_seed() -> int:
    text = os.environ.get(SEED_ENV)
    if text is None or not text.strip():
        return DEFAULT_SEED
    return int(text, 0) & _MASK


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def splitmix64_words(seeds, start: int, count: int) -> np.ndarray:
    """Words ``start .. start+count-1`` of each seed's stream, shape ``(len(seeds), count)``."""
    seeds = np.atleast_1d(np.asarray(seeds, dtype=np.uint64))
    j = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = seeds[:, None] + j[None, :] * np.uint64(GOLDEN)
        return _mix(z)


def box_muller(words: np.ndarray) -> np.ndarray:
    """Map word pairs ``(w1, w2)`` along the last axis to normal pairs ``(z0, z1)``."""
    w1 = words[..., 0::2]
    w2 = words[..., 1::2]
    scale = 2.0**-53
    u1 = ((w1 >> np.uint64(11)) + np.uint64(1)).astype(np.float64) * scale  # (0, 1]
    u2 = (w2 >> np.uint64(11)).astype(np.float64) * scale  # [0, 1)
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    out = np.empty(words.shape, dtype=np.float64)
    out[..., 0::2] = r * np.cos(theta)
    out[..., 1::2] = r * np.sin(theta)
    return out


def substream_seed(base_seed: int, trial_index: int) -> int:
    return (int(base_seed) ^ int(trial_index)) & _MASK


def trial_normals(base_seed: int, trials, count: int) -> np.ndarray:
    """First ``count`` normals of every trial's substream, shape ``(len(trials), count)``."""
    trials = np.atleast_1d(np.asarray(trials, dtype=np.uint64))
    seeds = np.uint64(int(base_seed) & _MASK) ^ trials
    n_words = count + (count & 1)
    return box_muller(splitmix64_words(seeds, 0, n_words))[:, :count]


@dataclass
class RandomStream:
    """A sequential SplitMix64 stream; ``position`` counts words consumed."""

    seed: int = DEFAULT_SEED
    position: int = 0
    mu: float = 0.0
    sigma: float = 1.0

    def __post_init__(self) -> None:
        self.seed = int(self.seed) & _MASK
        if self.mu != 0.0 or self.sigma != 1.0:
            raise ValueError("the distribution is fixed to mu=0, sigma=1")

    def next_words(self, count: int) -> np.ndarray:
        out = splitmix64_words([self.seed], self.position, count)[0]
        self.position += count
        return out

    def substream(self, index: int) -> "RandomStream":
        return RandomStream(substream_seed(self.seed, index))


def generate_normal(stream: RandomStream, count: int) -> np.ndarray:
    """Next ``count`` standard normals; each pair of normals consumes two words."""
    if count < 0:
        raise ValueError("count must be non-negative")
    words = stream.next_words(2 * ((count + 1) // 2))
    return box_muller(words)[:count]
