"""Poisson rate coding: each pixel is a per-timestep Bernoulli firing probability.

Random draws come from a counter-based generator (Philox) keyed on
``(seed, sample_index)``; within a key the stream is laid out as
``t * channels + i``.  A spike train therefore depends only on the seed, the
sample's index and its pixels, never on batch composition or call order.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class EncodingConfig:
    timesteps: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.timesteps < 1:
            raise ValueError(f"timesteps must be >= 1, got {self.timesteps}")


@dataclass(frozen=True)
class SpikeTrain:
    bits: np.ndarray  # (T, N) uint8, timestep-major

    def __post_init__(self):
        if self.bits.ndim != 2:
            raise ValueError("spike train must be a (T, N) matrix")

    @property
    def timesteps(self) -> int:
        return self.bits.shape[0]

    @property
    def channels(self) -> int:
        return self.bits.shape[1]

    def counts(self) -> np.ndarray:
        return self.bits.sum(axis=0, dtype=np.int64)

    def dumps(self) -> str:
        """Testbench text form: one line per timestep, channel 0 leftmost."""
        return "".join("".join("1" if b else "0" for b in row) + "\n" for row in self.bits)

    @classmethod
    def loads(cls, text: str) -> "SpikeTrain":
        rows = [line.strip() for line in text.splitlines() if line.strip()]
        if any(set(r) - {"0", "1"} for r in rows):
            raise ValueError("spike dump may only contain '0' and '1'")
        if len({len(r) for r in rows}) > 1:
            raise ValueError("ragged spike dump")
        return cls(np.array([[c == "1" for c in r] for r in rows], dtype=np.uint8))


def _uniforms(seed: int, index: int, count: int) -> np.ndarray:
    key = np.array([seed & _MASK64, index & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key)).random(count)


def encode_pixels(pixels: np.ndarray, timesteps: int, seed: int, index: int) -> np.ndarray:
    """(T, N) uint8 spike matrix for one pixel vector."""
    pixels = np.asarray(pixels, dtype=np.float64)
    n = pixels.shape[0]
    u = _uniforms(seed, index, timesteps * n).reshape(timesteps, n)
    # u in [0, 1): p=0 never fires, p=1 always fires
    return (u < pixels).astype(np.uint8)


def encode(sample, cfg: EncodingConfig, index: int = 0) -> SpikeTrain:
    pixels = getattr(sample, "pixels", sample)
    return SpikeTrain(encode_pixels(pixels, cfg.timesteps, cfg.seed, index))


def encode_batch(samples, cfg: EncodingConfig, start_index: int = 0) -> list[SpikeTrain]:
    return [encode(s, cfg, start_index + i) for i, s in enumerate(samples)]


def encode_array(pixels: np.ndarray, indices, timesteps: int, seed: int) -> np.ndarray:
    """Encode a (B, N) pixel block into a (B, T, N) uint8 array.

    ``indices`` are the dataset positions of the rows and key the generator.
    """
    pixels = np.asarray(pixels)
    out = np.empty((len(pixels), timesteps, pixels.shape[1]), dtype=np.uint8)
    for row, (px, idx) in enumerate(zip(pixels, indices)):
        out[row] = encode_pixels(px, timesteps, seed, int(idx))
    return out


def epoch_seed(seed: int, epoch: int) -> int:
    """Distinct encoder seed per training epoch, derived from the run seed."""
    return int(np.random.SeedSequence([seed & _MASK64, epoch]).generate_state(1, np.uint64)[0])
