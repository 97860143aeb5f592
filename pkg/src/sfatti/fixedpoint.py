"""Signed two's-complement fixed-point lanes with saturating stores.

Raw values are plain Python ints (scalars) or int64 numpy arrays (vectors).
Every store into a lane clips to the lane's range; nothing ever wraps.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class FixedPointError(ValueError):
    pass


@dataclass(frozen=True)
class FixedPointFormat:
    total_bits: int
    frac_bits: int

    def __post_init__(self):
        if not 2 <= self.total_bits <= 32:
            raise FixedPointError(f"total_bits must be in 2..32, got {self.total_bits}")
        # frac_bits == total_bits is allowed: a {4,4} lane spans [-0.5, 0.4375]
        if not 0 <= self.frac_bits <= self.total_bits:
            raise FixedPointError(
                f"frac_bits must be in 0..{self.total_bits}, got {self.frac_bits}"
            )

    @property
    def min_raw(self) -> int:
        return -(1 << (self.total_bits - 1))

    @property
    def max_raw(self) -> int:
        return (1 << (self.total_bits - 1)) - 1

    @property
    def quantum(self) -> float:
        return 2.0 ** -self.frac_bits

    def clip(self, raw):
        """Saturate a raw integer (or int array) into this lane."""
        if isinstance(raw, np.ndarray):
            return np.clip(raw, self.min_raw, self.max_raw)
        return min(max(int(raw), self.min_raw), self.max_raw)

    def contains(self, raw) -> bool:
        raw = np.asarray(raw)
        return bool(np.all((raw >= self.min_raw) & (raw <= self.max_raw)))

    def __str__(self):
        return f"Q{self.total_bits}.{self.frac_bits}"


@dataclass(frozen=True)
class FixedValue:
    raw: int
    format: FixedPointFormat

    def __post_init__(self):
        if not self.format.min_raw <= self.raw <= self.format.max_raw:
            raise FixedPointError(f"raw {self.raw} outside {self.format}")

    def to_real(self) -> float:
        return to_real(self)


def round_half_away(x):
    """Round to nearest integer, ties away from zero (scalar or array)."""
    if isinstance(x, np.ndarray):
        return (np.sign(x) * np.floor(np.abs(x) + 0.5)).astype(np.int64)
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def quantize(x: float, fmt: FixedPointFormat) -> FixedValue:
    if not math.isfinite(x):
        raise FixedPointError(f"cannot quantize non-finite value {x!r}")
    # ldexp keeps the scaling exact
    return FixedValue(fmt.clip(round_half_away(math.ldexp(x, fmt.frac_bits))), fmt)


def quantize_array(x, fmt: FixedPointFormat) -> np.ndarray:
    """Vector form of :func:`quantize`; returns int64 raws."""
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise FixedPointError("cannot quantize non-finite values")
    return fmt.clip(round_half_away(np.ldexp(x, fmt.frac_bits)))


def to_real(v: FixedValue) -> float:
    return math.ldexp(v.raw, -v.format.frac_bits)


def sat_add(a: FixedValue, b: FixedValue) -> FixedValue:
    if a.format != b.format:
        raise FixedPointError(f"format mismatch: {a.format} vs {b.format}")
    return FixedValue(a.format.clip(a.raw + b.raw), a.format)


def shift_decay_raw(raw, k: int, pure: bool = False):
    """Decay raw value(s) by a shift of ``k``.

    Default is subtract-shift, ``v - (v >> k)`` (factor ``1 - 2**-k``).
    With ``pure=True`` the result is ``v >> k`` (factor ``2**-k``).
    Python's and numpy's ``>>`` on signed ints are arithmetic shifts.
    """
    if k < 0:
        raise FixedPointError(f"shift exponent must be >= 0, got {k}")
    if pure:
        return raw >> k
    return raw - (raw >> k)


def shift_decay(v: FixedValue, k: int, pure: bool = False) -> FixedValue:
    return FixedValue(v.format.clip(shift_decay_raw(v.raw, k, pure)), v.format)
