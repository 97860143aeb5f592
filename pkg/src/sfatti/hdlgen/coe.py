"""Vendor memory-initialization (.coe) text: hex radix, one word per synapse."""
from __future__ import annotations

import re

import numpy as np


class GenerationError(ValueError):
    pass


def nibbles(bits: int) -> int:
    return -(-bits // 4)


def emit_coe(weights, bits: int, per_line: int = 16) -> str:
    """Two's-complement hex words, zero padded to ceil(bits/4) nibbles.

    ``weights`` is flattened in C order, so a (fan_in, fan_out) matrix comes
    out presynaptic-major.
    """
    raws = np.asarray(weights, dtype=np.int64).ravel()
    lo, hi = -(1 << (bits - 1)), (1 << (bits - 1)) - 1
    bad = np.flatnonzero((raws < lo) | (raws > hi))
    if bad.size:
        i = int(bad[0])
        raise GenerationError(f"entry {i} = {raws[i]} does not fit {bits} signed bits")
    width = nibbles(bits)
    mask = (1 << bits) - 1
    words = [format(int(r) & mask, f"0{width}x") for r in raws]
    lines = [",".join(words[i:i + per_line]) for i in range(0, len(words), per_line)]
    body = ",\n".join(lines)
    return f"memory_initialization_radix=16;\nmemory_initialization_vector=\n{body};\n"


_HEADER = re.compile(r"memory_initialization_radix\s*=\s*(\d+)\s*;", re.I)
_VECTOR = re.compile(r"memory_initialization_vector\s*=(.*?);", re.I | re.S)


def parse_coe(text: str, bits: int) -> np.ndarray:
    """Read a .coe back into signed raws (sign-extended from ``bits``)."""
    # lines starting with ';' are comments
    text = "\n".join(l for l in text.splitlines() if not l.lstrip().startswith(";"))
    m = _HEADER.search(text)
    if not m:
        raise GenerationError("missing memory_initialization_radix")
    radix = int(m.group(1))
    v = _VECTOR.search(text)
    if not v:
        raise GenerationError("missing memory_initialization_vector")
    tokens = [t for t in re.split(r"[,\s]+", v.group(1)) if t]
    vals = np.array([int(t, radix) for t in tokens], dtype=np.int64)
    sign = 1 << (bits - 1)
    return np.where(vals & sign, vals - (1 << bits), vals)
