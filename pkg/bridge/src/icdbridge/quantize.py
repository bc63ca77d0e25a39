"""Integer quantization of next-token distributions.

The rule must agree bit-for-bit with every client of the wire protocol:
floor count 1 per token, remaining budget apportioned by largest remainder
of p_i * (2**f_bits - tau), ties to the lower token id. Floats never cross
the wire; this is the single place they become integers.
"""
from __future__ import annotations

import numpy as np


class CapacityError(ValueError):
    """Vocabulary too large for the requested table resolution."""


def min_f_bits(vocab_size: int) -> int:
    """Smallest f_bits whose table can hold the floor-1 counts."""
    f = 2
    while (1 << f) - vocab_size < vocab_size:
        f += 1
    return f


def quantize_counts(p: np.ndarray, f_bits: int) -> np.ndarray:
    if f_bits < 2:
        raise ValueError(f"f_bits must be >= 2, got {f_bits}")
    p = np.asarray(p, dtype=np.float64)
    tau = p.shape[0]
    total = 1 << f_bits
    if tau > total - tau:
        raise CapacityError(
            f"vocabulary size {tau} needs f_bits >= {min_f_bits(tau)}, got {f_bits}"
        )
    p = p / p.sum()
    scaled = p * (total - tau)
    base = np.floor(scaled).astype(np.int64)
    counts = base + 1
    deficit = int(total - counts.sum())
    if deficit > 0:
        remainders = scaled - base
        order = np.lexsort((np.arange(tau), -remainders))
        counts[order[:deficit]] += 1
    elif deficit < 0:
        order = np.argsort(-counts, kind="stable")
        for idx in order[: -deficit]:
            counts[idx] -= 1
    return counts
