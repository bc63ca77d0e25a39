"""Finite-precision integer arithmetic coder over pluggable token models.

Encoder and decoder keep 'precision'-bit low/high registers and renormalize
on quarter intervals with pending-bit (straddle) handling. Decoding is a
total function: arbitrary, even corrupted, bitstreams produce a token
sequence; once real bits run out the decoder reads zeros until it emits
end-of-text or exhausts its token budget.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .lm import TokenModel

# Bits are numpy uint8 arrays, MSB-first in stream order, one bit per entry.
BitStream = np.ndarray


@dataclass(frozen=True)
class CodecConfig:
    precision: int = 31
    f_bits: int = 16
    max_tokens: int = 68  # 2 * (30-word sentence bound) + 8

    def __post_init__(self) -> None:
        if self.precision < self.f_bits + 2:
            raise ValueError(
                f"precision {self.precision} must be >= f_bits + 2 = {self.f_bits + 2}"
            )
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")


class DecodeStatus(Enum):
    COMPLETED = "completed"
    TRUNCATED = "truncated"


@dataclass
class DecodeOutcome:
    tokens: list[int]
    log_likelihood: float
    status: DecodeStatus

    @property
    def completed(self) -> bool:
        return self.status is DecodeStatus.COMPLETED


def _cumulative(counts: np.ndarray) -> np.ndarray:
    cum = np.zeros(counts.shape[0] + 1, dtype=np.int64)
    np.cumsum(counts, out=cum[1:])
    return cum


def encode(
    model: TokenModel,
    tokens: Sequence[int],
    context_prefix: Sequence[int] = (),
    cfg: CodecConfig = CodecConfig(),
) -> BitStream:
    """Arithmetic-encode a token sequence that ends with end-of-text."""
    tokens = list(tokens)
    if not tokens or tokens[-1] != model.vocab.eot_id:
        raise ValueError("token sequence must end with the end-of-text id")
    model.vocab.validate(tokens)

    full = 1 << cfg.precision
    half = full >> 1
    quarter = full >> 2
    mask = full - 1
    total = 1 << cfg.f_bits

    low, high = 0, mask
    pending = 0
    out: list[int] = []

    def emit(bit: int) -> None:
        nonlocal pending
        out.append(bit)
        out.extend([1 - bit] * pending)
        pending = 0

    ctx = list(context_prefix)
    for t in tokens:
        counts = model.next_counts(tuple(ctx), cfg.f_bits)
        cum = _cumulative(counts)
        span = high - low + 1
        high = low + (span * int(cum[t + 1])) // total - 1
        low = low + (span * int(cum[t])) // total
        while True:
            if high < half:
                emit(0)
            elif low >= half:
                emit(1)
                low -= half
                high -= half
            elif low >= quarter and high < half + quarter:
                pending += 1
                low -= quarter
                high -= quarter
            else:
                break
            low <<= 1
            high = (high << 1) | 1
        ctx.append(t)

    # Two disambiguation bits pin the final interval's quarter.
    pending += 1
    emit(0 if low < quarter else 1)
    return np.asarray(out, dtype=np.uint8)


def decode(
    model: TokenModel,
    bits: BitStream,
    context_prefix: Sequence[int] = (),
    cfg: CodecConfig = CodecConfig(),
) -> DecodeOutcome:
    """Arithmetic-decode any bitstream; never raises on corrupted input."""
    bits = np.asarray(bits, dtype=np.uint8)
    full = 1 << cfg.precision
    half = full >> 1
    quarter = full >> 2
    mask = full - 1
    total = 1 << cfg.f_bits
    log_total = math.log(total)

    n_bits = bits.shape[0]
    pos = 0
    value = 0
    for _ in range(cfg.precision):
        value = (value << 1) | (int(bits[pos]) if pos < n_bits else 0)
        pos += 1

    low, high = 0, mask
    ctx = list(context_prefix)
    decoded: list[int] = []
    ll = 0.0
    status = DecodeStatus.TRUNCATED

    while len(decoded) < cfg.max_tokens:
        counts = model.next_counts(tuple(ctx), cfg.f_bits)
        cum = _cumulative(counts)
        span = high - low + 1
        scaled = ((value - low + 1) * total - 1) // span
        t = int(np.searchsorted(cum, scaled, side="right")) - 1
        high = low + (span * int(cum[t + 1])) // total - 1
        low = low + (span * int(cum[t])) // total
        while True:
            if high < half:
                pass
            elif low >= half:
                value -= half
                low -= half
                high -= half
            elif low >= quarter and high < half + quarter:
                value -= quarter
                low -= quarter
                high -= quarter
            else:
                break
            low <<= 1
            high = (high << 1) | 1
            value = (value << 1) | (int(bits[pos]) if pos < n_bits else 0)
            pos += 1

        decoded.append(t)
        ll += math.log(int(counts[t])) - log_total
        ctx.append(t)
        if t == model.vocab.eot_id:
            status = DecodeStatus.COMPLETED
            break

    return DecodeOutcome(tokens=decoded, log_likelihood=ll, status=status)
