"""BPSK over simulated AWGN / Rayleigh-fading channels.

SNR convention: snr_db = 10*log10(1/sigma_n^2) under unit symbol energy,
i.e. sigma_n = 10**(-snr_db/20). Fading gains are Rayleigh with unit
mean-square power, drawn per symbol by default and known at the receiver.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

AWGN = "awgn"
RAYLEIGH = "rayleigh"


@dataclass(frozen=True)
class SoftObservation:
    y: np.ndarray       # received real values
    h: np.ndarray       # fading gains, all ones for AWGN
    sigma_n: float

    def __post_init__(self) -> None:
        if self.sigma_n <= 0:
            raise ValueError("sigma_n must be positive")


def modulate_bpsk(bits: np.ndarray) -> np.ndarray:
    """Map bits to symbols via x = 1 - 2b, so bit 0 -> +1."""
    bits = np.asarray(bits, dtype=np.int8)
    return (1 - 2 * bits).astype(np.float64)


def sign_to_bin(y: np.ndarray) -> np.ndarray:
    """Hard decision: positive (and zero, by declared tie rule) -> 0, negative -> 1."""
    return (np.asarray(y) < 0).astype(np.uint8)


def snr_to_noise(snr_db: float) -> float:
    return 10.0 ** (-snr_db / 20.0)


def transmit(
    symbols: np.ndarray,
    kind: str,
    snr_db: float,
    rng: np.random.Generator,
    per_block_fading: bool = False,
) -> SoftObservation:
    """Send +-1 symbols through the channel: y = h*x + z, z ~ N(0, sigma^2)."""
    symbols = np.asarray(symbols, dtype=np.float64)
    sigma = snr_to_noise(snr_db)
    if kind == AWGN:
        h = np.ones_like(symbols)
    elif kind == RAYLEIGH:
        if per_block_fading:
            h = np.full_like(symbols, rng.rayleigh(scale=1.0 / math.sqrt(2.0)))
        else:
            h = rng.rayleigh(scale=1.0 / math.sqrt(2.0), size=symbols.shape)
    else:
        raise ValueError(f"unknown channel kind {kind!r}")
    z = rng.normal(0.0, sigma, size=symbols.shape)
    return SoftObservation(y=h * symbols + z, h=h, sigma_n=sigma)


def unified_snr(snr_unified_db: float, n_um: int, n: int, float16: bool = False) -> float:
    """Energy-normalized SNR comparing pipelines with different payload sizes.

    Fixes the total transmit energy of a reference system sending n_um payload
    units; a competing scheme sending n units sees the per-unit SNR shifted by
    10*log10(n_um/n), plus 10*log10(16) when its units are float16 values.
    """
    if n_um <= 0 or n <= 0:
        raise ValueError("payload sizes must be positive")
    snr = snr_unified_db + 10.0 * math.log10(n_um / n)
    if float16:
        snr += 10.0 * math.log10(16.0)
    return snr
