"""Text-fidelity and link-quality metrics."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

_EPS = 1e-9  # floor for zero n-gram matches


@dataclass(frozen=True)
class BleuScore:
    value: float
    n: int


@dataclass
class ConfidenceHistogram:
    bin_edges: np.ndarray
    correct_counts: np.ndarray
    error_counts: np.ndarray


def _ngrams(tokens: list, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(reference: list, hypothesis: list, n: int = 4) -> BleuScore:
    """Sentence BLEU with uniform weights, brevity penalty, epsilon smoothing."""
    if not 1 <= n <= 4:
        raise ValueError("n must be in 1..4")
    if not hypothesis:
        return BleuScore(0.0, n)
    log_p = 0.0
    for order in range(1, n + 1):
        cand = max(len(hypothesis) - order + 1, 0)
        if cand == 0:
            log_p += np.log(_EPS)
            continue
        ref_counts = _ngrams(reference, order)
        hyp_counts = _ngrams(hypothesis, order)
        matches = sum(min(c, ref_counts[g]) for g, c in hyp_counts.items())
        log_p += np.log(max(matches, _EPS) / cand)
    bp = 1.0 if len(hypothesis) >= len(reference) else np.exp(1.0 - len(reference) / len(hypothesis))
    return BleuScore(float(bp * np.exp(log_p / n)), n)


def bit_error_rate(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch {a.shape} vs {b.shape}")
    if a.size == 0:
        return 0.0
    return float(np.mean(a != b))


def word_error_rate(reference: list, hypothesis: list) -> float:
    """Levenshtein distance over words, normalized by reference length."""
    if not reference:
        return 0.0 if not hypothesis else 1.0
    prev = list(range(len(hypothesis) + 1))
    for i, r in enumerate(reference, start=1):
        cur = [i] + [0] * len(hypothesis)
        for j, h in enumerate(hypothesis, start=1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (r != h))
        prev = cur
    return prev[-1] / len(reference)


def confidence_histogram(
    rho: np.ndarray,
    decoded: np.ndarray,
    true_bits: np.ndarray,
    num_bins: int = 10,
) -> ConfidenceHistogram:
    """Tally correct and erroneous decisions per uniform reliability bin."""
    rho = np.asarray(rho, dtype=np.float64)
    decoded = np.asarray(decoded)
    true_bits = np.asarray(true_bits)
    if not (rho.shape == decoded.shape == true_bits.shape):
        raise ValueError("rho, decoded and true_bits must share a shape")
    bins = np.minimum((rho * num_bins).astype(np.int64), num_bins - 1)
    correct = decoded == true_bits
    correct_counts = np.bincount(bins[correct], minlength=num_bins)
    error_counts = np.bincount(bins[~correct], minlength=num_bins)
    return ConfidenceHistogram(
        bin_edges=np.linspace(0.0, 1.0, num_bins + 1),
        correct_counts=correct_counts,
        error_counts=error_counts,
    )
