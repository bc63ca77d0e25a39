"""Probability models that drive the arithmetic coder.

A model maps a token context to a distribution over the next token.
The coder itself never consumes raw floats: every distribution is
quantized to an integer frequency table with total 2**f_bits, so the
encoder and decoder walk bit-identical interval boundaries.
"""
from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class InvalidTokenError(ValueError):
    """A context or payload token id is outside the model vocabulary."""


class CapacityError(ValueError):
    """Requested table resolution cannot host the vocabulary."""


@dataclass(frozen=True)
class Vocabulary:
    """Contiguous token ids 0..size-1 with one reserved end-of-text id."""

    size: int
    eot_id: int

    def __post_init__(self) -> None:
        if self.size < 2:
            raise ValueError(f"vocabulary needs at least 2 tokens, got {self.size}")
        if not 0 <= self.eot_id < self.size:
            raise ValueError(f"eot_id {self.eot_id} outside 0..{self.size - 1}")

    def validate(self, tokens: Sequence[int]) -> None:
        for t in tokens:
            if not 0 <= t < self.size:
                raise InvalidTokenError(f"token id {t} outside vocabulary of size {self.size}")


def quantize_distribution(p: np.ndarray, f_bits: int) -> np.ndarray:
    """Quantize a probability vector to integer counts summing to 2**f_bits.

    Every token receives a floor count of 1 so the decoder can always land
    in a nonzero interval; the remaining budget is apportioned by largest
    remainder of p_i * (2**f_bits - tau), ties going to the lower token id.
    """
    if f_bits < 2:
        raise ValueError(f"f_bits must be >= 2, got {f_bits}")
    p = np.asarray(p, dtype=np.float64)
    tau = p.shape[0]
    total = 1 << f_bits
    if tau > total - tau:
        raise CapacityError(f"vocabulary size {tau} too large for f_bits={f_bits}")
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
        # Float slack in a not-quite-normalized input; shave the largest counts.
        order = np.argsort(-counts, kind="stable")
        for idx in order[: -deficit]:
            counts[idx] -= 1
    return counts


class TokenModel:
    """Base class: deterministic next-token distributions over a Vocabulary."""

    vocab: Vocabulary

    def __init__(self, vocab: Vocabulary):
        self.vocab = vocab
        self._count_cache: dict[tuple, np.ndarray] = {}

    def next_distribution(self, context: Sequence[int]) -> np.ndarray:
        raise NotImplementedError

    def _context_key(self, context: Sequence[int]):
        """Smallest context signature the model actually conditions on."""
        return tuple(context)

    def next_counts(self, context: Sequence[int], f_bits: int) -> np.ndarray:
        """Quantized frequency table for the next token; cached per context key."""
        key = (self._context_key(context), f_bits)
        counts = self._count_cache.get(key)
        if counts is None:
            counts = quantize_distribution(self.next_distribution(context), f_bits)
            counts.setflags(write=False)
            self._count_cache[key] = counts
        return counts


class UniformModel(TokenModel):
    """Every token equally likely regardless of context."""

    def next_distribution(self, context: Sequence[int]) -> np.ndarray:
        self.vocab.validate(context)
        return np.full(self.vocab.size, 1.0 / self.vocab.size)

    def _context_key(self, context: Sequence[int]):
        return ()


class StaticModel(TokenModel):
    """Fixed next-token distribution, context-independent. Test workhorse."""

    def __init__(self, probs: Sequence[float], eot_id: int | None = None):
        probs = np.asarray(probs, dtype=np.float64)
        vocab = Vocabulary(size=probs.shape[0], eot_id=probs.shape[0] - 1 if eot_id is None else eot_id)
        super().__init__(vocab)
        self._p = probs / probs.sum()

    def next_distribution(self, context: Sequence[int]) -> np.ndarray:
        self.vocab.validate(context)
        return self._p.copy()

    def _context_key(self, context: Sequence[int]):
        return ()


class NGramModel(TokenModel):
    """Interpolated back-off n-gram over whitespace words, frozen after training.

    Ids are assigned to the sorted unique words of the corpus; end-of-text is
    the final id. Each prediction mixes the maximum-likelihood rows of the
    longest matched histories with an add-1 unigram floor, so every token
    keeps nonzero mass and the mixture stays deterministic. Contexts shorter
    than the model order are padded with a start-of-sentence sentinel.
    """

    _BOS = -1

    def __init__(
        self,
        words: Sequence[str],
        counts: list[dict],
        order: int,
        weights: Sequence[float] | None = None,
    ):
        if order < 1:
            raise ValueError("order must be >= 1")
        tau = len(words) + 1
        super().__init__(Vocabulary(size=tau, eot_id=tau - 1))
        self.order = order
        if weights is None:
            weights = _default_weights(order)
        if len(weights) != order or min(weights) <= 0:
            raise ValueError("need one positive weight per order")
        self.weights = tuple(float(w) for w in weights)  # longest history first
        self._words = list(words)
        self._word_to_id = {w: i for i, w in enumerate(self._words)}
        self._counts = counts
        self._totals = [
            {ctx: sum(c.values()) for ctx, c in level.items()} for level in counts
        ]
        uni = np.ones(tau)
        for t, c in counts[0][()].items():
            uni[t] += c
        self._uni_base = uni / (self._totals[0][()] + tau)

    @classmethod
    def from_corpus(cls, lines: Iterable[str], order: int = 3,
                    weights: Sequence[float] | None = None) -> "NGramModel":
        sentences = [line.split() for line in lines if line.strip()]
        if not sentences:
            raise ValueError("empty corpus")
        words = sorted({w for s in sentences for w in s})
        word_to_id = {w: i for i, w in enumerate(words)}
        eot = len(words)
        counts: list[dict] = [defaultdict(Counter) for _ in range(order)]
        for s in sentences:
            ids = [word_to_id[w] for w in s] + [eot]
            hist = [cls._BOS] * (order - 1)
            for t in ids:
                for o in range(order):
                    ctx = tuple(hist[len(hist) - o :]) if o else ()
                    counts[o][ctx][t] += 1
                if order > 1:
                    hist = hist[1:] + [t]
        return cls(words, counts, order=order, weights=weights)

    @classmethod
    def from_corpus_file(cls, path: str | Path, order: int = 3,
                         weights: Sequence[float] | None = None) -> "NGramModel":
        text = Path(path).read_text(encoding="utf-8")
        return cls.from_corpus(text.splitlines(), order=order, weights=weights)

    def tokenize(self, text: str) -> list[int]:
        ids = []
        for w in text.split():
            if w not in self._word_to_id:
                raise InvalidTokenError(f"word {w!r} not in model vocabulary")
            ids.append(self._word_to_id[w])
        return ids

    def detokenize(self, ids: Sequence[int]) -> str:
        words = []
        for t in ids:
            if t == self.vocab.eot_id:
                break
            if not 0 <= t < self.vocab.size:
                raise InvalidTokenError(f"token id {t} outside vocabulary")
            words.append(self._words[t])
        return " ".join(words)

    def _context_key(self, context: Sequence[int]):
        window = [self._BOS] * (self.order - 1) + list(context)
        return tuple(window[len(window) - (self.order - 1) :])

    def next_distribution(self, context: Sequence[int]) -> np.ndarray:
        self.vocab.validate(context)
        tau = self.vocab.size
        window = self._context_key(context)
        p = self.weights[-1] * self._uni_base.copy()
        for o in range(1, self.order):
            ctx = window[len(window) - o :]
            total = self._totals[o].get(ctx, 0)
            if total > 0:
                row = np.zeros(tau)
                for t, c in self._counts[o][ctx].items():
                    row[t] = c
                p += self.weights[self.order - 1 - o] * row / total
        return p / p.sum()


def _default_weights(order: int) -> tuple[float, ...]:
    """Longest-history weight 0.7, geometric falloff, unigram takes the rest."""
    if order == 1:
        return (1.0,)
    ws = [0.7 * (0.3 ** i) for i in range(order - 1)]
    return tuple(ws + [max(1.0 - sum(ws), 0.05)])


def sequence_log_likelihood(
    model: TokenModel,
    tokens: Sequence[int],
    context_prefix: Sequence[int] = (),
    *,
    f_bits: int = 16,
    quantized: bool = True,
) -> float:
    """Natural-log likelihood of tokens under the model, accumulated stepwise.

    With quantized=True (the default) each step scores count/total from the
    same integer tables the codec uses, so the result matches the decode
    path exactly; quantized=False scores the raw model probabilities.
    """
    if not len(tokens):
        raise ValueError("tokens must be non-empty")
    model.vocab.validate(tokens)
    total = float(1 << f_bits)
    ctx = list(context_prefix)
    ll = 0.0
    for t in tokens:
        if quantized:
            counts = model.next_counts(tuple(ctx), f_bits)
            ll += math.log(counts[t] / total)
        else:
            ll += math.log(model.next_distribution(tuple(ctx))[t])
        ctx.append(t)
    return ll
