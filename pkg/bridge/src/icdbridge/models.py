"""Model backends served over the bridge protocol.

A backend exposes a fixed vocabulary, a reversible tokenizer, and a
deterministic next-token distribution. Two families ship: "gpt2*" loads a
pretrained causal LM through transformers (weights must be available
locally), and "ngram:<corpus>" trains the offline interpolated n-gram used
by the integration tests, so the bridge runs without any downloads.
"""
from __future__ import annotations

from collections import Counter, defaultdict
from pathlib import Path
from typing import Sequence

import numpy as np

GPT2_MODELS = ("gpt2", "gpt2-medium", "gpt2-large", "gpt2-xl")


class ModelLoadError(RuntimeError):
    pass


class NgramBackend:
    """Interpolated back-off n-gram over whitespace words (order 3)."""

    _BOS = -1
    _WEIGHTS = (0.7, 0.2, 0.1)  # trigram, bigram, add-1 unigram floor
    ORDER = 3

    def __init__(self, corpus_path: str | Path):
        path = Path(corpus_path)
        if not path.is_file():
            raise ModelLoadError(f"corpus file not found: {path}")
        sentences = [l.split() for l in path.read_text(encoding="utf-8").splitlines() if l.strip()]
        if not sentences:
            raise ModelLoadError(f"corpus file is empty: {path}")
        self.name = f"ngram:{path.name}"
        self._words = sorted({w for s in sentences for w in s})
        self._word_to_id = {w: i for i, w in enumerate(self._words)}
        self.vocab_size = len(self._words) + 1
        self.eot_id = self.vocab_size - 1
        order = self.ORDER
        self._counts = [defaultdict(Counter) for _ in range(order)]
        for s in sentences:
            ids = [self._word_to_id[w] for w in s] + [self.eot_id]
            hist = [self._BOS] * (order - 1)
            for t in ids:
                for o in range(order):
                    ctx = tuple(hist[len(hist) - o :]) if o else ()
                    self._counts[o][ctx][t] += 1
                hist = hist[1:] + [t]
        self._totals = [
            {ctx: sum(c.values()) for ctx, c in level.items()} for level in self._counts
        ]
        uni = np.ones(self.vocab_size)
        for t, c in self._counts[0][()].items():
            uni[t] += c
        self._uni_base = uni / (self._totals[0][()] + self.vocab_size)

    def tokenize(self, text: str) -> list[int]:
        try:
            return [self._word_to_id[w] for w in text.split()]
        except KeyError as exc:
            raise ValueError(f"word {exc.args[0]!r} not in vocabulary") from exc

    def detokenize(self, ids: Sequence[int]) -> str:
        words = []
        for t in ids:
            t = int(t)
            if t == self.eot_id:
                break
            if not 0 <= t < self.vocab_size:
                raise ValueError(f"token id {t} outside vocabulary")
            words.append(self._words[t])
        return " ".join(words)

    def next_probs(self, context: Sequence[int]) -> np.ndarray:
        for t in context:
            if not 0 <= int(t) < self.vocab_size:
                raise ValueError(f"token id {t} outside vocabulary")
        window = ([self._BOS] * (self.ORDER - 1) + [int(t) for t in context])[
            -(self.ORDER - 1) :
        ]
        p = self._WEIGHTS[-1] * self._uni_base.copy()
        for o in range(1, self.ORDER):
            ctx = tuple(window[len(window) - o :])
            total = self._totals[o].get(ctx, 0)
            if total > 0:
                row = np.zeros(self.vocab_size)
                for t, c in self._counts[o][ctx].items():
                    row[t] = c
                p += self._WEIGHTS[self.ORDER - 1 - o] * row / total
        return p / p.sum()


class TransformersBackend:
    """Pretrained causal LM in deterministic CPU inference mode."""

    def __init__(self, model_name: str):
        try:
            import torch
            from transformers import AutoModelForCausalLM, AutoTokenizer
        except ImportError as exc:
            raise ModelLoadError(f"transformers/torch not installed: {exc}") from exc
        try:
            self._tok = AutoTokenizer.from_pretrained(model_name)
            self._model = AutoModelForCausalLM.from_pretrained(
                model_name, torch_dtype=torch.float32
            )
        except Exception as exc:
            raise ModelLoadError(f"could not load model {model_name!r}: {exc}") from exc
        self._torch = torch
        self._model.eval()
        torch.manual_seed(0)
        self.name = model_name
        self.vocab_size = int(self._model.config.vocab_size)
        self.eot_id = int(self._tok.eos_token_id)

    def tokenize(self, text: str) -> list[int]:
        return [int(t) for t in self._tok.encode(text)]

    def detokenize(self, ids: Sequence[int]) -> str:
        ids = [int(t) for t in ids]
        if self.eot_id in ids:
            ids = ids[: ids.index(self.eot_id)]
        return self._tok.decode(ids)

    def next_probs(self, context: Sequence[int]) -> np.ndarray:
        ids = [int(t) for t in context]
        if not ids:
            ids = [self.eot_id]  # document start, GPT-2 convention
        with self._torch.no_grad():
            input_ids = self._torch.tensor([ids], dtype=self._torch.long)
            logits = self._model(input_ids).logits[0, -1].double()
            probs = self._torch.softmax(logits, dim=-1).numpy()
        return probs


def load_backend(spec: str):
    """Resolve a --model argument: 'ngram:<path>' or a gpt2 variant."""
    if spec.startswith("ngram:"):
        return NgramBackend(spec.split(":", 1)[1])
    if spec in GPT2_MODELS:
        return TransformersBackend(spec)
    raise ModelLoadError(
        f"unknown model {spec!r}; expected one of {GPT2_MODELS} or ngram:<corpus-path>"
    )
