"""Experiment orchestration: seeded trials, SNR sweeps, ablations, CSV output.

A trial is one corpus sentence pushed through the full pipeline at one SNR
point. The leading context words of each sentence are side information: they
are known at the receiver, excluded from the transmitted payload, and
excluded from metric scoring, which covers the transmitted remainder only.
Everything is a pure function of (config, master seed); CSV output is
byte-reproducible, so per-trial wall times stay out of the file.
"""
from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from . import bp, channel, coder, icd, metrics
from .blockcode import LinearBlockCode, desegment, encode_block, load_code, segment
from .coder import CodecConfig
from .lm import NGramModel

BASELINE = "baseline"
CONTEXT_ONLY = "context_only"
FULL_ICD = "full_icd"
ABLATIONS = (BASELINE, CONTEXT_ONLY, FULL_ICD)

CSV_SCHEMA = "v1"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    corpus: str = "corpus.txt"
    channel_kind: str = channel.AWGN
    snrs_db: tuple[float, ...] = (-3.0, 0.0, 3.0, 6.0)
    code_file: str = "ldpc_49_24.alist"
    ablations: tuple[str, ...] = ABLATIONS
    trials: int = 50
    seed: int = 0
    min_words: int = 4
    max_words: int = 30
    context_words: int = 3
    f_bits: int = 16
    precision: int = 31
    bp_iters: int = 20
    lc: int = 32
    ls: int = 6
    beta: float = 1.0
    lam: float | None = None
    n_step: int = 200
    fusion_alpha: float = 0.2
    normalize_ll: bool = True
    per_block_fading: bool = False
    out: str = "results.csv"

    def __post_init__(self) -> None:
        if self.ls > self.lc - 2:
            raise ConfigError("ls must be <= lc - 2")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if not self.snrs_db:
            raise ConfigError("snr list must be non-empty")
        for a in self.ablations:
            if a not in ABLATIONS:
                raise ConfigError(f"unknown ablation {a!r}")

    def codec_config(self) -> CodecConfig:
        return CodecConfig(
            precision=self.precision,
            f_bits=self.f_bits,
            max_tokens=2 * self.max_words + 8,
        )


_CONFIG_TYPES = {
    "corpus": str,
    "channel_kind": str,
    "code_file": str,
    "out": str,
    "trials": int,
    "seed": int,
    "min_words": int,
    "max_words": int,
    "context_words": int,
    "f_bits": int,
    "precision": int,
    "bp_iters": int,
    "lc": int,
    "ls": int,
    "n_step": int,
    "beta": float,
    "lam": float,
    "fusion_alpha": float,
    "normalize_ll": bool,
    "per_block_fading": bool,
}


def parse_config(path: str | Path, overrides: dict | None = None) -> ExperimentConfig:
    """Parse a flat key=value config file; '#' starts a comment."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    values: dict = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, _, val = (s.strip() for s in line.partition("="))
        if key in ("snrs_db",):
            values[key] = tuple(float(v) for v in val.split(","))
        elif key in ("ablations",):
            values[key] = tuple(v.strip() for v in val.split(","))
        elif key in _CONFIG_TYPES:
            typ = _CONFIG_TYPES[key]
            if typ is bool:
                values[key] = val.lower() in ("1", "true", "yes", "on")
            else:
                values[key] = typ(val)
        else:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return ExperimentConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


@dataclass
class ResultRow:
    snr_db: float
    ablation: str
    channel_kind: str
    lc: int
    ls: int
    trials: int
    bleu1_mean: float
    bleu1_std: float
    bleu4_mean: float
    bleu4_std: float
    ber_mean: float
    ber_std: float
    wer_mean: float
    wer_std: float
    codec_calls_mean: float
    wall_time_s: float  # in-memory only; kept out of the CSV for reproducibility


@dataclass
class ExperimentResult:
    rows: list[ResultRow]
    hist_rows: list[tuple]  # (snr_db, bin_lo, bin_hi, correct, error)
    csv_path: Path | None = None
    hist_path: Path | None = None


def resolve_data_path(name: str | Path) -> Path:
    """Resolve a user path, falling back to the bundled data directory."""
    p = Path(name)
    if p.is_file():
        return p
    ref = resources.files("icdlab.data") / str(name)
    if ref.is_file():
        return Path(str(ref))
    raise ConfigError(f"file not found: {name}")


def load_corpus_sentences(cfg: ExperimentConfig) -> list[str]:
    path = resolve_data_path(cfg.corpus)
    lines = [ln.strip() for ln in path.read_text(encoding="utf-8").splitlines()]
    return [ln for ln in lines if ln]


def select_test_sentences(cfg: ExperimentConfig, sentences: Sequence[str]) -> list[str]:
    lo = max(cfg.min_words, cfg.context_words + 1)
    eligible = [s for s in sentences if lo <= len(s.split()) <= cfg.max_words]
    if not eligible:
        raise ConfigError("no corpus sentences satisfy the length bounds")
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xC0]))
    idx = rng.choice(len(eligible), size=cfg.trials, replace=cfg.trials > len(eligible))
    return [eligible[i] for i in idx]


def _rng_for(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *key]))


def _transmit_payload(
    payload: np.ndarray,
    code: LinearBlockCode,
    cfg: ExperimentConfig,
    snr_db: float,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Channel-code, transmit and BP-decode one payload.

    Returns (decoded payload bits, their reliabilities, all decoded codeword
    bits, all codeword reliabilities, all true codeword bits); the last three
    feed the reliability histogram.
    """
    blocks, plan = segment(payload, code.k)
    tx = np.stack([encode_block(code, b) for b in blocks]) if blocks else np.zeros((0, code.n), np.uint8)
    y = np.empty_like(tx, dtype=np.float64)
    h = np.empty_like(tx, dtype=np.float64)
    sigma = channel.snr_to_noise(snr_db)
    for i in range(tx.shape[0]):
        # Common-random-numbers pairing: draw the disturbance against the
        # all-plus-one word and flip its signs with the transmitted symbols,
        # i.e. y = x*(h+z). BPSK noise is sign-symmetric, so the per-symbol
        # law is unchanged, while ablation arms sharing a seed see identical
        # error patterns relative to their own codewords.
        base = channel.transmit(
            np.ones(code.n), cfg.channel_kind, snr_db, rng,
            per_block_fading=cfg.per_block_fading,
        )
        sym = channel.modulate_bpsk(tx[i])
        y[i] = sym * base.y
        h[i] = base.h
    bits, rho, _ = bp.decode_batch(code, y, h, sigma, bp.BPParams(max_iter=cfg.bp_iters))
    info_bits = [bits[i, : code.k] for i in range(bits.shape[0])]
    info_rho = [rho[i, : code.k] for i in range(rho.shape[0])]
    m_hat = desegment(info_bits, plan)
    rho_m = desegment_float(info_rho, plan)
    return m_hat, rho_m, bits.reshape(-1), rho.reshape(-1), tx.reshape(-1)


def desegment_float(blocks: list[np.ndarray], plan) -> np.ndarray:
    if plan.num_blocks == 0:
        return np.zeros(0, dtype=np.float64)
    joined = np.concatenate([np.asarray(b, dtype=np.float64) for b in blocks])
    return joined[: plan.payload_len]


@dataclass
class _TrialMetrics:
    bleu1: list[float] = field(default_factory=list)
    bleu4: list[float] = field(default_factory=list)
    ber: list[float] = field(default_factory=list)
    wer: list[float] = field(default_factory=list)
    codec_calls: list[int] = field(default_factory=list)
    wall: float = 0.0


def run_experiment(cfg: ExperimentConfig, write_files: bool = True) -> ExperimentResult:
    """Run the configured sweep and return (and optionally write) result rows."""
    model = NGramModel.from_corpus_file(resolve_data_path(cfg.corpus))
    code = load_code(resolve_data_path(cfg.code_file))
    codec_cfg = cfg.codec_config()
    sentences = select_test_sentences(cfg, load_corpus_sentences(cfg))

    # Per-sentence encodings are SNR independent; compute once.
    prepared = []
    for s in sentences:
        words = s.split()
        pre_words = words[: cfg.context_words]
        rest_words = words[cfg.context_words :]
        pre = model.tokenize(" ".join(pre_words))
        payload_tokens = model.tokenize(" ".join(rest_words)) + [model.vocab.eot_id]
        enc_ctx = coder.encode(model, payload_tokens, pre, codec_cfg)
        enc_bare = (
            coder.encode(model, payload_tokens, [], codec_cfg)
            if BASELINE in cfg.ablations
            else None
        )
        prepared.append((rest_words, pre, enc_ctx, enc_bare))

    rows: list[ResultRow] = []
    hist_rows: list[tuple] = []
    num_bins = 10
    for snr_i, snr_db in enumerate(cfg.snrs_db):
        acc = {a: _TrialMetrics() for a in cfg.ablations}
        hist_correct = np.zeros(num_bins, dtype=np.int64)
        hist_error = np.zeros(num_bins, dtype=np.int64)
        for t, (rest_words, pre, enc_ctx, enc_bare) in enumerate(prepared):
            need_ctx = CONTEXT_ONLY in cfg.ablations or FULL_ICD in cfg.ablations
            if need_ctx:
                rng = _rng_for(cfg.seed, snr_i, t, 1)
                m_hat_c, rho_c, dec_all, rho_all, tx_all = _transmit_payload(enc_ctx, code, cfg, snr_db, rng)
                if dec_all.size:
                    hg = metrics.confidence_histogram(rho_all, dec_all, tx_all, num_bins=num_bins)
                    hist_correct += hg.correct_counts
                    hist_error += hg.error_counts
            if enc_bare is not None:
                rng = _rng_for(cfg.seed, snr_i, t, 1)
                m_hat_b, _, _, _, _ = _transmit_payload(enc_bare, code, cfg, snr_db, rng)

            for ablation in cfg.ablations:
                start = time.perf_counter()
                if ablation == BASELINE:
                    outcome = coder.decode(model, m_hat_b, [], codec_cfg)
                    calls = 1
                    ber = metrics.bit_error_rate(enc_bare, m_hat_b)
                elif ablation == CONTEXT_ONLY:
                    outcome = coder.decode(model, m_hat_c, pre, codec_cfg)
                    calls = 1
                    ber = metrics.bit_error_rate(enc_ctx, m_hat_c)
                else:
                    result = _icd_for_trial(cfg, m_hat_c, rho_c, pre, model, codec_cfg, snr_i, t)
                    outcome = result.selected.outcome
                    calls = result.codec_invocations
                    ber = metrics.bit_error_rate(enc_ctx, m_hat_c)
                hyp_words = model.detokenize(outcome.tokens).split()
                a = acc[ablation]
                a.bleu1.append(metrics.bleu(rest_words, hyp_words, 1).value)
                a.bleu4.append(metrics.bleu(rest_words, hyp_words, 4).value)
                a.wer.append(metrics.word_error_rate(rest_words, hyp_words))
                a.ber.append(ber)
                a.codec_calls.append(calls)
                a.wall += time.perf_counter() - start

        for ablation in cfg.ablations:
            a = acc[ablation]
            rows.append(
                ResultRow(
                    snr_db=snr_db,
                    ablation=ablation,
                    channel_kind=cfg.channel_kind,
                    lc=cfg.lc,
                    ls=cfg.ls,
                    trials=cfg.trials,
                    bleu1_mean=float(np.mean(a.bleu1)),
                    bleu1_std=float(np.std(a.bleu1)),
                    bleu4_mean=float(np.mean(a.bleu4)),
                    bleu4_std=float(np.std(a.bleu4)),
                    ber_mean=float(np.mean(a.ber)),
                    ber_std=float(np.std(a.ber)),
                    wer_mean=float(np.mean(a.wer)),
                    wer_std=float(np.std(a.wer)),
                    codec_calls_mean=float(np.mean(a.codec_calls)),
                    wall_time_s=a.wall / max(len(a.bleu1), 1),
                )
            )
        edges = np.linspace(0.0, 1.0, num_bins + 1)
        for b in range(num_bins):
            hist_rows.append((snr_db, edges[b], edges[b + 1], int(hist_correct[b]), int(hist_error[b])))

    result = ExperimentResult(rows=rows, hist_rows=hist_rows)
    if write_files:
        out_path = Path(cfg.out)
        result.csv_path = write_rows_csv(rows, out_path)
        result.hist_path = write_hist_csv(hist_rows, out_path.with_name(out_path.stem + "_hist.csv"))
    return result


def _icd_for_trial(cfg, m_hat, rho_m, pre, model, codec_cfg, snr_i: int, t: int) -> icd.ICDResult:
    K = int(m_hat.shape[0])
    lc_eff = min(cfg.lc, 1 << K) if K < 63 else cfg.lc
    ls_eff = min(cfg.ls, lc_eff - 2)
    if ls_eff < 1:
        outcome = coder.decode(model, m_hat, pre, codec_cfg)
        scored = icd.ScoredReconstruction(0, outcome, 0.0, 0.0)
        return icd.ICDResult(scored, [scored], (0,), [], icd.ChainTrace(), 1)
    mh_seed = int(_rng_for(cfg.seed, snr_i, t, 2).integers(0, 2**31))
    params = icd.ICDParams(
        pool_size=lc_eff,
        sample_size=ls_eff,
        sampler=icd.SamplerParams(beta=cfg.beta, lam=cfg.lam, n_step=cfg.n_step, seed=mh_seed),
        fusion_alpha=cfg.fusion_alpha,
        normalize_ll=cfg.normalize_ll,
    )
    return icd.icd_decode(m_hat, rho_m, pre, model, codec_cfg, params)


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


def write_rows_csv(rows: list[ResultRow], path: Path) -> Path:
    header = [
        "snr_db", "ablation", "channel", "lc", "ls", "trials",
        "bleu1_mean", "bleu1_std", "bleu4_mean", "bleu4_std",
        "ber_mean", "ber_std", "wer_mean", "wer_std",
        "codec_calls_mean", "bert_similarity",
    ]
    buf = io.StringIO()
    buf.write(f"# icdlab results schema {CSV_SCHEMA}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for r in rows:
        writer.writerow([
            _fmt(r.snr_db), r.ablation, r.channel_kind, r.lc, r.ls, r.trials,
            _fmt(r.bleu1_mean), _fmt(r.bleu1_std), _fmt(r.bleu4_mean), _fmt(r.bleu4_std),
            _fmt(r.ber_mean), _fmt(r.ber_std), _fmt(r.wer_mean), _fmt(r.wer_std),
            _fmt(r.codec_calls_mean), "",
        ])
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


def write_hist_csv(hist_rows: list[tuple], path: Path) -> Path:
    buf = io.StringIO()
    buf.write(f"# icdlab reliability histogram schema {CSV_SCHEMA}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["snr_db", "bin_lo", "bin_hi", "correct", "error"])
    for row in hist_rows:
        writer.writerow([_fmt(v) for v in row])
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path
