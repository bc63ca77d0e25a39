"""Command-line entry points for the experiment harness."""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import bp, channel, coder, metrics
from .blockcode import encode_block, load_code
from .harness import (
    FULL_ICD,
    ConfigError,
    ExperimentConfig,
    load_corpus_sentences,
    parse_config,
    resolve_data_path,
    run_experiment,
    select_test_sentences,
    write_hist_csv,
    write_rows_csv,
)
from .lm import NGramModel, sequence_log_likelihood


def _parse_float_list(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(","))


def _parse_int_list(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(","))


def _load_config(args) -> ExperimentConfig:
    overrides = {"seed": args.seed, "out": args.out}
    if args.config is None:
        return ExperimentConfig(**{k: v for k, v in overrides.items() if v is not None})
    return parse_config(args.config, overrides)


def cmd_run(args) -> int:
    cfg = _load_config(args)
    result = run_experiment(cfg)
    print(f"wrote {result.csv_path} and {result.hist_path}")
    return 0


def cmd_sweep_snr(args) -> int:
    cfg = _load_config(args)
    if args.snrs:
        cfg = replace(cfg, snrs_db=args.snrs)
    result = run_experiment(cfg)
    print(f"wrote {result.csv_path} ({len(result.rows)} rows)")
    return 0


def cmd_grid(args) -> int:
    cfg = _load_config(args)
    if args.snrs:
        cfg = replace(cfg, snrs_db=args.snrs)
    rows = []
    for lc in args.lc:
        for ls in args.ls:
            if ls > lc - 2:
                print(f"skipping lc={lc} ls={ls}: needs ls <= lc - 2", file=sys.stderr)
                continue
            sub = replace(cfg, lc=lc, ls=ls, ablations=(FULL_ICD,))
            rows.extend(run_experiment(sub, write_files=False).rows)
    path = write_rows_csv(rows, Path(cfg.out))
    print(f"wrote {path} ({len(rows)} rows)")
    return 0


def cmd_hist(args) -> int:
    cfg = _load_config(args)
    code = load_code(resolve_data_path(cfg.code_file))
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x41]))
    msgs = rng.integers(0, 2, size=(args.blocks, code.k)).astype(np.uint8)
    tx = np.stack([encode_block(code, m) for m in msgs])
    sigma = channel.snr_to_noise(args.snr)
    y = np.empty(tx.shape)
    h = np.empty(tx.shape)
    for i in range(tx.shape[0]):
        obs = channel.transmit(channel.modulate_bpsk(tx[i]), cfg.channel_kind, args.snr, rng)
        y[i] = obs.y
        h[i] = obs.h
    bits, rho, _ = bp.decode_batch(code, y, h, sigma, bp.BPParams(max_iter=cfg.bp_iters))
    hg = metrics.confidence_histogram(rho.reshape(-1), bits.reshape(-1), tx.reshape(-1), num_bins=args.bins)
    rows = [
        (args.snr, hg.bin_edges[b], hg.bin_edges[b + 1], int(hg.correct_counts[b]), int(hg.error_counts[b]))
        for b in range(args.bins)
    ]
    path = write_hist_csv(rows, Path(cfg.out))
    print(f"wrote {path}")
    return 0


def cmd_roundtrip_check(args) -> int:
    cfg = _load_config(args)
    model = NGramModel.from_corpus_file(resolve_data_path(cfg.corpus))
    codec_cfg = cfg.codec_config()
    cfg = replace(cfg, trials=args.count)
    sentences = select_test_sentences(cfg, load_corpus_sentences(cfg))
    failures = 0
    for s in sentences:
        words = s.split()
        pre = model.tokenize(" ".join(words[: cfg.context_words]))
        payload = model.tokenize(" ".join(words[cfg.context_words :])) + [model.vocab.eot_id]
        bits = coder.encode(model, payload, pre, codec_cfg)
        out = coder.decode(model, bits, pre, codec_cfg)
        ll = sequence_log_likelihood(model, payload, pre, f_bits=cfg.f_bits)
        ok = out.completed and out.tokens == payload and abs(out.log_likelihood - ll) <= 1e-9
        if not ok:
            failures += 1
            print(f"FAIL: {s!r}", file=sys.stderr)
    print(f"roundtrip-check: {len(sentences) - failures}/{len(sentences)} ok")
    return 1 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="icdlab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, config_required: bool = True) -> None:
        p.add_argument("--config", required=config_required, default=None, help="flat key=value config file")
        p.add_argument("--seed", type=int, default=None, help="override master seed")
        p.add_argument("--out", default=None, help="override output path")

    p = sub.add_parser("run", help="run the configured experiment")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep-snr", help="run with an overridden SNR list")
    common(p)
    p.add_argument("--snrs", type=_parse_float_list, default=None, help="comma-separated dB values")
    p.set_defaults(func=cmd_sweep_snr)

    p = sub.add_parser("grid", help="pool-size x sample-size heatmap data")
    common(p)
    p.add_argument("--lc", type=_parse_int_list, required=True)
    p.add_argument("--ls", type=_parse_int_list, required=True)
    p.add_argument("--snrs", type=_parse_float_list, default=None)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("hist", help="reliability-vs-correctness histogram data")
    common(p, config_required=False)
    p.add_argument("--snr", type=float, default=0.0)
    p.add_argument("--blocks", type=int, default=2000)
    p.add_argument("--bins", type=int, default=10)
    p.set_defaults(func=cmd_hist)

    p = sub.add_parser("roundtrip-check", help="verify lossless encode/decode on corpus sentences")
    common(p)
    p.add_argument("--count", type=int, default=100)
    p.set_defaults(func=cmd_roundtrip_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
