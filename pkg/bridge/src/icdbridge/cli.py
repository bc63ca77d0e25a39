"""Entry point: `icdbridge --model gpt2 --port 7070` or `--stdio`."""
from __future__ import annotations

import argparse
import sys

from .models import ModelLoadError, load_backend
from .server import serve_stdio, serve_tcp


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="icdbridge", description=__doc__)
    parser.add_argument(
        "--model",
        default="gpt2",
        help="gpt2 | gpt2-medium | gpt2-large | gpt2-xl | ngram:<corpus-path>",
    )
    mode = parser.add_mutually_exclusive_group()
    mode.add_argument("--port", type=int, default=None, help="TCP port (0 = ephemeral)")
    mode.add_argument("--stdio", action="store_true", help="serve stdin/stdout instead of TCP")
    parser.add_argument("--host", default="127.0.0.1")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        backend = load_backend(args.model)
    except ModelLoadError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.stdio:
        serve_stdio(backend)
        return 0
    port = args.port if args.port is not None else 0
    try:
        serve_tcp(backend, host=args.host, port=port)
    except KeyboardInterrupt:
        pass
    return 0


if __name__ == "__main__":
    sys.exit(main())
