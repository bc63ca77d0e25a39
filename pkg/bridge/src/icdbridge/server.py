"""Newline-delimited JSON protocol over TCP or stdio.

One request object per line, one response line per request. Malformed
input of any shape produces a {"status": "error"} line and the connection
survives; EOF shuts the connection (or the stdio server) down cleanly.

Request kinds:
    info        -> vocab_size, eot_id, model
    tokenize    -> ids
    detokenize  -> text
    next_dist   -> counts, integers summing to 2**f_bits (quantized here,
                   server-side, so every client codes against one table)
    similarity  -> reserved for a sentence-similarity scorer; not implemented

Responses to next_dist are deterministic: identical requests yield
identical counts for the lifetime of the server.
"""
from __future__ import annotations

import json
import socketserver
import sys
from typing import IO

from .quantize import CapacityError, quantize_counts

MAX_LINE_BYTES = 1 << 20
MAX_F_BITS = 24


class BridgeServer:
    def __init__(self, backend):
        self.backend = backend

    def handle_line(self, raw: str) -> dict:
        try:
            return self._dispatch(raw)
        except Exception as exc:  # total: any failure becomes an error reply
            return {"status": "error", "message": f"{type(exc).__name__}: {exc}"}

    def _dispatch(self, raw: str) -> dict:
        if len(raw) > MAX_LINE_BYTES:
            return {"status": "error", "message": "request line too long"}
        try:
            req = json.loads(raw)
        except json.JSONDecodeError:
            return {"status": "error", "message": "request is not valid JSON"}
        if not isinstance(req, dict):
            return {"status": "error", "message": "request must be a JSON object"}
        kind = req.get("kind")
        backend = self.backend
        if kind == "info":
            return {
                "status": "ok",
                "vocab_size": backend.vocab_size,
                "eot_id": backend.eot_id,
                "model": backend.name,
            }
        if kind == "tokenize":
            text = req.get("text")
            if not isinstance(text, str):
                return {"status": "error", "message": "tokenize needs a string 'text'"}
            return {"status": "ok", "ids": backend.tokenize(text)}
        if kind == "detokenize":
            ids = req.get("ids")
            if not isinstance(ids, list) or not all(isinstance(t, int) for t in ids):
                return {"status": "error", "message": "detokenize needs integer 'ids'"}
            return {"status": "ok", "text": backend.detokenize(ids)}
        if kind == "next_dist":
            context = req.get("context", [])
            if not isinstance(context, list) or not all(isinstance(t, int) for t in context):
                return {"status": "error", "message": "next_dist needs integer 'context'"}
            f_bits = req.get("f_bits", 16)
            if not isinstance(f_bits, int) or not 2 <= f_bits <= MAX_F_BITS:
                return {"status": "error", "message": f"f_bits must be an int in 2..{MAX_F_BITS}"}
            try:
                counts = quantize_counts(backend.next_probs(context), f_bits)
            except CapacityError as exc:
                return {"status": "error", "message": str(exc)}
            return {"status": "ok", "counts": [int(c) for c in counts]}
        if kind == "similarity":
            return {"status": "error", "message": "similarity scoring is reserved, not implemented"}
        return {"status": "error", "message": f"unknown request kind {kind!r}"}

    def serve_stream(self, rfile: IO[str], wfile: IO[str]) -> None:
        """Serve one line-oriented stream until EOF."""
        for raw in rfile:
            resp = self.handle_line(raw.rstrip("\n"))
            wfile.write(json.dumps(resp, separators=(",", ":")) + "\n")
            wfile.flush()


class _TCPHandler(socketserver.StreamRequestHandler):
    def handle(self) -> None:
        server: BridgeServer = self.server.bridge
        for raw in self.rfile:
            try:
                line = raw.decode("utf-8", errors="replace")
            except Exception:
                line = ""
            resp = server.handle_line(line.rstrip("\n"))
            self.wfile.write((json.dumps(resp, separators=(",", ":")) + "\n").encode("utf-8"))


class _ThreadingTCPServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


def serve_tcp(backend, host: str = "127.0.0.1", port: int = 0, announce: IO[str] | None = None):
    """Run the TCP server until interrupted; port 0 picks an ephemeral port."""
    srv = _ThreadingTCPServer((host, port), _TCPHandler)
    srv.bridge = BridgeServer(backend)
    bound = srv.server_address[1]
    out = announce if announce is not None else sys.stdout
    print(f"LISTENING {bound}", file=out, flush=True)
    try:
        srv.serve_forever()
    finally:
        srv.server_close()


def serve_stdio(backend) -> None:
    BridgeServer(backend).serve_stream(sys.stdin, sys.stdout)
