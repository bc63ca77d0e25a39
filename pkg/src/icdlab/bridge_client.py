"""Client for the external probability-server bridge.

Wire protocol: newline-delimited JSON over a TCP socket, one request per
line, one response line per request, strictly in order. Requests carry a
"kind" field:

    {"kind": "info"}                              -> {"status": "ok", "vocab_size": N, "eot_id": E, "model": "..."}
    {"kind": "tokenize", "text": "..."}           -> {"status": "ok", "ids": [...]}
    {"kind": "detokenize", "ids": [...]}          -> {"status": "ok", "text": "..."}
    {"kind": "next_dist", "context": [...],
     "f_bits": B}                                 -> {"status": "ok", "counts": [...]}

next_dist counts are quantized server-side to sum to 2**f_bits, so both
sides of the link code against one integer table and no floats cross the
boundary. Any malformed request yields {"status": "error", "message": ...}
and the connection stays usable. The endpoint comes from arguments or the
ICDLAB_BRIDGE environment variable ("host:port").
"""
from __future__ import annotations

import json
import os
import socket
import threading
from typing import Sequence

import numpy as np

from .lm import TokenModel, Vocabulary

ENDPOINT_ENV = "ICDLAB_BRIDGE"


class BridgeError(RuntimeError):
    """Server reported an error or the connection broke."""


def _parse_endpoint(endpoint: str) -> tuple[str, int]:
    host, _, port = endpoint.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"endpoint must be host:port, got {endpoint!r}")
    return host, int(port)


class BridgeModel(TokenModel):
    """Token model backed by a remote probability server.

    Satisfies the same contract as the local models: deterministic
    distributions (the server runs in deterministic mode) and quantized
    tables via next_counts. Requests on one connection are serialized.
    """

    def __init__(
        self,
        host: str | None = None,
        port: int | None = None,
        timeout: float = 30.0,
    ):
        if host is None or port is None:
            endpoint = os.environ.get(ENDPOINT_ENV)
            if endpoint is None:
                raise ValueError(
                    f"no endpoint: pass host/port or set {ENDPOINT_ENV}=host:port"
                )
            host, port = _parse_endpoint(endpoint)
        self._sock = socket.create_connection((host, port), timeout=timeout)
        self._reader = self._sock.makefile("r", encoding="utf-8", newline="\n")
        self._lock = threading.Lock()
        info = self.request({"kind": "info"})
        super().__init__(Vocabulary(size=int(info["vocab_size"]), eot_id=int(info["eot_id"])))
        self.model_name = info.get("model", "")

    def request(self, payload: dict) -> dict:
        """One request/response exchange; raises BridgeError on failure."""
        line = json.dumps(payload, separators=(",", ":")) + "\n"
        with self._lock:
            try:
                self._sock.sendall(line.encode("utf-8"))
                reply = self._reader.readline()
            except OSError as exc:
                raise BridgeError(f"bridge connection failed: {exc}") from exc
        if not reply:
            raise BridgeError("bridge closed the connection")
        try:
            msg = json.loads(reply)
        except json.JSONDecodeError as exc:
            raise BridgeError(f"malformed bridge response: {reply!r}") from exc
        if msg.get("status") != "ok":
            raise BridgeError(str(msg.get("message", "unknown bridge error")))
        return msg

    def tokenize(self, text: str) -> list[int]:
        return [int(t) for t in self.request({"kind": "tokenize", "text": text})["ids"]]

    def detokenize(self, ids: Sequence[int]) -> str:
        return str(self.request({"kind": "detokenize", "ids": [int(t) for t in ids]})["text"])

    def next_counts(self, context: Sequence[int], f_bits: int) -> np.ndarray:
        key = (tuple(int(t) for t in context), f_bits)
        counts = self._count_cache.get(key)
        if counts is None:
            msg = self.request(
                {"kind": "next_dist", "context": list(key[0]), "f_bits": f_bits}
            )
            counts = np.asarray(msg["counts"], dtype=np.int64)
            if counts.shape[0] != self.vocab.size or counts.sum() != (1 << f_bits):
                raise BridgeError("bridge returned an inconsistent frequency table")
            counts.setflags(write=False)
            self._count_cache[key] = counts
        return counts

    def next_distribution(self, context: Sequence[int]) -> np.ndarray:
        """De-quantized table; the wire carries integers only."""
        counts = self.next_counts(context, 16)
        return counts / counts.sum()

    def close(self) -> None:
        try:
            self._reader.close()
        finally:
            self._sock.close()

    def __enter__(self) -> "BridgeModel":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
