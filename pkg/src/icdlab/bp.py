"""Soft-output channel decoding with per-bit reliabilities.

The reference decoder is flooding sum-product belief propagation over the
code's parity-check matrix. Its contract is the pair (decoded codeword,
reliability vector rho), where rho_d is the probability the d-th hard
decision is correct; any decoder producing that pair can be slotted in,
including one replaying externally computed disturbance estimates.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .blockcode import LinearBlockCode
from .channel import SoftObservation, sign_to_bin


@dataclass(frozen=True)
class BPParams:
    max_iter: int = 20
    llr_clamp: float = 30.0


@dataclass
class BlockDecodeResult:
    x_hat_b: np.ndarray       # decoded codeword bits, length n
    rho: np.ndarray           # per-bit confidence in [0,1], length n
    converged: bool           # zero syndrome reached


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=np.float64)))


class _EdgeLayout:
    """Flattened Tanner-graph edges of H, grouped by check for message passing."""

    def __init__(self, H: np.ndarray):
        rows, cols = np.nonzero(H)
        order = np.lexsort((cols, rows))
        self.e_row = rows[order]
        self.e_col = cols[order]
        self.n_edges = self.e_row.shape[0]
        m = H.shape[0]
        degs = np.bincount(self.e_row, minlength=m)
        self.max_deg = int(degs.max())
        self.idx = np.full((m, self.max_deg), -1, dtype=np.int64)
        for r in range(m):
            members = np.flatnonzero(self.e_row == r)
            self.idx[r, : members.shape[0]] = members
        self.pad_mask = self.idx < 0
        self.idx_safe = np.where(self.pad_mask, 0, self.idx)
        # One-hot scatter matrix: column sums of edge values via matmul.
        self.scatter = np.zeros((self.n_edges, H.shape[1]))
        self.scatter[np.arange(self.n_edges), self.e_col] = 1.0


def _layout(code: LinearBlockCode) -> _EdgeLayout:
    lay = getattr(code, "_edge_layout", None)
    if lay is None:
        lay = _EdgeLayout(code.H)
        object.__setattr__(code, "_edge_layout", lay)  # frozen dataclass, cache only
    return lay


def decode_batch(
    code: LinearBlockCode,
    y: np.ndarray,
    h: np.ndarray,
    sigma_n: float,
    params: BPParams = BPParams(),
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sum-product decode a batch of received blocks.

    Returns (hard bits [B,n], rho [B,n], converged [B]). Blocks whose hard
    decision satisfies all parity checks exit early with their current
    posterior; the rest run the full iteration budget.
    """
    lay = _layout(code)
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    h = np.atleast_2d(np.asarray(h, dtype=np.float64))
    B, n = y.shape
    clamp = params.llr_clamp
    Ht = code.H.T.astype(np.int64)

    Lch = np.clip(2.0 * h * y / (sigma_n ** 2), -clamp, clamp)

    out_bits = np.zeros((B, n), dtype=np.uint8)
    out_rho = np.zeros((B, n), dtype=np.float64)
    out_conv = np.zeros(B, dtype=bool)

    def finish(rows: np.ndarray, post: np.ndarray, conv: bool) -> None:
        out_bits[rows] = sign_to_bin(post)
        out_rho[rows] = sigmoid(np.abs(post))
        out_conv[rows] = conv

    def checks_ok(post: np.ndarray) -> np.ndarray:
        hard = sign_to_bin(post).astype(np.int64)
        return ~np.any((hard @ Ht) % 2 > 0, axis=1)

    active = np.arange(B)
    post = Lch
    ok = checks_ok(post)
    finish(active[ok], post[ok], True)
    active = active[~ok]
    if active.size == 0:
        return out_bits, out_rho, out_conv

    Lch_a = Lch[active]
    M = Lch_a[:, lay.e_col].copy()  # variable-to-check messages

    for it in range(params.max_iter):
        T = np.tanh(M / 2.0)
        Tpad = T[:, lay.idx_safe]
        Tpad[:, lay.pad_mask] = 1.0
        # Leave-one-out products per check via exclusive prefix/suffix scans.
        pref = np.ones_like(Tpad)
        pref[:, :, 1:] = np.cumprod(Tpad[:, :, :-1], axis=2)
        suff = np.ones_like(Tpad)
        suff[:, :, :-1] = np.cumprod(Tpad[:, :, :0:-1], axis=2)[:, :, ::-1]
        loo = np.clip(pref * suff, -1.0 + 1e-12, 1.0 - 1e-12)
        C2V = np.empty_like(M)
        C2V[:, lay.idx[~lay.pad_mask]] = 2.0 * np.arctanh(loo[:, ~lay.pad_mask])
        C2V = np.clip(C2V, -clamp, clamp)

        post = Lch_a + C2V @ lay.scatter
        ok = checks_ok(post)
        last = it == params.max_iter - 1
        if np.any(ok):
            finish(active[ok], post[ok], True)
            keep = ~ok
            active = active[keep]
            if active.size == 0:
                return out_bits, out_rho, out_conv
            Lch_a = Lch_a[keep]
            post = post[keep]
            C2V = C2V[keep]
        if last:
            finish(active, post, False)
            return out_bits, out_rho, out_conv
        M = np.clip(post[:, lay.e_col] - C2V, -clamp, clamp)

    return out_bits, out_rho, out_conv  # pragma: no cover (loop always returns)


def decode_block(
    code: LinearBlockCode,
    obs: SoftObservation,
    params: BPParams = BPParams(),
) -> BlockDecodeResult:
    bits, rho, conv = decode_batch(code, obs.y[None, :], obs.h[None, :], obs.sigma_n, params)
    return BlockDecodeResult(x_hat_b=bits[0], rho=rho[0], converged=bool(conv[0]))


def extract_info(result: BlockDecodeResult, code: LinearBlockCode) -> tuple[np.ndarray, np.ndarray]:
    """Systematic codes carry the message in the leading k positions."""
    return result.x_hat_b[: code.k], result.rho[: code.k]


class ExternalReliabilityDecoder:
    """Replays per-block disturbance estimates from a binary file.

    The file holds little-endian float32 values, n per block, in decode
    order. The decoded word is the hard decision on y*z_hat and the
    reliability is sigmoid(z_hat) applied to the signed estimate (the BP
    reference uses the posterior magnitude instead).
    """

    def __init__(self, path: str | Path, n: int):
        values = np.fromfile(Path(path), dtype="<f4").astype(np.float64)
        if values.size % n:
            raise ValueError(f"file holds {values.size} floats, not a multiple of n={n}")
        self._blocks = values.reshape(-1, n)
        self._cursor = 0

    @property
    def blocks_remaining(self) -> int:
        return self._blocks.shape[0] - self._cursor

    def decode_block(self, code: LinearBlockCode, obs: SoftObservation) -> BlockDecodeResult:
        if self._cursor >= self._blocks.shape[0]:
            raise RuntimeError("external estimate file exhausted")
        z_hat = self._blocks[self._cursor]
        self._cursor += 1
        x_hat = sign_to_bin(obs.y * z_hat)
        rho = sigmoid(z_hat)
        syn = (code.H @ x_hat) % 2
        return BlockDecodeResult(x_hat_b=x_hat, rho=rho, converged=not np.any(syn))
