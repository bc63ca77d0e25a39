"""GF(2) linear block codes: alist loading, systematic form, segmentation.

Codes are held with the generator in systematic form G = [I_k | P], so the
first k codeword bits are the message. Loading permutes parity-check
columns only when the trailing (n-k) columns cannot host the identity;
the applied permutation is recorded on the code object.
"""
from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np


class CodeConstructionError(ValueError):
    """Parity-check matrix is rank deficient or malformed."""


@dataclass(frozen=True)
class LinearBlockCode:
    n: int
    k: int
    G: np.ndarray  # k x n, systematic
    H: np.ndarray  # (n-k) x n, column order matches G
    column_permutation: np.ndarray  # stored column j came from input column perm[j]

    def __post_init__(self) -> None:
        if np.any((self.G @ self.H.T) % 2):
            raise CodeConstructionError("G.H^T != 0 over GF(2)")
        if not np.array_equal(self.G[:, : self.k], np.eye(self.k, dtype=np.uint8)):
            raise CodeConstructionError("generator is not systematic")


@dataclass(frozen=True)
class BlockPlan:
    num_blocks: int
    pad_bits: int
    payload_len: int


def parse_alist(text: str) -> np.ndarray:
    """Parse alist text into a dense (rows x cols) binary parity-check matrix.

    Handles both layout variants: adjacency lists padded to the maximum
    degree with zeros, and unpadded lists of exactly the stated degree.
    """
    toks = text.split()
    if len(toks) < 4:
        raise CodeConstructionError("alist file too short")
    it = iter(toks)
    n_cols = int(next(it))
    n_rows = int(next(it))
    max_col = int(next(it))
    max_row = int(next(it))
    col_deg = [int(next(it)) for _ in range(n_cols)]
    row_deg = [int(next(it)) for _ in range(n_rows)]
    header = 4 + n_cols + n_rows
    padded = len(toks) - header >= n_cols * max_col + n_rows * max_row
    col_widths = [max_col] * n_cols if padded else col_deg
    H = np.zeros((n_rows, n_cols), dtype=np.uint8)
    try:
        for c in range(n_cols):
            for _ in range(col_widths[c]):
                r = int(next(it))
                if r > 0:
                    H[r - 1, c] = 1
    except StopIteration as exc:
        raise CodeConstructionError("alist adjacency list truncated") from exc
    # Row adjacency (if present) is redundant; the column lists define H.
    return H


def write_alist(H: np.ndarray) -> str:
    H = np.asarray(H, dtype=np.uint8)
    rows, cols = H.shape
    col_idx = [list(np.flatnonzero(H[:, c]) + 1) for c in range(cols)]
    row_idx = [list(np.flatnonzero(H[r, :]) + 1) for r in range(rows)]
    max_c = max(len(x) for x in col_idx)
    max_r = max(len(x) for x in row_idx)
    lines = [f"{cols} {rows}", f"{max_c} {max_r}"]
    lines.append(" ".join(str(len(x)) for x in col_idx))
    lines.append(" ".join(str(len(x)) for x in row_idx))
    for adj, width in ((col_idx, max_c), (row_idx, max_r)):
        for entries in adj:
            padded = entries + [0] * (width - len(entries))
            lines.append(" ".join(str(v) for v in padded))
    return "\n".join(lines) + "\n"


def _systematize(H: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-reduce H so its last (n-k) columns are the identity.

    Pivots prefer the natural trailing columns; a column swap is made only
    when the trailing block is singular there. Returns (H_sys, permutation).
    """
    H = np.asarray(H, dtype=np.uint8).copy()
    m, n = H.shape
    k = n - m
    perm = np.arange(n)
    for i in range(m):
        target = k + i
        pivot_rows = np.flatnonzero(H[i:, target]) + i
        if pivot_rows.size == 0:
            # Pull in an untouched column with a usable pivot; columns already
            # fixed as identity (k..target-1) must stay put.
            for c in [*range(target + 1, n), *range(k)]:
                rows = np.flatnonzero(H[i:, c]) + i
                if rows.size:
                    H[:, [target, c]] = H[:, [c, target]]
                    perm[[target, c]] = perm[[c, target]]
                    pivot_rows = rows
                    break
            else:
                raise CodeConstructionError("parity-check matrix is rank deficient over GF(2)")
        r = int(pivot_rows[0])
        if r != i:
            H[[i, r]] = H[[r, i]]
        others = np.flatnonzero(H[:, target])
        others = others[others != i]
        H[others] ^= H[i]
    return H, perm


def code_from_parity_check(H: np.ndarray) -> LinearBlockCode:
    H_sys, perm = _systematize(H)
    m, n = H_sys.shape
    k = n - m
    A = H_sys[:, :k]
    G = np.concatenate([np.eye(k, dtype=np.uint8), A.T], axis=1)
    return LinearBlockCode(n=n, k=k, G=G, H=H_sys, column_permutation=perm)


def load_code(source: str | Path) -> LinearBlockCode:
    """Load a code from an alist file path or bundled data name."""
    path = Path(source)
    if path.exists():
        text = path.read_text(encoding="utf-8")
    else:
        ref = resources.files("icdlab.data") / str(source)
        if not ref.is_file():
            raise FileNotFoundError(f"no such alist file or bundled code: {source}")
        text = ref.read_text(encoding="utf-8")
    return code_from_parity_check(parse_alist(text))


def encode_block(code: LinearBlockCode, m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=np.int64)
    if m.shape != (code.k,):
        raise ValueError(f"message length {m.shape} != k={code.k}")
    return ((m @ code.G.astype(np.int64)) % 2).astype(np.uint8)


def syndrome(code: LinearBlockCode, bits: np.ndarray) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.int64)
    if bits.shape != (code.n,):
        raise ValueError(f"word length {bits.shape} != n={code.n}")
    return ((code.H.astype(np.int64) @ bits) % 2).astype(np.uint8)


def segment(payload: np.ndarray, k: int) -> tuple[list[np.ndarray], BlockPlan]:
    """Split a payload into k-bit blocks, zero-padding the last one."""
    payload = np.asarray(payload, dtype=np.uint8)
    length = payload.shape[0]
    num_blocks = (length + k - 1) // k
    pad = num_blocks * k - length
    padded = np.concatenate([payload, np.zeros(pad, dtype=np.uint8)])
    blocks = [padded[i * k : (i + 1) * k] for i in range(num_blocks)]
    return blocks, BlockPlan(num_blocks=num_blocks, pad_bits=pad, payload_len=length)


def desegment(blocks: list[np.ndarray], plan: BlockPlan) -> np.ndarray:
    if len(blocks) != plan.num_blocks:
        raise ValueError(f"expected {plan.num_blocks} blocks, got {len(blocks)}")
    if plan.num_blocks == 0:
        return np.zeros(0, dtype=np.uint8)
    joined = np.concatenate([np.asarray(b, dtype=np.uint8) for b in blocks])
    return joined[: plan.payload_len]
