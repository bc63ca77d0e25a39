"""Reliability-guided list decoding of channel-decoded bitstreams.

Three stages: (1) build a pool of the L_c highest-confidence bit-flip
candidates around the decoded message, ranked by aggregate per-bit
reliability; (2) Metropolis-Hastings sample a fixed-size subset of the
pool that trades aggregate confidence against pairwise Hamming diversity;
(3) source-decode the sampled candidates and fuse each candidate's
confidence with its decode-path log-likelihood to pick the output.
"""
from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import coder
from .coder import CodecConfig, DecodeOutcome
from .lm import TokenModel


@dataclass(frozen=True)
class Candidate:
    flips: tuple[int, ...]        # sorted positions flipped relative to the decoded bits
    bits: np.ndarray
    rho_tilde: np.ndarray         # per-bit confidence under this flip pattern
    conf: float                   # sum of rho_tilde, exactly rounded

    def sort_key(self):
        return (-self.conf, len(self.flips), self.flips)


class CandidatePool:
    """Confidence-sorted candidates with cached pairwise Hamming distances."""

    def __init__(self, candidates: list[Candidate], k_total: int):
        self.candidates = candidates
        self.k_total = k_total
        self.confs = np.array([c.conf for c in candidates])
        self._hamming: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.candidates)

    @property
    def hamming(self) -> np.ndarray:
        if self._hamming is None:
            X = np.stack([c.bits for c in self.candidates]).astype(np.int16)
            self._hamming = np.abs(X[:, None, :] - X[None, :, :]).sum(axis=2).astype(np.float64)
        return self._hamming


@dataclass(frozen=True)
class SubsetState:
    members: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(set(self.members)) != len(self.members):
            raise ValueError("subset members must be distinct")
        if tuple(sorted(self.members)) != self.members:
            raise ValueError("subset members must be sorted")


@dataclass(frozen=True)
class SamplerParams:
    beta: float = 1.0
    lam: float | None = None      # diversity weight; None means 0.05 / K_total
    n_step: int = 200
    seed: int = 0

    def __post_init__(self) -> None:
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.lam is not None and self.lam < 0:
            raise ValueError("lam must be non-negative")
        if self.n_step < 0:
            raise ValueError("n_step must be non-negative")

    def resolved_lam(self, k_total: int) -> float:
        if self.lam is not None:
            return self.lam
        return 0.05 / max(k_total, 1)


@dataclass
class ScoredReconstruction:
    candidate_index: int          # index into the pool
    outcome: DecodeOutcome
    conf: float
    fused_score: float = 0.0


def make_candidate(m_hat: np.ndarray, rho: np.ndarray, flips: Sequence[int]) -> Candidate:
    flips = tuple(sorted(int(p) for p in flips))
    bits = np.asarray(m_hat, dtype=np.uint8).copy()
    rho_tilde = np.asarray(rho, dtype=np.float64).copy()
    idx = list(flips)
    bits[idx] ^= 1
    rho_tilde[idx] = 1.0 - rho_tilde[idx]
    return Candidate(flips=flips, bits=bits, rho_tilde=rho_tilde, conf=math.fsum(rho_tilde))


def ccg_generate(m_hat: np.ndarray, rho: np.ndarray, pool_size: int) -> CandidatePool:
    """Top-L_c flip candidates by aggregate confidence, without enumerating 2^K.

    Flipping bit p swaps its confidence between rho_p and 1-rho_p, so every
    pattern's confidence is the per-position optimum (flip wherever rho_p<0.5)
    minus the cost |2*rho_p - 1| of each position it deviates on. The L_c best
    patterns are therefore the L_c smallest subset sums of those costs, found
    by best-first expansion over the sorted costs; the result matches the
    exhaustive ranking, with ties broken by fewer flips then lexicographically
    smaller flip set.
    """
    m_hat = np.asarray(m_hat, dtype=np.uint8)
    rho = np.asarray(rho, dtype=np.float64)
    if m_hat.shape != rho.shape or m_hat.ndim != 1:
        raise ValueError("m_hat and rho must be equal-length 1-D arrays")
    K = m_hat.shape[0]
    if pool_size < 1 or (K < 63 and pool_size > (1 << K)):
        raise ValueError(f"pool_size {pool_size} outside 1..2^{K}")

    base_flip = rho < 0.5
    costs = np.abs(2.0 * rho - 1.0)
    order = np.argsort(costs, kind="stable")
    ds = costs[order]

    # Best-first over deviation subsets, represented as sorted rank tuples.
    # Successor scheme (extend last rank / shift last rank) visits each
    # subset exactly once in non-decreasing cost order. The whole cost-tie
    # level at the pool boundary is collected (within a float margin) before
    # the final sort, so ranking matches the exhaustive oracle; the size-then-
    # lex heap key keeps the collection sensible if the cap ever truncates a
    # degenerate all-ties level.
    heap: list[tuple[float, int, tuple[int, ...]]] = [(0.0, 0, ())]
    collected: list[tuple[int, ...]] = []
    cap = max(4096, 64 * pool_size)
    cutoff = math.inf
    margin = 1e-9
    while heap and len(collected) < cap:
        s, _, sub = heapq.heappop(heap)
        if len(collected) >= pool_size and s > cutoff + margin:
            break
        collected.append(sub)
        if len(collected) == pool_size:
            cutoff = s
        if not sub:
            if K > 0:
                heapq.heappush(heap, (ds[0], 1, (0,)))
        else:
            j = sub[-1]
            if j + 1 < K:
                heapq.heappush(heap, (s - ds[j] + ds[j + 1], len(sub), sub[:-1] + (j + 1,)))
                heapq.heappush(heap, (s + ds[j + 1], len(sub) + 1, sub + (j + 1,)))

    candidates = []
    for sub in collected:
        flip_mask = base_flip.copy()
        if sub:
            flip_mask[order[list(sub)]] ^= True
        candidates.append(make_candidate(m_hat, rho, np.flatnonzero(flip_mask)))
    candidates.sort(key=Candidate.sort_key)
    return CandidatePool(candidates[:pool_size], k_total=K)


def energy(state: SubsetState | Sequence[int], pool: CandidatePool, lam: float) -> float:
    """Negative aggregate confidence minus lam times pairwise Hamming diversity."""
    members = state.members if isinstance(state, SubsetState) else tuple(state)
    conf_sum = float(pool.confs[list(members)].sum())
    ham = pool.hamming
    div = 0.0
    for a, b in itertools.combinations(members, 2):
        div += ham[a, b]
    return -conf_sum - lam * div


def mh_step(
    state: SubsetState,
    pool: CandidatePool,
    params: SamplerParams,
    rng: np.random.Generator,
) -> SubsetState:
    """One replacement-move Metropolis-Hastings step.

    Draw order is fixed for reproducibility: leaving member index, entering
    non-member index, then the acceptance uniform (always drawn).
    """
    lam = params.resolved_lam(pool.k_total)
    members = list(state.members)
    member_set = set(members)
    non_members = [i for i in range(len(pool)) if i not in member_set]
    if not non_members:
        raise ValueError("proposal requires at least one non-member")
    a = members[int(rng.integers(len(members)))]
    b = non_members[int(rng.integers(len(non_members)))]
    delta = _replacement_delta(members, a, b, pool, lam)
    alpha = 1.0 if delta <= 0 else math.exp(-params.beta * delta)
    u = float(rng.random())
    if u <= alpha:
        members.remove(a)
        members.append(b)
        members.sort()
        return SubsetState(tuple(members))
    return state


def _replacement_delta(members: list[int], a: int, b: int, pool: CandidatePool, lam: float) -> float:
    """Energy change of swapping member a for outsider b."""
    ham = pool.hamming
    d = float(pool.confs[a] - pool.confs[b])
    for c in members:
        if c != a:
            d += lam * (ham[a, c] - ham[b, c])
    return d


@dataclass
class ChainTrace:
    accepted: int = 0
    steps: int = 0
    visits: dict[tuple[int, ...], int] = field(default_factory=dict)
    energies: list[float] = field(default_factory=list)
    final_members: tuple[int, ...] = ()


def mh_sample(
    pool: CandidatePool,
    sample_size: int,
    params: SamplerParams,
    trace: ChainTrace | None = None,
) -> SubsetState:
    """Run the chain from the top-L_s warm start; return the best state visited.

    The chain itself targets the confidence/diversity law (see exact_kernel
    for its exactness oracles); the value handed to the decode stage is the
    lowest-energy subset seen, which keeps high-reliability candidates from
    being lost to late random moves. The final chain state is available on
    the trace.
    """
    L_c = len(pool)
    if not 1 <= sample_size <= L_c - 2:
        raise ValueError(f"sample_size must satisfy 1 <= L_s <= L_c - 2 = {L_c - 2}")
    lam = params.resolved_lam(pool.k_total)
    rng = np.random.default_rng(params.seed)
    confs = pool.confs.tolist()
    ham = pool.hamming.tolist()

    members = list(range(sample_size))
    member_set = set(members)
    e_now = energy(members, pool, lam)
    best_members = tuple(members)
    best_e = e_now
    beta = params.beta
    for _ in range(params.n_step):
        a = members[int(rng.integers(sample_size))]
        outside_rank = int(rng.integers(L_c - sample_size))
        b = _nth_non_member(member_set, L_c, outside_rank)
        delta = confs[a] - confs[b]
        ham_a = ham[a]
        ham_b = ham[b]
        for c in members:
            if c != a:
                delta += lam * (ham_a[c] - ham_b[c])
        alpha = 1.0 if delta <= 0 else math.exp(-beta * delta)
        u = rng.random()
        accept = u <= alpha
        if accept:
            members.remove(a)
            member_set.discard(a)
            members.append(b)
            member_set.add(b)
            members.sort()
            e_now += delta
            if e_now < best_e:
                best_e = e_now
                best_members = tuple(members)
        if trace is not None:
            trace.steps += 1
            trace.accepted += int(accept)
            key = tuple(members)
            trace.visits[key] = trace.visits.get(key, 0) + 1
            trace.energies.append(e_now)
    if trace is not None:
        trace.final_members = tuple(members)
    return SubsetState(best_members)


def _nth_non_member(member_set: set[int], total: int, rank: int) -> int:
    seen = 0
    for i in range(total):
        if i not in member_set:
            if seen == rank:
                return i
            seen += 1
    raise RuntimeError("rank exceeds non-member count")


def exact_kernel(
    pool: CandidatePool,
    sample_size: int,
    params: SamplerParams,
    max_states: int = 10_000,
) -> tuple[list[tuple[int, ...]], np.ndarray, np.ndarray]:
    """Enumerate the subset chain exactly: states, stationary law, transition matrix.

    Small instances only; this is the oracle that turns the sampler's
    stationarity, irreducibility and aperiodicity claims into checkable
    linear algebra.
    """
    L_c = len(pool)
    if not 1 <= sample_size <= L_c - 2:
        raise ValueError(f"sample_size must satisfy 1 <= L_s <= L_c - 2 = {L_c - 2}")
    n_states = math.comb(L_c, sample_size)
    if n_states > max_states:
        raise ValueError(f"state space {n_states} exceeds limit {max_states}")
    lam = params.resolved_lam(pool.k_total)
    beta = params.beta

    states = list(itertools.combinations(range(L_c), sample_size))
    index = {s: i for i, s in enumerate(states)}
    E = np.array([energy(s, pool, lam) for s in states])

    logw = -beta * (E - E.min())
    w = np.exp(logw)
    pi = w / w.sum()

    q = 1.0 / (sample_size * (L_c - sample_size))
    P = np.zeros((n_states, n_states))
    for si, s in enumerate(states):
        inside = set(s)
        for a in s:
            for b in range(L_c):
                if b in inside:
                    continue
                t = tuple(sorted((inside - {a}) | {b}))
                delta = E[index[t]] - E[si]
                alpha = 1.0 if delta <= 0 else math.exp(-beta * delta)
                P[si, index[t]] = q * alpha
        P[si, si] = 1.0 - P[si].sum()
    return states, pi, P


def clr_select(
    scored: Sequence[ScoredReconstruction],
    fusion_alpha: float,
    normalize_ll: bool = False,
) -> ScoredReconstruction:
    """Fuse confidence with decode log-likelihood; ties go to the lowest index.

    With normalize_ll the likelihood enters per decoded token, which removes
    the raw sum's bias toward short decodes (a wrong early flip that stumbles
    onto a quick end-of-text would otherwise outscore the faithful path).
    """
    if not scored:
        raise ValueError("no reconstructions to select from")
    best = None
    for s in scored:
        ll = s.outcome.log_likelihood
        if normalize_ll:
            ll = ll / max(len(s.outcome.tokens), 1)
        s.fused_score = s.conf + fusion_alpha * ll
        if best is None or s.fused_score > best.fused_score or (
            s.fused_score == best.fused_score and s.candidate_index < best.candidate_index
        ):
            best = s
    return best


@dataclass(frozen=True)
class ICDParams:
    pool_size: int = 32           # L_c
    sample_size: int = 4          # L_s
    sampler: SamplerParams = SamplerParams()
    fusion_alpha: float = 1.0
    normalize_ll: bool = False

    def __post_init__(self) -> None:
        if self.sample_size > self.pool_size - 2:
            raise ValueError("sample_size must be <= pool_size - 2")


@dataclass
class ICDResult:
    selected: ScoredReconstruction
    scored: list[ScoredReconstruction]
    sampled: tuple[int, ...]
    pool_confs: list[float]
    chain: ChainTrace
    codec_invocations: int

    @property
    def tokens(self) -> list[int]:
        return self.selected.outcome.tokens


def icd_decode(
    m_hat: np.ndarray,
    rho_m: np.ndarray,
    m_pre_tokens: Sequence[int],
    model: TokenModel,
    cfg: CodecConfig,
    icd: ICDParams,
) -> ICDResult:
    """Full receiver-side pipeline: generate, sample, decode, fuse, select.

    Exactly L_s source-decoder invocations are made, one per sampled
    candidate, honoring the decoding cost budget.
    """
    pool = ccg_generate(m_hat, rho_m, icd.pool_size)
    trace = ChainTrace()
    state = mh_sample(pool, icd.sample_size, icd.sampler, trace=trace)

    scored: list[ScoredReconstruction] = []
    invocations = 0
    for idx in state.members:  # candidate-index order, schedule independent
        cand = pool.candidates[idx]
        outcome = coder.decode(model, cand.bits, m_pre_tokens, cfg)
        invocations += 1
        scored.append(ScoredReconstruction(candidate_index=idx, outcome=outcome, conf=cand.conf))
    selected = clr_select(scored, icd.fusion_alpha, normalize_ll=icd.normalize_ll)
    return ICDResult(
        selected=selected,
        scored=scored,
        sampled=state.members,
        pool_confs=[c.conf for c in pool.candidates],
        chain=trace,
        codec_invocations=invocations,
    )
