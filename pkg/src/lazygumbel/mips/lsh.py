"""A ladder of signed-random-projection LSH instances for approximate top-k.

Inner products are turned into cosine similarities by appending one
coordinate, sqrt(M2^2 - |v|^2), to every database vector (so all have norm
M2) and a zero to the normalized query. Instance i is tuned to the score
pair (S_i2, S_i1) = ((c/2)(i-1) - M1*M2, (c/2)i - M1*M2); a query walks the
ladder from the top, accumulating colliding candidates whose score clears
the instance's lower threshold, until k have been found. The returned set
then satisfies max_{not in S} y - min_{in S} y <= c with probability at
least 1 - delta.

Hash sizing per instance, with p(s) = 1 - arccos(s)/pi:

* bits K = ceil(ln n / ln(1/p2)), capped at ``max_bits``;
* tables L = ceil(ln(delta') / ln(1 - p1^K)), so that an item scoring at
  least S_i1 is missed with probability at most delta';
* if L would exceed ``max_tables``, K is lowered until it does not. This
  keeps the miss probability at delta' and pays for it with more
  candidates per query.

delta' = delta / (k_max * n_LSH), a union bound over the top k_max items and
every instance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..model import Dataset, Query, RejectedInput, TopKResult, check_query, exact_topk, select_topk
from .base import TopKProvider


def collision_probability(s):
    """Signed-random-projection collision probability at cosine similarity s."""
    return 1.0 - np.arccos(np.clip(s, -1.0, 1.0)) / np.pi


def tables_needed(p1: float, bits: int, delta_prime: float) -> int:
    hit = p1 ** bits
    if hit >= 1.0:
        return 1
    if hit <= 0.0:
        return np.iinfo(np.int32).max
    return max(1, math.ceil(math.log(delta_prime) / math.log1p(-hit)))


def size_instance(n: int, s1: float, s2: float, delta_prime: float,
                  max_bits: int, max_tables: int) -> tuple[int, int]:
    p1 = float(collision_probability(s1))
    p2 = float(collision_probability(s2))
    if p2 <= 0.0:
        bits = 1
    elif p2 >= 1.0:
        bits = 0
    else:
        bits = max(1, math.ceil(math.log(n) / -math.log(p2)))
    bits = min(bits, max_bits)
    while bits > 0 and tables_needed(p1, bits, delta_prime) > max_tables:
        bits -= 1
    return bits, tables_needed(p1, bits, delta_prime)


def augment(features: np.ndarray, M2: float) -> np.ndarray:
    """Append sqrt(M2^2 - |v|^2) and divide by M2: every row becomes unit norm."""
    sq = np.einsum("ij,ij->i", features, features)
    extra = np.sqrt(np.maximum(M2 * M2 - sq, 0.0))
    return np.hstack([features, extra[:, None]]) / M2


def pack_bits(bits: np.ndarray) -> np.ndarray:
    """(..., K) boolean array -> (...) uint64 keys."""
    K = bits.shape[-1]
    if K == 0:
        return np.zeros(bits.shape[:-1], dtype=np.uint64)
    weights = np.left_shift(np.uint64(1), np.arange(K, dtype=np.uint64))
    return (bits.astype(np.uint64) * weights).sum(axis=-1, dtype=np.uint64)


@dataclass(eq=False)
class LshInstance:
    s1: float                 # upper tuned cosine
    s2: float                 # lower tuned cosine
    bits: int
    tables: int
    miss_prob: float          # per-item miss probability at similarity s1
    projections: np.ndarray   # (tables, bits, d + 1)
    keys: np.ndarray          # (tables, n) uint64, sorted within each table
    order: np.ndarray         # (tables, n) int32, ids in key order

    def candidates(self, q_aug: np.ndarray) -> np.ndarray:
        if self.bits == 0:
            return self.order[0]
        qkeys = pack_bits((self.projections @ q_aug) >= 0.0)
        found = []
        for t in range(self.tables):
            lo = np.searchsorted(self.keys[t], qkeys[t], side="left")
            hi = np.searchsorted(self.keys[t], qkeys[t], side="right")
            if hi > lo:
                found.append(self.order[t, lo:hi])
        if not found:
            return np.zeros(0, dtype=np.int32)
        return np.unique(np.concatenate(found))


@dataclass(eq=False)
class LshLadder:
    n: int
    d: int
    c: float
    delta: float
    k_max: int
    M1: float
    M2: float
    seed: int
    max_bits: int
    max_tables: int
    instances: list = field(default_factory=list)  # ascending thresholds

    @property
    def n_lsh(self) -> int:
        return len(self.instances)

    @property
    def delta_prime(self) -> float:
        return self.delta / (self.k_max * self.n_lsh)

    def score_thresholds(self, i: int) -> tuple[float, float]:
        """(S_i1, S_i2) in score units for the 0-based instance i."""
        half = self.c / 2.0
        lo = half * i - self.M1 * self.M2
        return lo + half, lo

    def total_tables(self) -> int:
        return sum(inst.tables for inst in self.instances)


def ladder_size(c: float, M1: float, M2: float) -> int:
    return max(1, math.ceil(4.0 * M1 * M2 / c - 1e-9))


def build_lsh_ladder(dataset: Dataset, c: float, delta: float, k_max: int,
                     M1: float = 1.0, M2: float | None = None, seed: int = 0,
                     max_bits: int = 64, max_tables: int = 64,
                     bits: int | None = None, tables: int | None = None) -> LshLadder:
    """Build ceil(4*M1*M2/c) LSH instances over the reduced database.

    ``M1`` bounds the norm of scale*theta at query time and ``M2`` the row
    norms (defaults to the largest row norm). ``bits``/``tables`` force a
    fixed hash length / table count on every instance; ``bits=0`` makes every
    item collide.
    """
    if not c > 0:
        raise RejectedInput(f"c must be > 0, got {c}")
    if not 0 < delta < 1:
        raise RejectedInput(f"delta must be in (0, 1), got {delta}")
    if k_max < 1:
        raise RejectedInput(f"k_max must be >= 1, got {k_max}")
    if not M1 > 0:
        raise RejectedInput(f"M1 must be > 0, got {M1}")
    max_norm = float(dataset.norms.max())
    if M2 is None:
        M2 = max_norm if max_norm > 0 else 1.0
    if max_norm > M2 * (1 + 1e-9):
        raise RejectedInput(f"row norm {max_norm:.9g} exceeds M2={M2:.9g}")
    if not 1 <= max_bits <= 64:
        raise RejectedInput("max_bits must be in [1, 64]")
    n = dataset.n
    n_lsh = ladder_size(c, M1, M2)
    delta_prime = delta / (k_max * n_lsh)
    rng = np.random.default_rng(seed)
    data = augment(dataset.features, M2)
    half = c / (2.0 * M1 * M2)
    ladder = LshLadder(n=n, d=dataset.d, c=float(c), delta=float(delta), k_max=int(k_max),
                       M1=float(M1), M2=float(M2), seed=int(seed), max_bits=int(max_bits),
                       max_tables=int(max_tables))
    for i in range(n_lsh):
        s2 = half * i - 1.0
        s1 = s2 + half
        K, L = size_instance(n, s1, s2, delta_prime, max_bits, max_tables)
        if bits is not None:
            K = int(bits)
            L = tables_needed(float(collision_probability(s1)), K, delta_prime)
            L = min(L, max_tables)
        if tables is not None:
            L = int(tables)
        if K == 0:
            L = 1
        proj = rng.standard_normal((L, K, dataset.d + 1))
        keys = np.empty((L, n), dtype=np.uint64)
        order = np.empty((L, n), dtype=np.int32)
        for t in range(L):
            kt = pack_bits((data @ proj[t].T) >= 0.0)
            o = np.argsort(kt, kind="stable")
            keys[t] = kt[o]
            order[t] = o
        p1 = float(collision_probability(s1))
        miss = (1.0 - p1 ** K) ** L
        ladder.instances.append(LshInstance(s1=s1, s2=s2, bits=K, tables=L, miss_prob=miss,
                                            projections=proj, keys=keys, order=order))
    return ladder


def _check(ladder: LshLadder, dataset: Dataset):
    if (ladder.n, ladder.d) != (dataset.n, dataset.d):
        raise RejectedInput(
            f"ladder built for n={ladder.n}, d={ladder.d}; dataset has n={dataset.n}, d={dataset.d}")


def lsh_topk(ladder: LshLadder, dataset: Dataset, query: Query, k: int) -> TopKResult:
    """Approximate top-k with gap certificate ``ladder.c``.

    Instances are visited from the highest threshold down. C_i is the union
    of the candidates of instances >= i, each kept only if its score clears
    that instance's lower threshold. At the first i with |C_i| >= k the
    result is C_{i+1} plus the best k - |C_{i+1}| items of C_i minus C_{i+1}.
    If no instance yields k items, an exact scan is returned and flagged.
    """
    _check(ladder, dataset)
    check_query(dataset, query)
    if not 1 <= k <= ladder.k_max:
        raise RejectedInput(f"k must be in [1, k_max={ladder.k_max}], got {k}")
    n = dataset.n
    if k >= n:
        res = exact_topk(dataset, query, n)
        res.gap_c = ladder.c
        res.k = k
        return res
    w = query.effective
    wnorm = float(np.linalg.norm(w))
    if wnorm > ladder.M1 * (1 + 1e-9):
        raise RejectedInput(f"|scale*theta| = {wnorm:.9g} exceeds M1={ladder.M1:.9g}")
    if wnorm == 0.0:
        res = exact_topk(dataset, query, k)
        res.gap_c = ladder.c
        return res
    q_aug = np.append(w / wnorm, 0.0)
    cos_scale = wnorm * ladder.M2
    seen = np.zeros(n, dtype=bool)
    got_ids = np.zeros(0, dtype=np.int64)
    got_sc = np.zeros(0)
    scanned = 0
    for i in range(ladder.n_lsh - 1, -1, -1):
        inst = ladder.instances[i]
        cand = inst.candidates(q_aug)
        cand = cand[~seen[cand]].astype(np.int64)
        scanned += cand.size
        if cand.size:
            y = query.scale * (dataset.features[cand] @ query.theta)
            keep = y / cos_scale >= inst.s2 - 1e-12
            cand, y = cand[keep], y[keep]
        if got_ids.size + cand.size >= k:
            add_ids, add_sc = select_topk(cand, y, k - got_ids.size)
            ids = np.concatenate([got_ids, add_ids])
            sc = np.concatenate([got_sc, add_sc])
            o = np.lexsort((ids, -sc))
            return TopKResult(ids[o], sc[o], k, gap_c=ladder.c, scanned=scanned,
                              info={"instance": i})
        if cand.size:
            seen[cand] = True
            got_ids = np.concatenate([got_ids, cand])
            got_sc = np.concatenate([got_sc, y])
    res = exact_topk(dataset, query, k)
    res.gap_c = ladder.c
    res.fallback = True
    res.scanned = n
    return res


class LshProvider(TopKProvider):
    exact = False

    def __init__(self, ladder: LshLadder, dataset: Dataset):
        _check(ladder, dataset)
        self.ladder = ladder
        self.dataset = dataset
        self.gap_c = ladder.c

    def topk(self, dataset, query, k):
        return lsh_topk(self.ladder, dataset, query, k)

    def __repr__(self):
        return f"LshProvider(c={self.ladder.c}, n_lsh={self.ladder.n_lsh})"
