"""Per-query and amortized timing of the lazy paths against brute force.

Query parameters are dataset rows chosen uniformly at random. Every query
gets its own RNG streams derived from (root seed, query number), so results
do not depend on thread count or execution order. Per-query times exclude
index construction. The amortized report adds the build time once.
"""
from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .estimators import estimate_expectation, estimate_partition
from .mips.base import ExactProvider, TopKProvider
from .model import (Dataset, Query, RejectedInput, exact_expectation, exact_partition,
                    exact_sample)
from .sampler import fixed_b_sample, lazy_sample

MODES = ("sample", "partition", "expect")

# stream tags under each query's counter
_PICK, _FAST, _BASE = 0, 1, 2


def query_stream(seed: int, qi: int, tag: int) -> np.random.Generator:
    """Counter-based child stream: the same (seed, qi, tag) always gives the same draws."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(qi, tag)))


@dataclass
class BenchParams:
    mode: str = "sample"
    k: int = 100
    l: Optional[int] = None        # sample: None = adaptive cutoff; partition/expect: tail size
    gap_c: Optional[float] = None
    scale: float = 1.0
    f_col: int = 0                 # expect: f(x) = phi(x)[f_col], C = max |f|
    self_bench: bool = False       # time the brute-force path against itself

    def validate(self):
        if self.mode not in MODES:
            raise RejectedInput(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.k < 1:
            raise RejectedInput(f"k must be >= 1, got {self.k}")
        if self.l is not None and self.l < 0:
            raise RejectedInput(f"l must be >= 0, got {self.l}")


@dataclass
class QueryTiming:
    query: int
    theta_id: int
    fast_ns: int
    baseline_ns: int
    fast_value: float
    baseline_value: float


@dataclass
class BenchReport:
    n: int
    d: int
    mode: str
    queries: int
    seed: int
    build_time_ns: int
    fast_median_ns: float
    baseline_median_ns: float
    fast_total_ns: int
    baseline_total_ns: int
    speedup: float                  # ratio of medians
    crossover_queries: float        # build / (baseline - fast) per query, inf if never
    crossover_simulated: Optional[int]
    amortized_total_ns: int         # build + every fast query
    rows: list = field(default_factory=list, repr=False)

    def summary(self) -> dict:
        d = asdict(self)
        d.pop("rows")
        if math.isinf(d["crossover_queries"]):
            d["crossover_queries"] = None   # never pays off
        return d


def _paths(dataset: Dataset, provider: TopKProvider, p: BenchParams):
    """(fast, baseline) callables of (query, rng) -> float."""
    n = dataset.n
    if p.mode == "sample":
        def base(q, rng):
            return float(exact_sample(dataset, q, rng))

        if p.l is None:
            def fast(q, rng):
                return float(lazy_sample(dataset, q, provider, k=p.k, gap_c=p.gap_c, rng=rng).chosen_id)
        else:
            def fast(q, rng):
                return float(fixed_b_sample(dataset, q, provider, k=p.k, l=p.l, gap_c=p.gap_c,
                                            rng=rng).chosen_id)
    elif p.mode == "partition":
        def base(q, rng):
            return exact_partition(dataset, q)

        def fast(q, rng):
            return estimate_partition(dataset, q, provider, k=p.k, l=p.l or 0, rng=rng).log_z
    else:
        if not 0 <= p.f_col < dataset.d:
            raise RejectedInput(f"f_col must be in [0, {dataset.d}), got {p.f_col}")
        f = np.ascontiguousarray(dataset.features[:, p.f_col])
        C = float(np.abs(f).max())

        def base(q, rng):
            return exact_expectation(dataset, q, f, C)

        def fast(q, rng):
            return float(estimate_expectation(dataset, q, f, C, provider, k=p.k, l=p.l or 0,
                                              rng=rng).value)
    if p.self_bench:
        fast = base
    if p.mode != "sample" and p.k >= n and not p.self_bench:
        raise RejectedInput(f"k = {p.k} >= n = {n}: nothing to benchmark")
    return fast, base


def _one(dataset, fast: Callable, base: Callable, p: BenchParams, seed: int, qi: int) -> QueryTiming:
    tid = int(query_stream(seed, qi, _PICK).integers(dataset.n))
    q = Query(dataset.features[tid], scale=p.scale)
    rf, rb = query_stream(seed, qi, _FAST), query_stream(seed, qi, _BASE)
    # alternate the order so neither path always runs with a warm cache
    if qi % 2:
        t0 = time.perf_counter_ns(); vb = base(q, rb); tb = time.perf_counter_ns() - t0
        t0 = time.perf_counter_ns(); vf = fast(q, rf); tf = time.perf_counter_ns() - t0
    else:
        t0 = time.perf_counter_ns(); vf = fast(q, rf); tf = time.perf_counter_ns() - t0
        t0 = time.perf_counter_ns(); vb = base(q, rb); tb = time.perf_counter_ns() - t0
    return QueryTiming(qi, tid, tf, tb, vf, vb)


def crossover(build_ns: int, fast_total_ns: int, base_total_ns: int, queries: int) -> float:
    """Queries after which build + q * fast <= q * baseline (mean per-query costs)."""
    saved = base_total_ns - fast_total_ns
    if saved <= 0:
        return math.inf
    return build_ns * queries / saved


def simulate_crossover(build_ns: int, fast_total_ns: int, base_total_ns: int, queries: int,
                       limit: int = 10_000_000) -> Optional[int]:
    """First q at which the cumulative cost curves cross, by stepping q; None past ``limit``.

    Works in integers (scaled by ``queries``) so it can be compared with
    ``ceil(crossover(...))`` exactly.
    """
    if base_total_ns <= fast_total_ns:
        return None
    step = 1 << 16
    start = 1
    while start <= limit:
        q = np.arange(start, min(start + step, limit + 1), dtype=np.int64)
        fast_curve = build_ns * queries + q * fast_total_ns
        base_curve = q * base_total_ns
        hit = np.flatnonzero(fast_curve <= base_curve)
        if hit.size:
            return int(q[hit[0]])
        start += step
    return None


def run_bench(dataset: Dataset, provider: TopKProvider | None = None, params: BenchParams | None = None,
              queries: int = 100, seed: int = 0, build_time_ns: int = 0, threads: int = 1,
              warmup: int = 2) -> BenchReport:
    """Time ``queries`` random queries through the fast path and the brute-force baseline."""
    provider = provider or ExactProvider()
    params = params or BenchParams()
    params.validate()
    if queries < 1:
        raise RejectedInput(f"queries must be >= 1, got {queries}")
    fast, base = _paths(dataset, provider, params)
    for w in range(warmup):
        _one(dataset, fast, base, params, seed ^ 0x5EED, w)
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            rows = list(ex.map(lambda qi: _one(dataset, fast, base, params, seed, qi), range(queries)))
    else:
        rows = [_one(dataset, fast, base, params, seed, qi) for qi in range(queries)]
    tf = np.array([r.fast_ns for r in rows], dtype=np.int64)
    tb = np.array([r.baseline_ns for r in rows], dtype=np.int64)
    fm, bm = float(np.median(tf)), float(np.median(tb))
    ft, bt = int(tf.sum()), int(tb.sum())
    build = int(build_time_ns)
    return BenchReport(
        n=dataset.n, d=dataset.d, mode=params.mode, queries=queries, seed=seed,
        build_time_ns=build, fast_median_ns=fm, baseline_median_ns=bm,
        fast_total_ns=ft, baseline_total_ns=bt, speedup=bm / fm if fm > 0 else math.inf,
        crossover_queries=crossover(build, ft, bt, queries),
        crossover_simulated=simulate_crossover(build, ft, bt, queries),
        amortized_total_ns=build + ft, rows=rows)
