"""Partition-function and expectation estimates from the top-k set plus a uniform tail sample.

Z_hat = sum_S e^{y_i} + ((n - k) / l) sum_T e^{y_i}, with T drawn uniformly
with replacement from the complement of S. The expectation estimate
F_hat = J_hat / Z_hat reuses the same S and T for numerator and denominator.
Sums are taken in log-space around the largest score seen.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .mips.base import ExactProvider, TopKProvider
from .model import (Dataset, Query, RejectedInput, draw_outside, exact_partition,
                    scores_for)


@dataclass(frozen=True)
class ScalarEstimate:
    """An estimate plus the settings that produced it.

    For partition estimates ``value`` is log Z_hat; ``shift`` and
    ``scaled`` give Z_hat = exp(shift) * scaled without overflow. For
    expectation estimates ``value`` is F_hat and ``log_z`` the matching
    log Z_hat.
    """

    value: float
    k: int
    l: int
    gap_c: Optional[float]
    seed: Optional[int]
    touched: int
    shift: float = 0.0
    scaled: float = 1.0
    log_z: float = math.nan
    exact: bool = False       # degenerate case k >= n, computed exactly
    topk_only: bool = False   # l == 0: tail ignored
    flags: tuple = field(default_factory=tuple)

    @property
    def z(self) -> float:
        """Z_hat in linear space; may overflow to inf for large scores."""
        with np.errstate(over="ignore"):
            return float(np.exp(self.log_z))


@dataclass(frozen=True)
class _Draws:
    s_ids: np.ndarray
    s_y: np.ndarray
    t_ids: np.ndarray
    t_y: np.ndarray
    weight: float   # (n - |S|) / |T|


def _draw(dataset, query, provider, k, l, rng) -> _Draws:
    n = dataset.n
    if k < 1:
        raise RejectedInput(f"k must be >= 1, got {k}")
    if l < 0:
        raise RejectedInput(f"l must be >= 0, got {l}")
    top = provider.topk(dataset, query, k)
    if np.unique(top.ids).size != top.ids.size:
        raise RuntimeError(f"{provider!r} returned duplicate ids")
    rest = n - top.ids.size
    if l and rest > 0:
        t_ids = draw_outside(n, top.ids, l, rng, replace=True)
        t_y = scores_for(dataset, query, t_ids)
        weight = rest / l
    else:
        t_ids = np.zeros(0, dtype=np.int64)
        t_y = np.zeros(0)
        weight = 0.0
    return _Draws(top.ids, top.scores, t_ids, t_y, weight)


def _weights(dr: _Draws):
    """Shift and the per-item linear weights e^{y - shift} (tail ones upweighted)."""
    shift = float(max(dr.s_y.max(), dr.t_y.max() if dr.t_y.size else -np.inf))
    ws = np.exp(dr.s_y - shift)
    wt = dr.weight * np.exp(dr.t_y - shift)
    return shift, ws, wt


def _seed_of(rng):
    return int(rng) if isinstance(rng, (int, np.integer)) else None


def estimate_partition(dataset: Dataset, query: Query, provider: TopKProvider | None = None,
                       k: int = 1, l: int = 1, rng=None) -> ScalarEstimate:
    """Unbiased estimate of Z, reported as log Z_hat.

    ``k >= n`` falls back to the exact value (flagged); ``l = 0`` gives the
    top-k-only estimate sum_S e^{y_i} (flagged, biased low).
    """
    provider = provider or ExactProvider()
    seed = _seed_of(rng)
    gen = np.random.default_rng(rng)
    n = dataset.n
    if k >= n:
        lz = exact_partition(dataset, query)
        return ScalarEstimate(value=lz, k=n, l=0, gap_c=0.0, seed=seed, touched=n, shift=lz,
                              scaled=1.0, log_z=lz, exact=True, flags=("exact",))
    dr = _draw(dataset, query, provider, k, l, gen)
    shift, ws, wt = _weights(dr)
    scaled = float(ws.sum() + wt.sum())
    lz = shift + math.log(scaled)
    flags = ("topk_only",) if l == 0 else ()
    return ScalarEstimate(value=lz, k=dr.s_ids.size, l=int(dr.t_ids.size), gap_c=provider.gap_c,
                          seed=seed, touched=dr.s_ids.size + dr.t_ids.size, shift=shift,
                          scaled=scaled, log_z=lz, topk_only=l == 0, flags=flags)


def _check_f(f, C, n) -> np.ndarray:
    f = np.asarray(f, dtype=np.float64)
    if f.ndim == 1:
        f = f[:, None]
    if f.shape[0] != n:
        raise RejectedInput(f"f must have {n} rows, got {f.shape[0]}")
    C = np.broadcast_to(np.asarray(C, dtype=np.float64), f.shape[1:])
    if np.any(np.abs(f) > C[None, :]):
        raise RejectedInput("some |f_i| exceeds its declared bound C")
    return f


def expectation_from_draws(dr: _Draws, f: np.ndarray):
    """(F_hat per column, log Z_hat) sharing one S and T."""
    shift, ws, wt = _weights(dr)
    z = ws.sum() + wt.sum()
    j = ws @ f[dr.s_ids] + (wt @ f[dr.t_ids] if dr.t_ids.size else 0.0)
    return j / z, shift + math.log(z)


def estimate_expectation(dataset: Dataset, query: Query, f, C, provider: TopKProvider | None = None,
                         k: int = 1, l: int = 1, rng=None) -> ScalarEstimate:
    """F_hat = J_hat / Z_hat for bounded values f (|f_i| <= C).

    ``f`` may be an (n, p) matrix with per-column bounds C, in which case
    ``value`` is an array of p estimates sharing S and T.
    """
    provider = provider or ExactProvider()
    n = dataset.n
    fm = _check_f(f, C, n)
    seed = _seed_of(rng)
    gen = np.random.default_rng(rng)
    k_eff = min(k, n)
    dr = _draw(dataset, query, provider, k_eff, l if k_eff < n else 0, gen)
    F, lz = expectation_from_draws(dr, fm)
    value = float(F[0]) if np.ndim(f) == 1 else F
    return ScalarEstimate(value=value, k=dr.s_ids.size, l=int(dr.t_ids.size),
                          gap_c=provider.gap_c, seed=seed,
                          touched=dr.s_ids.size + dr.t_ids.size, log_z=lz,
                          exact=k_eff >= n, topk_only=(l == 0 and k_eff < n))


class ExactIsCheaper(ValueError):
    """The requested accuracy needs k >= n; compute exactly instead."""

    def __init__(self, k: int, n: int):
        super().__init__(f"required k = {k} >= n = {n}: exact computation is cheaper")
        self.k = k
        self.n = n


def _smallest_k(pred, start: int = 1) -> int:
    lo, hi = start, max(start, 1)
    while not pred(hi):
        hi *= 2
    lo = max(start, hi // 2)
    while lo < hi:
        mid = (lo + hi) // 2
        if pred(mid):
            hi = mid
        else:
            lo = mid + 1
    return lo


def choose_kl(n: int, epsilon: float, delta: float, gap_c: float = 0.0,
              target: str = "partition", allow_exact: bool = False) -> tuple[int, int]:
    """Smallest balanced k = l meeting the accuracy conditions.

    partition:   k l >= (2/3) eps^-2 n e^c ln(1/delta)
    expectation: k^2 l >= 8 n^2 e^{2c} eps^-2 ln(4/delta)  and
                 k l >= (8/3) eps^-2 n e^c ln(2/delta)
    Raises ExactIsCheaper when k >= n unless ``allow_exact``.
    """
    if not epsilon > 0:
        raise RejectedInput(f"epsilon must be > 0, got {epsilon}")
    if not 0 < delta < 1:
        raise RejectedInput(f"delta must be in (0, 1), got {delta}")
    if gap_c < 0:
        raise RejectedInput(f"gap_c must be >= 0, got {gap_c}")
    ec = math.exp(gap_c)
    if target == "partition":
        need = (2.0 / 3.0) / epsilon**2 * n * ec * math.log(1.0 / delta)
        k = _smallest_k(lambda k: k * k >= need)
    elif target == "expectation":
        need3 = 8.0 * n * n * ec * ec / epsilon**2 * math.log(4.0 / delta)
        need2 = (8.0 / 3.0) / epsilon**2 * n * ec * math.log(2.0 / delta)
        k = _smallest_k(lambda k: k**3 >= need3 and k * k >= need2)
    else:
        raise RejectedInput(f"target must be 'partition' or 'expectation', got {target!r}")
    if k >= n and not allow_exact:
        raise ExactIsCheaper(k, n)
    return k, k


@dataclass(frozen=True)
class SweepRow:
    k: int
    l: int
    mean_rel_error: float
    mean_time_s: float
    std_rel_error: float


def tradeoff_sweep(dataset: Dataset, queries, provider: TopKProvider | None = None,
                   grid=(), seeds: int = 1, seed: int = 0) -> list[SweepRow]:
    """Relative error of Z_hat and per-query time over a grid of (k, l).

    Errors are |Z_hat - Z| / Z against the exact log Z. Times cover the
    estimate only (retrieval plus tail sampling), never index building.
    ``l = 0`` rows are the top-k-only estimate.
    """
    provider = provider or ExactProvider()
    queries = list(queries)
    exact = [exact_partition(dataset, q) for q in queries]
    rows = []
    for gi, (k, l) in enumerate(grid):
        errs = []
        elapsed = 0.0
        for qi, (q, lz) in enumerate(zip(queries, exact)):
            for s in range(seeds):
                rng = np.random.default_rng([seed, gi, qi, s])
                t0 = time.perf_counter()
                est = estimate_partition(dataset, q, provider, k=k, l=l, rng=rng)
                elapsed += time.perf_counter() - t0
                errs.append(abs(math.expm1(est.log_z - lz)))
        errs = np.array(errs)
        rows.append(SweepRow(k=int(k), l=int(l), mean_rel_error=float(errs.mean()),
                             mean_time_s=elapsed / errs.size, std_rel_error=float(errs.std())))
    return rows
