"""Exact sampling from softmax(y) with lazily instantiated Gumbel noise.

Only the top-k set S gets explicit Gumbels. For the n - k tail items we
draw how many of their Gumbels exceed a cutoff B (a binomial count m),
pick which m items those are, and draw their Gumbels conditioned on
exceeding B. Every other tail item has y_i <= S_min (+ c for approximate
retrieval) and G_i <= B, so it cannot beat the best perturbed score in S.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .gumbel import (GumbelCutoff, cutoff_for_expected_exceedances, exceedance_count,
                     sample_gumbel, sample_truncated_gumbel)
from .mips.base import ExactProvider, TopKProvider
from .model import (Dataset, Query, RejectedInput, ScoreView, TopKResult, draw_outside,
                    logsumexp, scores_for)


@dataclass(frozen=True)
class SampleTrace:
    chosen_id: int
    M: float          # max over S of y_i + G_i
    S_min: float      # min score in S
    B: float          # Gumbel cutoff used for the tail
    m: int            # tail exceedance count, |T|
    touched: int      # |S| + |T|
    k: int
    l: Optional[int]  # None for the adaptive cutoff
    gap_c: float
    seed: Optional[int] = None


def resolve_gap(provider: TopKProvider, gap_c: Optional[float]) -> float:
    """Gap to use with this provider; uncertified providers need an explicit value."""
    cert = provider.gap_c
    if gap_c is None:
        if cert is None:
            raise RejectedInput(
                f"{provider!r} gives no gap certificate; pass gap_c explicitly")
        return float(cert)
    gap_c = float(gap_c)
    if gap_c < 0 or not math.isfinite(gap_c):
        raise RejectedInput(f"gap_c must be finite and >= 0, got {gap_c}")
    if gap_c == 0.0 and not provider.exact:
        raise RejectedInput("gap_c = 0 requires an exact top-k provider")
    if cert is not None and gap_c < cert:
        raise RejectedInput(f"gap_c={gap_c} is below the provider's certificate {cert}")
    return gap_c


def _seed_of(rng) -> Optional[int]:
    return int(rng) if isinstance(rng, (int, np.integer)) else None


def _retrieve(dataset: Dataset, query: Query, provider: TopKProvider, k: int) -> TopKResult:
    if not 1 <= k <= dataset.n:
        raise RejectedInput(f"k must be in [1, {dataset.n}], got {k}")
    top = provider.topk(dataset, query, k)
    if np.unique(top.ids).size != top.ids.size:
        raise RuntimeError(f"{provider!r} returned duplicate ids")
    if top.ids.size == 0:
        raise RuntimeError(f"{provider!r} returned an empty candidate set")
    return top


def _draw_once(dataset, query, top: TopKResult, rng, *, gap_c: float,
               fixed: Optional[GumbelCutoff], l: Optional[int], seed) -> SampleTrace:
    n = dataset.n
    ys = top.scores
    ks = ys.size
    pert = ys + sample_gumbel(rng, ks)
    best = int(np.argmax(pert))
    M = float(pert[best])
    S_min = float(ys.min())
    chosen = int(top.ids[best])
    if fixed is None:
        cutoff = GumbelCutoff.at(M - S_min - gap_c)
    else:
        cutoff = fixed
    remaining = n - ks
    m = 0
    if remaining > 0 and cutoff.B < math.inf:
        m = exceedance_count(remaining, cutoff, rng)
    if m:
        tail = draw_outside(n, top.ids, m, rng, replace=False)
        gt = sample_truncated_gumbel(cutoff, rng, m)
        pt = scores_for(dataset, query, tail) + gt
        j = int(np.argmax(pt))
        if pt[j] > M:
            chosen = int(tail[j])
    return SampleTrace(chosen_id=chosen, M=M, S_min=S_min, B=cutoff.B, m=m, touched=ks + m,
                       k=ks, l=l, gap_c=gap_c, seed=seed)


def lazy_sample(dataset: Dataset, query: Query, provider: TopKProvider | None = None,
                k: int = 1, gap_c: Optional[float] = None, rng=None) -> SampleTrace:
    """One draw with the adaptive cutoff B = M - S_min - gap_c.

    With an exact provider and gap_c = 0 the draw is exactly softmax(y).
    """
    provider = provider or ExactProvider()
    gap = resolve_gap(provider, gap_c)
    top = _retrieve(dataset, query, provider, k)
    seed = _seed_of(rng)
    return _draw_once(dataset, query, top, np.random.default_rng(rng),
                      gap_c=gap, fixed=None, l=None, seed=seed)


def fixed_b_sample(dataset: Dataset, query: Query, provider: TopKProvider | None = None,
                   k: int = 1, l: int = 1, gap_c: Optional[float] = None,
                   rng=None) -> SampleTrace:
    """One draw with the fixed cutoff B = -ln(-ln(1 - l/n)).

    Exact with probability at least 1 - exp(-(k l / n) e^{-gap_c}).
    """
    provider = provider or ExactProvider()
    gap = resolve_gap(provider, gap_c)
    cutoff = cutoff_for_expected_exceedances(dataset.n, l)
    top = _retrieve(dataset, query, provider, k)
    seed = _seed_of(rng)
    return _draw_once(dataset, query, top, np.random.default_rng(rng),
                      gap_c=gap, fixed=cutoff, l=l, seed=seed)


def sample_many(dataset: Dataset, query: Query, size: int, provider: TopKProvider | None = None,
                k: int = 1, l: Optional[int] = None, gap_c: Optional[float] = None,
                rng=None, traces: bool = False):
    """``size`` independent draws for one query, retrieving S only once.

    ``l=None`` uses the adaptive cutoff, otherwise the fixed one.
    Returns the chosen ids, or the full traces if ``traces`` is set.
    """
    provider = provider or ExactProvider()
    gap = resolve_gap(provider, gap_c)
    fixed = None if l is None else cutoff_for_expected_exceedances(dataset.n, l)
    top = _retrieve(dataset, query, provider, k)
    seed = _seed_of(rng)
    gen = np.random.default_rng(rng)
    out = [_draw_once(dataset, query, top, gen, gap_c=gap, fixed=fixed, l=l, seed=seed)
           for _ in range(size)]
    return out if traces else np.array([t.chosen_id for t in out], dtype=np.int64)


def coupled_oracle_check(dataset: Dataset, query: Query, k: int, l: Optional[int] = None,
                         trials: int = 1000, seed=0, gap_c: float = 0.0,
                         provider: TopKProvider | None = None) -> float:
    """Fraction of trials where the lazy algorithm misses the true Gumbel argmax.

    Each trial materializes all n Gumbels. The lazy replay sees the Gumbels of
    S and of exactly those tail ids whose Gumbel exceeds B (its T), and takes
    the argmax over S and T. ``l=None`` replays the adaptive cutoff,
    otherwise the fixed cutoff for that l.
    """
    provider = provider or ExactProvider()
    n = dataset.n
    y = scores_for(dataset, query)
    top = _retrieve(dataset, query, provider, k)
    in_s = np.zeros(n, dtype=bool)
    in_s[top.ids] = True
    s_ids = top.ids
    S_min = float(top.scores.min())
    fixed_B = None if l is None else cutoff_for_expected_exceedances(n, l).B
    rng = np.random.default_rng(seed)
    batch = max(1, min(trials, 4_000_000 // n))
    bad = 0
    done = 0
    while done < trials:
        b = min(batch, trials - done)
        G = sample_gumbel(rng, (b, n))
        pert = y[None, :] + G
        truth = np.argmax(pert, axis=1)
        if fixed_B is None:
            B = pert[:, s_ids].max(axis=1) - S_min - gap_c
        else:
            B = np.full(b, fixed_B)
        visible = in_s[None, :] | (G > B[:, None])
        lazy = np.argmax(np.where(visible, pert, -np.inf), axis=1)
        bad += int(np.count_nonzero(lazy != truth))
        done += b
    return bad / trials


def _as_ids(S) -> np.ndarray:
    return np.asarray(S.ids if isinstance(S, TopKResult) else S, dtype=np.int64)


def tail_escape_objective(t: float, log_zs: float, log_w: float) -> float:
    """1 - (1 - exp(-u Z_S)) exp(-u W) at u = e^t, evaluated without overflow."""
    uw = math.exp(min(t + log_w, 700.0)) if log_w > -math.inf else 0.0
    uz = math.exp(min(t + log_zs, 700.0))
    return -math.expm1(-uw) + math.exp(-uw - uz)


def golden_section_min(f, lo: float, hi: float, tol: float = 1e-9, max_iter: int = 500):
    """Minimize a unimodal f on [lo, hi]; returns (argmin, min)."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if abs(b - a) <= tol * max(1.0, abs(a) + abs(b)):
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    x = (a + b) / 2.0
    return x, f(x)


def tv_upper_bound(full_scores: ScoreView | np.ndarray, S) -> float:
    """Upper bound on the sampler's total variation distance from softmax(y).

    The sampler can only err when the true perturbed maximum lies outside S.
    For any threshold x, that event implies max_S (y + G) < x or
    max_tail (y + G) >= x, giving the bound
    1 - (1 - exp(-e^{-x} Z_S)) exp(-e^{-x} W); it is minimized over
    u = e^{-x} by golden-section search on ln u.
    """
    y = full_scores.scores if isinstance(full_scores, ScoreView) else np.asarray(full_scores, float)
    ids = _as_ids(S)
    if ids.size == 0:
        return 1.0
    mask = np.zeros(y.size, dtype=bool)
    mask[ids] = True
    log_zs = logsumexp(y[mask])
    log_w = logsumexp(y[~mask])
    if log_w == -math.inf:
        return 0.0
    f = lambda t: tail_escape_objective(t, log_zs, log_w)  # noqa: E731
    top = max(log_zs, log_w)
    lo, hi = -top - 60.0, -min(log_zs, log_w) + 5.0
    _, val = golden_section_min(f, lo, hi, tol=1e-12)
    return float(min(1.0, max(0.0, val)))
