"""Gumbel draws, cutoff arithmetic, exceedance counts and truncated draws.

All functions take a caller-owned ``numpy.random.Generator``. Probabilities
of exceeding a cutoff are kept in the stable form ``-expm1(-exp(-B))`` so
that cutoffs well above 15 still give meaningful (tiny) probabilities.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import RejectedInput

_TINY = np.finfo(np.float64).tiny


def gumbel_from_uniform(u):
    """Map U in (0, 1) to a standard Gumbel: G = -ln(-ln U)."""
    return -np.log(-np.log(u))


def open_uniform(rng: np.random.Generator, size=None):
    """Uniform draws on the open interval (0, 1)."""
    u = rng.random(size)
    # Generator.random is on [0, 1); shift the endpoint 0 away.
    return np.where(u == 0.0, _TINY, u) if size is not None else (u or _TINY)


def sample_gumbel(rng: np.random.Generator, size=None):
    return gumbel_from_uniform(open_uniform(rng, size))


def exceed_probability(B: float) -> float:
    """P(G > B) for a standard Gumbel, computed as -expm1(-exp(-B))."""
    if B == -math.inf:
        return 1.0
    if B == math.inf:
        return 0.0
    with np.errstate(over="ignore"):
        e = math.exp(-B) if B > -709.0 else math.inf
    return -math.expm1(-e)


@dataclass(frozen=True)
class GumbelCutoff:
    B: float
    p_exceed: float

    @classmethod
    def at(cls, B: float) -> "GumbelCutoff":
        if math.isnan(B):
            raise RejectedInput("cutoff is NaN")
        return cls(float(B), exceed_probability(B))


def cutoff_for_expected_exceedances(n: int, l: int) -> GumbelCutoff:
    """Cutoff B = -ln(-ln(1 - l/n)), so that on average l of n Gumbels exceed it."""
    if not 0 < l < n:
        raise RejectedInput(f"need 0 < l < n, got l={l}, n={n}")
    frac = l / n
    B = -math.log(-math.log1p(-frac))
    return GumbelCutoff(B, frac)


def exceedance_count(remaining: int, cutoff: GumbelCutoff | float, rng: np.random.Generator) -> int:
    """Draw m ~ Binomial(remaining, p) by summing geometric gaps between successes.

    Expected work is O(m + 1): batches of gaps are drawn until their running
    sum passes ``remaining``.
    """
    if remaining < 0:
        raise RejectedInput(f"remaining must be >= 0, got {remaining}")
    p = cutoff.p_exceed if isinstance(cutoff, GumbelCutoff) else float(cutoff)
    if remaining == 0 or p <= 0.0:
        return 0
    if p >= 1.0:
        return remaining
    log_q = math.log1p(-p)
    m = 0
    pos = 0  # trials consumed so far
    batch = max(16, int(1.1 * remaining * p + 4 * math.sqrt(remaining * p + 1)))
    while True:
        u = open_uniform(rng, batch)
        # number of trials up to and including the next success
        gaps = np.floor(np.log(u) / log_q) + 1.0
        ends = pos + np.cumsum(gaps)
        hit = int(np.searchsorted(ends, remaining, side="right"))
        m += hit
        if hit < batch:
            return m
        pos = float(ends[-1])
        batch = max(16, int(1.1 * (remaining - pos) * p) + 16)


def sample_truncated_gumbel(cutoff: GumbelCutoff | float, rng: np.random.Generator, size=None):
    """Gumbel draws conditioned on G > B, by inversion in log-space.

    With q = P(G > B) and V uniform, U = 1 - V q is uniform on (F(B), 1) and
    G = -ln(-log1p(-V q)). The result is clamped to the next float above B.
    """
    c = cutoff if isinstance(cutoff, GumbelCutoff) else GumbelCutoff.at(cutoff)
    if math.isnan(c.B) or c.B == math.inf:
        raise RejectedInput(f"truncated Gumbel needs a finite or -inf cutoff, got {c.B}")
    v = open_uniform(rng, size)
    with np.errstate(divide="ignore"):
        g = -np.log(-np.log1p(-v * c.p_exceed))
    if c.B == -math.inf:
        return g
    return np.maximum(g, np.nextafter(c.B, np.inf))
