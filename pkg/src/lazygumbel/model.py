"""Log-linear model types and the exact, linear-time reference operations.

Every fast path in the package is checked against the functions here:
scores are accumulated in float64, partition functions use a shifted
log-sum-exp, and sampling is plain inverse-CDF.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np


class RejectedInput(ValueError):
    """Raised when an argument violates an operation's preconditions."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """n feature vectors phi(x_i) of dimension d; ids are the row numbers."""

    features: np.ndarray
    unit_norm: bool = False

    def __post_init__(self):
        x = np.array(self.features, dtype=np.float64, copy=True)
        if x.ndim != 2:
            raise RejectedInput(f"features must be 2-D, got shape {x.shape}")
        if x.shape[0] < 1 or x.shape[1] < 1:
            raise RejectedInput(f"need n >= 1 and d >= 1, got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise RejectedInput("features contain non-finite values")
        if self.unit_norm:
            norms = np.linalg.norm(x, axis=1)
            bad = np.flatnonzero(np.abs(norms - 1.0) > 1e-6)
            if bad.size:
                raise RejectedInput(
                    f"row {bad[0]} has norm {norms[bad[0]]:.9g}, expected unit norm")
        object.__setattr__(self, "features", _readonly(np.ascontiguousarray(x)))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.features, axis=1)


@dataclass(frozen=True, eq=False)
class Query:
    """Parameter vector theta; every score is multiplied by ``scale``.

    A temperature tau used as a divisor corresponds to ``scale = 1 / tau``.
    """

    theta: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        t = np.array(self.theta, dtype=np.float64, copy=True).reshape(-1)
        if t.size < 1 or not np.all(np.isfinite(t)):
            raise RejectedInput("theta must be a non-empty finite vector")
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise RejectedInput(f"scale must be a positive finite number, got {self.scale}")
        object.__setattr__(self, "theta", _readonly(t))
        object.__setattr__(self, "scale", float(self.scale))

    @property
    def d(self) -> int:
        return self.theta.size

    @property
    def effective(self) -> np.ndarray:
        """scale * theta, the vector whose inner products are the scores."""
        return self.scale * self.theta


@dataclass(frozen=True)
class ScoreView:
    ids: np.ndarray
    scores: np.ndarray

    def __len__(self):
        return self.ids.size


@dataclass
class TopKResult:
    """Candidate set S ordered by descending score (ties: smaller id first).

    ``gap_c`` is the certified approximation gap: 0 for exact retrieval, the
    ladder constant for LSH, and ``None`` when the provider gives no
    guarantee. ``short`` marks a result with fewer than ``min(k, n)`` items;
    ``fallback`` marks a result that had to be completed by an exact scan.
    """

    ids: np.ndarray
    scores: np.ndarray
    k: int
    gap_c: Optional[float] = 0.0
    short: bool = False
    fallback: bool = False
    scanned: int = 0
    info: dict = field(default_factory=dict)

    def __len__(self):
        return self.ids.size

    @property
    def items(self) -> list[tuple[int, float]]:
        return list(zip(self.ids.tolist(), self.scores.tolist()))

    @property
    def min_score(self) -> float:
        return float(self.scores[-1]) if self.scores.size else -np.inf


def check_query(dataset: Dataset, query: Query) -> None:
    if query.d != dataset.d:
        raise RejectedInput(
            f"query dimension {query.d} does not match dataset dimension {dataset.d}")


def scores_for(dataset: Dataset, query: Query, ids=None) -> np.ndarray:
    """Scores y_i = scale * (theta . phi(x_i)) for ``ids`` (all rows if None)."""
    check_query(dataset, query)
    x = dataset.features if ids is None else dataset.features[ids]
    return query.scale * (x @ query.theta)


def score_all(dataset: Dataset, query: Query) -> ScoreView:
    return ScoreView(np.arange(dataset.n), scores_for(dataset, query))


def select_topk(ids: np.ndarray, scores: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """The k largest scores, ties broken by smaller id, in O(len(ids)) + O(k log k)."""
    ids = np.asarray(ids)
    scores = np.asarray(scores, dtype=np.float64)
    m = scores.size
    k = min(k, m)
    if k <= 0:
        return ids[:0], scores[:0]
    if k < m:
        thresh = np.partition(scores, m - k)[m - k]
        above = np.flatnonzero(scores > thresh)
        tied = np.flatnonzero(scores == thresh)
        need = k - above.size
        if need < tied.size:
            tied = tied[np.argsort(ids[tied], kind="stable")[:need]]
        pick = np.concatenate([above, tied])
    else:
        pick = np.arange(m)
    order = np.lexsort((ids[pick], -scores[pick]))
    pick = pick[order]
    return ids[pick], scores[pick]


def exact_topk(dataset: Dataset, query: Query, k: int) -> TopKResult:
    if not 1 <= k <= dataset.n:
        raise RejectedInput(f"k must be in [1, {dataset.n}], got {k}")
    y = scores_for(dataset, query)
    ids, sc = select_topk(np.arange(dataset.n), y, k)
    return TopKResult(ids, sc, k, gap_c=0.0, scanned=dataset.n)


def logsumexp(y) -> float:
    y = np.asarray(y, dtype=np.float64)
    if y.size == 0:
        return -np.inf
    top = np.max(y)
    if not np.isfinite(top):
        return float(top)
    return float(top + np.log(np.sum(np.exp(y - top))))


def softmax(y) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    w = np.exp(y - np.max(y))
    return w / w.sum()


def sample_from_scores(y: np.ndarray, rng: np.random.Generator) -> int:
    """Inverse-CDF draw from softmax(y)."""
    y = np.asarray(y, dtype=np.float64)
    if y.size == 1:
        return 0
    cdf = np.cumsum(np.exp(y - y.max()))
    u = rng.random() * cdf[-1]
    return int(min(np.searchsorted(cdf, u, side="right"), y.size - 1))


def exact_sample(dataset: Dataset, query: Query, rng) -> int:
    rng = np.random.default_rng(rng)
    return sample_from_scores(scores_for(dataset, query), rng)


def exact_partition(dataset: Dataset, query: Query) -> float:
    """log Z for the query, via a max-shifted log-sum-exp."""
    return logsumexp(scores_for(dataset, query))


def exact_expectation(dataset: Dataset, query: Query, f, C: float) -> float:
    f = np.asarray(f, dtype=np.float64)
    if f.shape != (dataset.n,):
        raise RejectedInput(f"f must have shape ({dataset.n},), got {f.shape}")
    if np.any(np.abs(f) > C):
        raise RejectedInput(f"|f_i| exceeds the declared bound C={C}")
    return float(softmax(scores_for(dataset, query)) @ f)


def draw_outside(n: int, excluded: np.ndarray, size: int, rng: np.random.Generator,
                 replace: bool) -> np.ndarray:
    """Uniform ids from [0, n) minus ``excluded``, by rejection.

    Without replacement the result is a uniformly random ``size``-subset in
    random order; when it would cover more than half of the complement the
    complement is materialized instead.
    """
    excl = np.unique(np.asarray(excluded, dtype=np.int64))
    avail = n - excl.size
    if size <= 0:
        return np.zeros(0, dtype=np.int64)
    if avail <= 0 or (not replace and size > avail):
        raise RejectedInput(f"cannot draw {size} ids from a complement of size {avail}")

    def outside(c):
        if excl.size == 0:
            return c
        pos = np.searchsorted(excl, c)
        hit = excl[np.minimum(pos, excl.size - 1)] == c
        return c[~hit]

    if not replace and 2 * size > avail:
        mask = np.ones(n, dtype=bool)
        mask[excl] = False
        return rng.permutation(np.flatnonzero(mask))[:size]
    got = np.zeros(0, dtype=np.int64)
    while got.size < size:
        want = size - got.size
        batch = int(want * n / avail * 1.25) + 8
        cand = outside(rng.integers(0, n, size=batch))
        if replace:
            got = np.concatenate([got, cand[:want]])
        else:
            merged = np.concatenate([got, cand])
            _, first = np.unique(merged, return_index=True)
            got = merged[np.sort(first)][:size]
    return got
