"""Inverted-file (k-means clustering) index for top-k inner product search.

Vectors are clustered once with Lloyd's algorithm. A query ranks the
centroids by inner product and scans the inverted lists of the best
``n_p`` clusters, scoring only those rows exactly. There is no accuracy
certificate, so results carry ``gap_c=None``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..model import Dataset, Query, RejectedInput, TopKResult, check_query, select_topk
from .base import TopKProvider

_CHUNK_CELLS = 1 << 22


@dataclass(eq=False)
class IvfIndex:
    n: int
    d: int
    centroids: np.ndarray      # (n_c, d) float64
    list_offsets: np.ndarray   # (n_c + 1,) int64
    list_ids: np.ndarray       # (n,) int64, grouped by cluster, ascending within a list
    n_p: int = 32
    iters: int = 20
    seed: int = 0
    train_size: int = 0        # 0 means every row was used for training

    @property
    def n_c(self) -> int:
        return self.centroids.shape[0]

    def inverted_list(self, c: int) -> np.ndarray:
        return self.list_ids[self.list_offsets[c]:self.list_offsets[c + 1]]

    def list_sizes(self) -> np.ndarray:
        return np.diff(self.list_offsets)


def default_n_clusters(n: int) -> int:
    return min(n, 4 * math.ceil(math.sqrt(n)))


def assign(x: np.ndarray, centroids: np.ndarray):
    """Nearest centroid (Euclidean) for each row, plus the squared distance."""
    c_sq = np.einsum("ij,ij->i", centroids, centroids)
    labels = np.empty(x.shape[0], dtype=np.int64)
    dist = np.empty(x.shape[0])
    step = max(1, _CHUNK_CELLS // max(1, centroids.shape[0]))
    for lo in range(0, x.shape[0], step):
        xs = x[lo:lo + step]
        partial = c_sq[None, :] - 2.0 * (xs @ centroids.T)
        lab = np.argmin(partial, axis=1)
        labels[lo:lo + step] = lab
        dist[lo:lo + step] = partial[np.arange(xs.shape[0]), lab] + np.einsum("ij,ij->i", xs, xs)
    return labels, np.maximum(dist, 0.0)


def kmeans(x: np.ndarray, n_c: int, iters: int, rng: np.random.Generator) -> np.ndarray:
    """Lloyd's algorithm from a random-distinct-rows start, fixed iteration count.

    A cluster left empty is re-seeded at the point farthest from its current
    centroid (largest squared distance, smallest row index on ties), each
    empty cluster taking the next-farthest point.
    """
    centroids = x[np.sort(rng.choice(x.shape[0], size=n_c, replace=False))].copy()
    for _ in range(iters):
        labels, dist = assign(x, centroids)
        counts = np.bincount(labels, minlength=n_c)
        sums = np.zeros_like(centroids)
        np.add.at(sums, labels, x)
        nonempty = counts > 0
        centroids[nonempty] = sums[nonempty] / counts[nonempty, None]
        empty = np.flatnonzero(~nonempty)
        if empty.size:
            far = np.lexsort((np.arange(x.shape[0]), -dist))[:empty.size]
            centroids[empty] = x[far]
    return centroids


def build_ivf(dataset: Dataset, n_c: int | None = None, iters: int = 20, seed: int = 0,
              n_p: int = 32, train_size: int | None = None) -> IvfIndex:
    """Cluster the dataset rows into ``n_c`` inverted lists.

    ``train_size`` optionally fits the centroids on a seeded subsample of rows
    (every row is still assigned to a list afterwards).
    """
    n = dataset.n
    n_c = default_n_clusters(n) if n_c is None else int(n_c)
    if not 1 <= n_c <= n:
        raise RejectedInput(f"n_c must be in [1, {n}], got {n_c}")
    if iters < 1:
        raise RejectedInput(f"iters must be >= 1, got {iters}")
    rng = np.random.default_rng(seed)
    x = dataset.features
    train = x
    ts = 0
    if train_size is not None and n_c <= train_size < n:
        ts = int(train_size)
        train = x[np.sort(rng.choice(n, size=ts, replace=False))]
    centroids = kmeans(train, n_c, iters, rng)
    labels, _ = assign(x, centroids)
    order = np.argsort(labels, kind="stable").astype(np.int64)
    offsets = np.zeros(n_c + 1, dtype=np.int64)
    offsets[1:] = np.cumsum(np.bincount(labels, minlength=n_c))
    return IvfIndex(n=n, d=dataset.d, centroids=centroids, list_offsets=offsets,
                    list_ids=order, n_p=min(int(n_p), n_c), iters=int(iters),
                    seed=int(seed), train_size=ts)


def _check(index: IvfIndex, dataset: Dataset):
    if (index.n, index.d) != (dataset.n, dataset.d):
        raise RejectedInput(
            f"index built for n={index.n}, d={index.d}; dataset has n={dataset.n}, d={dataset.d}")


def probe_order(index: IvfIndex, query: Query) -> np.ndarray:
    cs = index.centroids @ query.effective
    return np.lexsort((np.arange(cs.size), -cs))


def ivf_topk(index: IvfIndex, dataset: Dataset, query: Query, k: int,
             n_p: int | None = None, packed: np.ndarray | None = None) -> TopKResult:
    """Top-k among the rows of the ``n_p`` clusters whose centroids score highest.

    ``packed`` may hold ``dataset.features[index.list_ids]`` so that scanning
    reads contiguous memory; IvfProvider keeps one.
    """
    _check(index, dataset)
    check_query(dataset, query)
    n_p = index.n_p if n_p is None else int(n_p)
    if not 1 <= n_p <= index.n_c:
        raise RejectedInput(f"n_p must be in [1, {index.n_c}], got {n_p}")
    if k < 1:
        raise RejectedInput(f"k must be >= 1, got {k}")
    probes = probe_order(index, query)[:n_p]
    off = index.list_offsets
    spans = [(off[c], off[c + 1]) for c in probes if off[c + 1] > off[c]]
    if spans:
        ids = np.concatenate([index.list_ids[a:b] for a, b in spans])
        if packed is not None:
            rows = np.concatenate([packed[a:b] for a, b in spans])
        else:
            rows = dataset.features[ids]
        y = query.scale * (rows @ query.theta)
    else:
        ids = np.zeros(0, dtype=np.int64)
        y = np.zeros(0)
    top_ids, top_sc = select_topk(ids, y, k)
    return TopKResult(top_ids, top_sc, k, gap_c=None, short=ids.size < min(k, dataset.n),
                      scanned=int(ids.size), info={"n_p": n_p})


class IvfProvider(TopKProvider):
    exact = False
    gap_c = None

    def __init__(self, index: IvfIndex, dataset: Dataset, n_p: int | None = None):
        _check(index, dataset)
        self.index = index
        self.dataset = dataset
        self.n_p = index.n_p if n_p is None else int(n_p)
        self._packed = np.ascontiguousarray(dataset.features[index.list_ids])

    def topk(self, dataset, query, k):
        if dataset is not self.dataset:
            _check(self.index, dataset)
            return ivf_topk(self.index, dataset, query, k, self.n_p)
        return ivf_topk(self.index, dataset, query, k, self.n_p, packed=self._packed)

    def __repr__(self):
        return f"IvfProvider(n_c={self.index.n_c}, n_p={self.n_p})"
