"""Maximum-likelihood fitting of theta by full-batch gradient ascent.

The gradient of the mean log-likelihood over the training ids D is
mean_{x in D} phi(x) - E_theta[phi]. Three back-ends supply E_theta[phi]:

* ``ExactGradient``: softmax over all n rows;
* ``LazyGradient``: the top-k plus uniform-tail estimator, one retrieval and
  one tail sample shared by every coordinate;
* ``TopKOnlyGradient``: softmax renormalized over the top-k rows only.
"""
from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .estimators import _draw, expectation_from_draws
from .mips.base import ExactProvider, TopKProvider
from .model import Dataset, Query, RejectedInput, logsumexp, softmax


@dataclass(frozen=True)
class ExactGradient:
    name = "exact"


@dataclass(frozen=True)
class LazyGradient:
    k: int
    l: int
    gap_c: Optional[float] = None
    provider: Optional[TopKProvider] = None
    name = "lazy"


@dataclass(frozen=True)
class TopKOnlyGradient:
    k: int
    provider: Optional[TopKProvider] = None
    name = "topk_only"


Backend = Union[ExactGradient, LazyGradient, TopKOnlyGradient]


@dataclass
class LearnConfig:
    train_ids: np.ndarray
    iterations: int = 5000
    lr0: float = 10.0
    halving_period: int = 1000
    backend: Backend = field(default_factory=ExactGradient)
    eval_period: int = 100
    seed: int = 0
    reduce: str = "mean"   # or "sum": how the reported log-likelihood aggregates over D

    def validate(self, n: int):
        ids = np.asarray(self.train_ids)
        if ids.size == 0:
            raise RejectedInput("train_ids must be non-empty")
        if ids.min() < 0 or ids.max() >= n:
            raise RejectedInput(f"train_ids must lie in [0, {n})")
        if not self.lr0 > 0:
            raise RejectedInput(f"lr0 must be > 0, got {self.lr0}")
        if self.iterations < 1 or self.halving_period < 1 or self.eval_period < 1:
            raise RejectedInput("iterations, halving_period and eval_period must be >= 1")
        if self.reduce not in ("mean", "sum"):
            raise RejectedInput(f"reduce must be 'mean' or 'sum', got {self.reduce!r}")


@dataclass
class LearnResult:
    theta: np.ndarray
    eval_iterations: np.ndarray
    log_likelihood: np.ndarray
    grad_time_ns: np.ndarray   # one entry per gradient call
    iterations: int
    backend: str

    @property
    def final_log_likelihood(self) -> float:
        return float(self.log_likelihood[-1])

    def write_csv(self, path_or_file):
        """Columns: iteration, mean_log_likelihood, grad_wall_time_ns, backend."""
        own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
        fh = open(path_or_file, "w", newline="") if own else path_or_file
        try:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", "mean_log_likelihood", "grad_wall_time_ns", "backend"])
            for it, ll in zip(self.eval_iterations, self.log_likelihood):
                w.writerow([int(it), repr(float(ll)), int(self.grad_time_ns[it - 1]), self.backend])
        finally:
            if own:
                fh.close()


def log_likelihood(dataset: Dataset, theta, train_ids, reduce: str = "mean") -> float:
    """Mean (or summed) log Pr(x; theta) over the training ids, with exact log Z."""
    theta = np.asarray(theta, dtype=np.float64)
    ids = np.asarray(train_ids)
    y = dataset.features @ theta
    ll = y[ids] - logsumexp(y)
    return float(ll.mean() if reduce == "mean" else ll.sum())


def feature_bounds(dataset: Dataset) -> np.ndarray:
    """C_j = max_i |phi(x_i)_j|, the per-coordinate bound for the lazy estimator."""
    return np.abs(dataset.features).max(axis=0)


def gradient(dataset: Dataset, theta, train_ids, backend: Backend = ExactGradient(),
             rng=None, target_mean: np.ndarray | None = None) -> np.ndarray:
    """d/dtheta of the mean log-likelihood over ``train_ids``."""
    theta = np.asarray(theta, dtype=np.float64)
    x = dataset.features
    if target_mean is None:
        target_mean = x[np.asarray(train_ids)].mean(axis=0)
    if isinstance(backend, ExactGradient):
        p = softmax(x @ theta)
        return target_mean - p @ x
    query = Query(theta)
    if isinstance(backend, LazyGradient):
        provider = backend.provider or ExactProvider()
        gen = np.random.default_rng(rng)
        k = min(backend.k, dataset.n)
        dr = _draw(dataset, query, provider, k, backend.l if k < dataset.n else 0, gen)
        F, _ = expectation_from_draws(dr, x)
        return target_mean - F
    if isinstance(backend, TopKOnlyGradient):
        provider = backend.provider or ExactProvider()
        top = provider.topk(dataset, query, min(backend.k, dataset.n))
        p = softmax(top.scores)
        return target_mean - p @ x[top.ids]
    raise RejectedInput(f"unknown gradient backend {backend!r}")


def learning_rate(lr0: float, halving_period: int, t: int) -> float:
    return lr0 * 2.0 ** -(t // halving_period)


def train(dataset: Dataset, config: LearnConfig) -> LearnResult:
    """Gradient ascent from theta = 0 with a step size halved every ``halving_period`` steps."""
    config.validate(dataset.n)
    ids = np.asarray(config.train_ids)
    target_mean = dataset.features[ids].mean(axis=0)
    rng = np.random.default_rng(config.seed)
    theta = np.zeros(dataset.d)
    times = np.zeros(config.iterations, dtype=np.int64)
    evals, curve = [], []
    for t in range(config.iterations):
        t0 = time.perf_counter_ns()
        g = gradient(dataset, theta, ids, config.backend, rng=rng, target_mean=target_mean)
        times[t] = time.perf_counter_ns() - t0
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(
                f"non-finite gradient at iteration {t} (|theta| = {np.linalg.norm(theta):.6g})")
        theta = theta + learning_rate(config.lr0, config.halving_period, t) * g
        if (t + 1) % config.eval_period == 0 or t + 1 == config.iterations:
            evals.append(t + 1)
            curve.append(log_likelihood(dataset, theta, ids, config.reduce))
    return LearnResult(theta=theta, eval_iterations=np.array(evals), log_likelihood=np.array(curve),
                       grad_time_ns=times, iterations=config.iterations,
                       backend=config.backend.name)
