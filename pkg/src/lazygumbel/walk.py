"""Markov chain over dataset rows with transition weights e^{tau phi(x_i).phi(x_j)}.

Each step samples the next state from the softmax over all rows, queried
with theta = phi(x_current) and scale = tau. Nothing about a row's
transition distribution is cached between steps.
"""
from __future__ import annotations

import csv
import time
import warnings
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .gumbel import cutoff_for_expected_exceedances
from .mips.base import ExactProvider, TopKProvider
from .model import Dataset, Query, RejectedInput, sample_from_scores
from .sampler import _draw_once, _retrieve, resolve_gap


@dataclass(frozen=True)
class ExactStep:
    name = "exact"


@dataclass(frozen=True)
class LazyStep:
    k: int
    gap_c: Optional[float] = None
    name = "lazy"


@dataclass(frozen=True)
class FixedBStep:
    k: int
    l: int
    gap_c: Optional[float] = None
    name = "fixed_b"


StepSampler = Union[ExactStep, LazyStep, FixedBStep]


@dataclass
class WalkConfig:
    steps: int
    tau: float
    sampler: StepSampler = field(default_factory=ExactStep)
    seed: int = 0
    burn_in: Optional[int] = None   # default: 1% of steps
    thin: int = 20
    windows: int = 1                # also count visits in this many equal consecutive windows

    @property
    def burn(self) -> int:
        return self.steps // 100 if self.burn_in is None else int(self.burn_in)

    def validate(self):
        if self.steps < 1:
            raise RejectedInput(f"steps must be >= 1, got {self.steps}")
        if not self.tau >= 0:
            raise RejectedInput(f"tau must be >= 0, got {self.tau}")
        if not 0 <= self.burn < self.steps:
            raise RejectedInput(f"burn_in must be in [0, steps), got {self.burn}")
        if self.thin < 1 or self.windows < 1:
            raise RejectedInput("thin and windows must be >= 1")


@dataclass
class WalkStats:
    visit_counts: np.ndarray        # per id, states after burn-in
    trajectory: np.ndarray          # every thin-th state, starting with X_0
    thin: int
    step_time_ns: dict              # summary of per-step wall time
    window_counts: list = field(default_factory=list)

    @property
    def total(self) -> int:
        return int(self.visit_counts.sum())

    def write_counts_csv(self, path_or_file):
        own = not hasattr(path_or_file, "write")
        fh = open(path_or_file, "w", newline="") if own else path_or_file
        try:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["id", "count"])
            for i in np.flatnonzero(self.visit_counts):
                w.writerow([int(i), int(self.visit_counts[i])])
        finally:
            if own:
                fh.close()


def run_walk(dataset: Dataset, config: WalkConfig, provider: TopKProvider | None = None) -> WalkStats:
    """X_0 uniform, then ``steps`` transitions; visits counted after ``burn_in``."""
    config.validate()
    provider = provider or ExactProvider()
    n = dataset.n
    rng = np.random.default_rng(config.seed)
    smp = config.sampler
    gap = None
    fixed = None
    if not isinstance(smp, ExactStep):
        gap = resolve_gap(provider, smp.gap_c)
        if not 1 <= smp.k <= n:
            raise RejectedInput(f"k must be in [1, {n}], got {smp.k}")
    if isinstance(smp, FixedBStep):
        fixed = cutoff_for_expected_exceedances(n, smp.l)
    state = int(rng.integers(n))
    counted = np.zeros(config.steps - config.burn, dtype=np.int64)
    traj = [state]
    times = np.empty(config.steps, dtype=np.int64)
    x = dataset.features
    tau = float(config.tau)
    exact = isinstance(smp, ExactStep)
    for t in range(config.steps):
        t0 = time.perf_counter_ns()
        if tau == 0:
            state = int(rng.integers(n))
        elif exact:
            state = sample_from_scores(tau * (x @ x[state]), rng)
        else:
            q = Query(x[state], scale=tau)
            top = _retrieve(dataset, q, provider, smp.k)
            tr = _draw_once(dataset, q, top, rng, gap_c=gap, fixed=fixed,
                            l=getattr(smp, "l", None), seed=None)
            state = tr.chosen_id
        times[t] = time.perf_counter_ns() - t0
        if t >= config.burn:
            counted[t - config.burn] = state
        if (t + 1) % config.thin == 0:
            traj.append(state)
    counts = np.bincount(counted, minlength=n)
    windows = []
    if config.windows > 1:
        for part in np.array_split(counted, config.windows):
            windows.append(np.bincount(part, minlength=n))
    summary = {"mean": float(times.mean()), "median": float(np.median(times)),
               "p90": float(np.percentile(times, 90)), "total": int(times.sum())}
    return WalkStats(visit_counts=counts, trajectory=np.array(traj), thin=config.thin,
                     step_time_ns=summary, window_counts=windows)


def top_set(counts: np.ndarray, top_n: int) -> np.ndarray:
    """Ids of the ``top_n`` most visited states (count desc, id asc), visited ones only."""
    counts = np.asarray(counts)
    visited = np.flatnonzero(counts > 0)
    order = np.lexsort((visited, -counts[visited]))
    return visited[order[:top_n]]


def topset_overlap(a: Union[WalkStats, np.ndarray], b: Union[WalkStats, np.ndarray],
                   top_n: int) -> float:
    """|top_n(a) & top_n(b)| / top_n.

    If either side visited fewer than ``top_n`` states the comparison runs over
    the visited sets (denominator: the larger of the two) and a warning is issued.
    """
    ca = a.visit_counts if isinstance(a, WalkStats) else np.asarray(a)
    cb = b.visit_counts if isinstance(b, WalkStats) else np.asarray(b)
    if ca.shape != cb.shape:
        raise RejectedInput("visit counts cover different datasets")
    if top_n < 1:
        raise RejectedInput(f"top_n must be >= 1, got {top_n}")
    sa, sb = top_set(ca, top_n), top_set(cb, top_n)
    denom = top_n
    if sa.size < top_n or sb.size < top_n:
        warnings.warn(f"fewer than {top_n} states visited; comparing visited sets", stacklevel=2)
        denom = max(sa.size, sb.size)
        if denom == 0:
            return 1.0
    return np.intersect1d(sa, sb).size / denom
