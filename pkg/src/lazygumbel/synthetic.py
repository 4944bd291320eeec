"""Seeded synthetic datasets standing in for real embedding collections."""
from __future__ import annotations

from typing import NamedTuple, Optional

import numpy as np

from .model import Dataset, RejectedInput

DISTRIBUTIONS = ("gaussian_unit", "planted_clusters", "heavy_tail")


class Synthetic(NamedTuple):
    dataset: Dataset
    labels: Optional[np.ndarray]   # cluster id per row for planted_clusters, else None


def _normalize(x: np.ndarray) -> np.ndarray:
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def gaussian_unit(n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    x = rng.standard_normal((n, d))
    while True:
        norms = np.linalg.norm(x, axis=1)
        bad = norms == 0
        if not bad.any():
            return x / norms[:, None]
        x[bad] = rng.standard_normal((int(bad.sum()), d))


def planted_clusters(n: int, d: int, m: int, spread: float, rng: np.random.Generator):
    """m unit-norm centers; row i belongs to cluster i % m and sits at
    normalize(center + spread * z) with z standard normal."""
    if not 1 <= m <= n:
        raise RejectedInput(f"need 1 <= clusters <= n, got {m}")
    centers = gaussian_unit(m, d, rng)
    labels = np.arange(n) % m
    x = _normalize(centers[labels] + spread * rng.standard_normal((n, d)))
    return x, labels


def heavy_tail(n: int, d: int, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Gaussian directions with log-normal norms rescaled so the largest is 1.

    Larger ``sigma`` spreads the scores over a wider range, concentrating
    softmax mass on a few rows.
    """
    r = np.exp(sigma * rng.standard_normal(n))
    return gaussian_unit(n, d, rng) * (r / r.max())[:, None]


def gen_synthetic(n: int, d: int, distribution: str = "gaussian_unit", seed: int = 0,
                  clusters: int = 4, spread: float = 0.05, sigma: float = 1.0) -> Synthetic:
    if n < 1 or d < 1:
        raise RejectedInput(f"need n, d >= 1, got n={n}, d={d}")
    rng = np.random.default_rng(seed)
    if distribution == "gaussian_unit":
        return Synthetic(Dataset(gaussian_unit(n, d, rng), unit_norm=True), None)
    if distribution == "planted_clusters":
        x, labels = planted_clusters(n, d, clusters, spread, rng)
        return Synthetic(Dataset(x, unit_norm=True), labels)
    if distribution == "heavy_tail":
        return Synthetic(Dataset(heavy_tail(n, d, sigma, rng)), None)
    raise RejectedInput(f"unknown distribution {distribution!r}; choose from {DISTRIBUTIONS}")
