"""Sublinear amortized sampling and inference for large log-linear models."""
from .model import (Dataset, Query, RejectedInput, ScoreView, TopKResult, exact_expectation,
                    exact_partition, exact_sample, exact_topk, score_all)

__version__ = "0.1.0"

__all__ = [
    "Dataset", "Query", "RejectedInput", "ScoreView", "TopKResult", "exact_expectation",
    "exact_partition", "exact_sample", "exact_topk", "score_all",
]
