from __future__ import annotations

from abc import ABC, abstractmethod
from typing import Optional

from ..model import Dataset, Query, TopKResult, exact_topk


class TopKProvider(ABC):
    """Anything that can hand back a (possibly approximate) top-k set.

    Providers may miss items but never mis-score the ones they return.
    ``gap_c`` is the certified gap: 0 for exact providers, a positive
    constant for certified approximate ones, ``None`` when uncertified.
    """

    exact: bool = False
    gap_c: Optional[float] = None

    @abstractmethod
    def topk(self, dataset: Dataset, query: Query, k: int) -> TopKResult:
        ...


class ExactProvider(TopKProvider):
    exact = True
    gap_c = 0.0

    def topk(self, dataset, query, k):
        return exact_topk(dataset, query, k)

    def __repr__(self):
        return "ExactProvider()"
