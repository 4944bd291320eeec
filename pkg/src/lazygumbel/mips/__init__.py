"""Top-k retrieval providers: exact scan, IVF clustering index, LSH ladder."""
from .base import ExactProvider, TopKProvider
from .ivf import IvfIndex, IvfProvider, build_ivf, ivf_topk
from .lsh import LshLadder, LshProvider, augment, build_lsh_ladder, lsh_topk
from .storage import IndexFormatError, dumps_index, load_index, loads_index, save_index

__all__ = [
    "ExactProvider", "TopKProvider", "IvfIndex", "IvfProvider", "build_ivf", "ivf_topk",
    "LshLadder", "LshProvider", "augment", "build_lsh_ladder", "lsh_topk",
    "IndexFormatError", "dumps_index", "load_index", "loads_index", "save_index",
]
