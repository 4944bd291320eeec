"""Index files.

Layout (all little-endian)::

    magic   4s   b"LDIX"
    version u32  1
    type    u32  1 = IVF, 2 = LSH ladder
    n       u64
    d       u32
    payload      type-specific, see _ivf_payload / _lsh_payload
    crc32   u32  of everything before it
"""
from __future__ import annotations

import io
import os
import struct
import tempfile
import zlib

import numpy as np

from ..model import Dataset
from .ivf import IvfIndex
from .lsh import LshInstance, LshLadder

MAGIC = b"LDIX"
VERSION = 1
TYPE_IVF = 1
TYPE_LSH = 2
_HEADER = struct.Struct("<4sIIQI")


class IndexFormatError(ValueError):
    pass


def _arr(buf: io.BytesIO, a: np.ndarray, dtype: str):
    buf.write(np.ascontiguousarray(a, dtype=np.dtype(dtype).newbyteorder("<")).tobytes())


def _ivf_payload(ix: IvfIndex, buf: io.BytesIO):
    buf.write(struct.pack("<IIIQQ", ix.n_c, ix.n_p, ix.iters, ix.seed, ix.train_size))
    _arr(buf, ix.centroids, "f8")
    _arr(buf, ix.list_offsets, "i8")
    _arr(buf, ix.list_ids, "i8")


def _lsh_payload(lad: LshLadder, buf: io.BytesIO):
    buf.write(struct.pack("<ddddIIQII", lad.c, lad.delta, lad.M1, lad.M2, lad.k_max,
                          lad.n_lsh, lad.seed, lad.max_bits, lad.max_tables))
    for inst in lad.instances:
        buf.write(struct.pack("<ddIId", inst.s1, inst.s2, inst.bits, inst.tables, inst.miss_prob))
        _arr(buf, inst.projections, "f8")
        _arr(buf, inst.keys, "u8")
        _arr(buf, inst.order, "i4")


def dumps_index(index) -> bytes:
    buf = io.BytesIO()
    if isinstance(index, IvfIndex):
        buf.write(_HEADER.pack(MAGIC, VERSION, TYPE_IVF, index.n, index.d))
        _ivf_payload(index, buf)
    elif isinstance(index, LshLadder):
        buf.write(_HEADER.pack(MAGIC, VERSION, TYPE_LSH, index.n, index.d))
        _lsh_payload(index, buf)
    else:
        raise TypeError(f"cannot serialize {type(index).__name__}")
    body = buf.getvalue()
    return body + struct.pack("<I", zlib.crc32(body))


def save_index(index, path) -> None:
    """Write atomically (temp file + rename) so readers never see a partial file."""
    data = dumps_index(index)
    path = os.fspath(path)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(os.path.abspath(path)), suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def unpack(self, fmt: str):
        s = struct.Struct(fmt)
        if self.pos + s.size > len(self.data):
            raise IndexFormatError(f"index file truncated at byte {self.pos}")
        out = s.unpack_from(self.data, self.pos)
        self.pos += s.size
        return out

    def array(self, dtype: str, shape):
        dt = np.dtype(dtype).newbyteorder("<")
        count = int(np.prod(shape))
        nbytes = count * dt.itemsize
        if self.pos + nbytes > len(self.data):
            raise IndexFormatError(f"index file truncated at byte {self.pos}")
        a = np.frombuffer(self.data, dtype=dt, count=count, offset=self.pos).reshape(shape)
        self.pos += nbytes
        return a.astype(dt.newbyteorder("="))


def loads_index(data: bytes, dataset: Dataset | None = None):
    if len(data) < _HEADER.size + 4:
        raise IndexFormatError("index file too short")
    if data[:4] != MAGIC:
        raise IndexFormatError(f"bad magic {data[:4]!r}, expected {MAGIC!r}")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    r = _Reader(body)
    _, version, tag, n, d = r.unpack(_HEADER.format)
    if version != VERSION:
        raise IndexFormatError(f"unsupported index format version {version} (expected {VERSION})")
    if zlib.crc32(body) != crc:
        raise IndexFormatError("index file checksum mismatch (corrupt file)")
    if dataset is not None and (dataset.n, dataset.d) != (n, d):
        raise IndexFormatError(
            f"index is for n={n}, d={d} but dataset has n={dataset.n}, d={dataset.d}")
    if tag == TYPE_IVF:
        n_c, n_p, iters, seed, train_size = r.unpack("<IIIQQ")
        centroids = r.array("f8", (n_c, d))
        offsets = r.array("i8", (n_c + 1,))
        ids = r.array("i8", (n,))
        out = IvfIndex(n=n, d=d, centroids=centroids, list_offsets=offsets, list_ids=ids,
                       n_p=n_p, iters=iters, seed=seed, train_size=train_size)
    elif tag == TYPE_LSH:
        c, delta, M1, M2, k_max, n_lsh, seed, max_bits, max_tables = r.unpack("<ddddIIQII")
        out = LshLadder(n=n, d=d, c=c, delta=delta, k_max=k_max, M1=M1, M2=M2, seed=seed,
                        max_bits=max_bits, max_tables=max_tables)
        for _ in range(n_lsh):
            s1, s2, K, L, miss = r.unpack("<ddIId")
            out.instances.append(LshInstance(
                s1=s1, s2=s2, bits=K, tables=L, miss_prob=miss,
                projections=r.array("f8", (L, K, d + 1)),
                keys=r.array("u8", (L, n)), order=r.array("i4", (L, n))))
    else:
        raise IndexFormatError(f"unknown index type tag {tag}")
    if r.pos != len(body):
        raise IndexFormatError(f"{len(body) - r.pos} trailing bytes after index payload")
    return out


def load_index(path, dataset: Dataset | None = None):
    with open(path, "rb") as fh:
        return loads_index(fh.read(), dataset)
