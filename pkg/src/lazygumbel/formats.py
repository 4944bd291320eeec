"""Dataset files: fvecs and CSV on the way in, the LDDS container at rest.

fvecs: per vector a little-endian int32 d followed by d little-endian float32.
CSV: one vector per line, comma separated, '.' decimal point.
LDDS (all little-endian)::

    magic   4s   b"LDDS"
    version u32  1
    n       u64
    d       u32
    data         n * d float32, row-major
"""
from __future__ import annotations

import csv
import io
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .model import Dataset

MAGIC = b"LDDS"
VERSION = 1
_HEADER = struct.Struct("<4sIQI")


class DataFormatError(ValueError):
    """Malformed input file; ``where`` is a byte offset or a 1-based line number."""

    def __init__(self, msg: str, where: str | None = None):
        super().__init__(f"{where}: {msg}" if where else msg)
        self.where = where


def _bytes_of(src) -> bytes:
    if isinstance(src, (bytes, bytearray, memoryview)):
        return bytes(src)
    with open(src, "rb") as fh:
        return fh.read()


def _check_finite(x: np.ndarray, locate):
    bad = np.argwhere(~np.isfinite(x))
    if bad.size:
        r, c = (int(v) for v in bad[0])
        raise DataFormatError(f"non-finite value {x[r, c]} in row {r}, column {c}", locate(r, c))


def parse_fvecs(data: bytes) -> np.ndarray:
    """Decode fvecs bytes into an (n, d) float32 array."""
    size = len(data)
    if size == 0:
        raise DataFormatError("empty fvecs input", "offset 0")
    if size < 4:
        raise DataFormatError(f"truncated header ({size} bytes)", "offset 0")
    d = struct.unpack_from("<i", data, 0)[0]
    if d <= 0:
        raise DataFormatError(f"dimension must be positive, got {d}", "offset 0")
    rec = 4 + 4 * d
    n, rem = divmod(size, rec)
    if n:
        heads = np.frombuffer(data, dtype="<i4", count=n * (d + 1)).reshape(n, d + 1)[:, 0]
        bad = np.flatnonzero(heads != d)
        if bad.size:
            i = int(bad[0])
            raise DataFormatError(f"record {i} has d = {heads[i]}, expected {d}", f"offset {i * rec}")
    if rem:
        off = n * rec
        if rem >= 4:
            di = struct.unpack_from("<i", data, off)[0]
            if di != d:
                raise DataFormatError(f"record {n} has d = {di}, expected {d}", f"offset {off}")
        raise DataFormatError(f"truncated record {n} ({rem} of {rec} bytes)", f"offset {off}")
    raw = np.frombuffer(data, dtype="<f4").reshape(n, d + 1)[:, 1:]
    x = raw.astype(np.float32)
    _check_finite(x, lambda r, c: f"offset {r * rec + 4 + 4 * c}")
    return x


def encode_fvecs(x) -> bytes:
    x = np.asarray(x, dtype=np.float32)
    if x.ndim != 2 or x.shape[1] < 1:
        raise ValueError(f"need an (n, d) array with d >= 1, got shape {x.shape}")
    n, d = x.shape
    out = np.empty((n, d + 1), dtype="<f4")
    out[:, 1:] = x
    out[:, :1] = np.full((n, 1), d, dtype="<i4").view("<f4")
    return out.tobytes()


def parse_csv(text: str) -> np.ndarray:
    rows = []
    d = None
    for lineno, rec in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not rec or all(not f.strip() for f in rec):
            continue
        try:
            vals = [float(f) for f in rec]
        except ValueError as e:
            raise DataFormatError(str(e), f"line {lineno}") from None
        if d is None:
            d = len(vals)
        elif len(vals) != d:
            raise DataFormatError(f"{len(vals)} values, expected {d}", f"line {lineno}")
        if not all(np.isfinite(vals)):
            raise DataFormatError("non-finite value", f"line {lineno}")
        rows.append(vals)
    if not rows:
        raise DataFormatError("no vectors in CSV input", "line 1")
    return np.asarray(rows, dtype=np.float32)


def encode_csv(x) -> str:
    x = np.asarray(x, dtype=np.float32)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for row in x:
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def normalize_rows(x: np.ndarray) -> np.ndarray:
    """Scale each row to unit norm (float64 arithmetic); zero rows are rejected."""
    x64 = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x64, axis=1)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise DataFormatError("cannot normalize a row with norm 0", f"row {int(zero[0])}")
    return (x64 / norms[:, None]).astype(np.float32)


def encode_ldds(x) -> bytes:
    x = np.ascontiguousarray(x, dtype="<f4")
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
        raise ValueError(f"need an (n, d) array with n, d >= 1, got shape {x.shape}")
    return _HEADER.pack(MAGIC, VERSION, x.shape[0], x.shape[1]) + x.tobytes()


def decode_ldds(data: bytes) -> np.ndarray:
    if len(data) < _HEADER.size:
        raise DataFormatError("truncated LDDS header", "offset 0")
    magic, version, n, d = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise DataFormatError(f"bad magic {magic!r}", "offset 0")
    if version != VERSION:
        raise DataFormatError(f"unsupported LDDS version {version}", "offset 4")
    if n < 1 or d < 1:
        raise DataFormatError(f"need n, d >= 1, got n={n}, d={d}", "offset 8")
    want = _HEADER.size + 4 * n * d
    if len(data) != want:
        raise DataFormatError(f"payload is {len(data)} bytes, expected {want}", f"offset {_HEADER.size}")
    x = np.frombuffer(data, dtype="<f4", offset=_HEADER.size).reshape(n, d).astype(np.float32)
    _check_finite(x, lambda r, c: f"offset {_HEADER.size + 4 * (r * d + c)}")
    return x


def atomic_write(path, data: bytes | str):
    """Write via a temp file in the same directory, then rename over ``path``."""
    path = Path(path)
    if isinstance(data, str):
        data = data.encode()
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_vectors(path, fmt: str) -> np.ndarray:
    if fmt == "fvecs":
        return parse_fvecs(_bytes_of(path))
    if fmt == "csv":
        try:
            return parse_csv(_bytes_of(path).decode("utf-8"))
        except UnicodeDecodeError as e:
            raise DataFormatError(f"not UTF-8 text ({e.reason})", f"offset {e.start}") from None
    if fmt == "ldds":
        return decode_ldds(_bytes_of(path))
    raise ValueError(f"unknown format {fmt!r}")


def write_vectors(path, x, fmt: str):
    if fmt == "fvecs":
        atomic_write(path, encode_fvecs(x))
    elif fmt == "csv":
        atomic_write(path, encode_csv(x))
    elif fmt == "ldds":
        atomic_write(path, encode_ldds(x))
    else:
        raise ValueError(f"unknown format {fmt!r}")


def ingest(src, fmt: str, normalize: bool = False) -> np.ndarray:
    """Parse an fvecs or CSV file into the float32 array stored in LDDS."""
    x = read_vectors(src, fmt)
    return normalize_rows(x) if normalize else x


def load_dataset(path, unit_norm: bool = False) -> Dataset:
    """Read an LDDS file into a Dataset (features widened to float64)."""
    return Dataset(decode_ldds(_bytes_of(path)), unit_norm=unit_norm)


def save_dataset(path, x):
    atomic_write(path, encode_ldds(x.features if isinstance(x, Dataset) else x))
