"""Bit-exact binary tensor container (GPMT).

Layout, all little-endian:

    offset  size       field
    0       4          magic ``47 50 4D 54`` ("GPMT")
    4       2          u16 format version, always 1
    6       1          u8 dtype code: 1 = f32, 2 = f16
    7       1          u8 ndim, 1..5
    8       8 * ndim   u64 dimension sizes
    ...     rest       raw row-major element data

Files round-trip bitwise: ``read_blob(write_blob(b)) == b``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BadDtype, BadMagic, BlobError, TruncatedFile, UnsupportedVersion

MAGIC = b"GPMT"
VERSION = 1
MAX_NDIM = 5

# dtype code <-> numpy dtype; data is always little-endian on disk
_CODE_TO_DTYPE = {1: np.dtype("<f4"), 2: np.dtype("<f2")}
_KIND_TO_CODE = {"f32": 1, "f16": 2}
_CODE_TO_KIND = {1: "f32", 2: "f16"}


@dataclass(frozen=True)
class TensorBlob:
    """An n-dimensional float tensor with an exact on-disk encoding.

    Parameters
    ----------
    dtype : str
        ``"f32"`` or ``"f16"``.
    shape : tuple of int
        1 to 5 dimensions, all >= 1.
    data : numpy.ndarray
        Row-major array matching ``dtype`` and ``shape``.
    """

    dtype: str
    shape: tuple
    data: np.ndarray

    def __post_init__(self):
        if self.dtype not in _KIND_TO_CODE:
            raise ValueError(f"dtype must be f32 or f16, got {self.dtype!r}")
        if not 1 <= len(self.shape) <= MAX_NDIM:
            raise ValueError(f"ndim must be 1..{MAX_NDIM}, got {len(self.shape)}")
        if any(int(d) < 1 for d in self.shape):
            raise ValueError(f"all dims must be >= 1, got {self.shape}")
        expected = _CODE_TO_DTYPE[_KIND_TO_CODE[self.dtype]]
        arr = np.ascontiguousarray(self.data, dtype=expected)
        if arr.shape != tuple(int(d) for d in self.shape):
            raise ValueError(f"data shape {arr.shape} != declared {tuple(self.shape)}")
        object.__setattr__(self, "shape", tuple(int(d) for d in self.shape))
        object.__setattr__(self, "data", arr)

    def __eq__(self, other):
        if not isinstance(other, TensorBlob):
            return NotImplemented
        return (
            self.dtype == other.dtype
            and self.shape == other.shape
            and self.data.tobytes() == other.data.tobytes()
        )

    @classmethod
    def from_array(cls, arr: np.ndarray, dtype: str | None = None) -> "TensorBlob":
        """Wrap an array, defaulting dtype to f16 for f16 input, else f32."""
        arr = np.asarray(arr)
        if dtype is None:
            dtype = "f16" if arr.dtype == np.float16 else "f32"
        return cls(dtype=dtype, shape=arr.shape, data=arr)

    def as_f32(self) -> np.ndarray:
        """Element data promoted to float32 (the engine's working precision)."""
        return np.asarray(self.data, dtype=np.float32)


def header_nbytes(ndim: int) -> int:
    """Size in bytes of the container header for a given rank."""
    return 8 + 8 * ndim


def write_blob(path, blob: TensorBlob) -> None:
    """Serialize ``blob`` to ``path``; inverse of :func:`read_blob`."""
    path = Path(path)
    code = _KIND_TO_CODE[blob.dtype]
    header = MAGIC + struct.pack("<HBB", VERSION, code, len(blob.shape))
    header += struct.pack(f"<{len(blob.shape)}Q", *blob.shape)
    payload = np.ascontiguousarray(blob.data, dtype=_CODE_TO_DTYPE[code]).tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def _parse_header(raw: bytes, path) -> tuple:
    if len(raw) < 8:
        raise TruncatedFile(f"{path}: {len(raw)} bytes is shorter than the fixed header")
    if raw[:4] != MAGIC:
        raise BadMagic(f"{path}: bad magic {raw[:4]!r}")
    version, code, ndim = struct.unpack("<HBB", raw[4:8])
    if version != VERSION:
        raise UnsupportedVersion(f"{path}: version {version}, expected {VERSION}")
    if code not in _CODE_TO_DTYPE:
        raise BadDtype(f"{path}: dtype code {code}")
    if not 1 <= ndim <= MAX_NDIM:
        raise BlobError(f"{path}: ndim {ndim} outside 1..{MAX_NDIM}")
    if len(raw) < header_nbytes(ndim):
        raise TruncatedFile(f"{path}: header cut off before {ndim} dims")
    dims = struct.unpack(f"<{ndim}Q", raw[8 : 8 + 8 * ndim])
    if any(d < 1 for d in dims):
        raise BlobError(f"{path}: zero-size dim in {dims}")
    return code, dims


def read_blob_header(path) -> tuple:
    """Return ``(dtype_kind, shape)`` without loading element data."""
    path = Path(path)
    with open(path, "rb") as fh:
        raw = fh.read(header_nbytes(MAX_NDIM))
    code, dims = _parse_header(raw, path)
    return _CODE_TO_KIND[code], dims


def read_blob(path, mmap: bool = False) -> TensorBlob:
    """Deserialize a tensor container.

    Parameters
    ----------
    path : path-like
    mmap : bool
        When true, element data is memory-mapped read-only instead of copied.
    """
    path = Path(path)
    file_size = path.stat().st_size
    with open(path, "rb") as fh:
        raw = fh.read(header_nbytes(MAX_NDIM))
        code, dims = _parse_header(raw, path)
        np_dtype = _CODE_TO_DTYPE[code]
        offset = header_nbytes(len(dims))
        count = int(np.prod(np.asarray(dims, dtype=np.uint64)))
        need = offset + count * np_dtype.itemsize
        if file_size < need:
            raise TruncatedFile(f"{path}: {file_size} bytes, need {need} for shape {dims}")
        if mmap:
            data = np.memmap(path, dtype=np_dtype, mode="r", offset=offset, shape=tuple(dims))
        else:
            fh.seek(offset)
            buf = fh.read(count * np_dtype.itemsize)
            data = np.frombuffer(buf, dtype=np_dtype).reshape(tuple(dims))
    return TensorBlob(dtype=_CODE_TO_KIND[code], shape=tuple(dims), data=data)
