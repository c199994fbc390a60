"""Helpers for the binary artifact formats.

All multi-byte values are little-endian. Readers fail with
:class:`TruncatedFileError` the moment a declared quantity extends past the
end of the file, so a short read never turns into garbage arrays.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import StoreFormatError, StoreVersionError, TruncatedFileError


class ByteReader:
    """Cursor over an in-memory artifact blob with exact-length reads."""

    def __init__(self, data: bytes, name: str = "file"):
        self._data = data
        self._pos = 0
        self._name = name

    def take(self, n: int) -> bytes:
        end = self._pos + n
        if end > len(self._data):
            raise TruncatedFileError(
                f"{self._name}: needed {n} bytes at offset {self._pos}, "
                f"only {len(self._data) - self._pos} remain"
            )
        chunk = self._data[self._pos:end]
        self._pos = end
        return chunk

    def unpack(self, fmt: str) -> tuple:
        fmt = "<" + fmt
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def array(self, dtype: str, shape: tuple[int, ...]) -> np.ndarray:
        dt = np.dtype(dtype)
        count = int(np.prod(shape)) if shape else 1
        raw = self.take(dt.itemsize * count)
        # copy: frombuffer views are read-only
        return np.frombuffer(raw, dtype=dt).reshape(shape).copy()

    def expect_end(self) -> None:
        if self._pos != len(self._data):
            raise StoreFormatError(
                f"{self._name}: {len(self._data) - self._pos} unexpected "
                "trailing bytes"
            )


def check_magic(reader: ByteReader, magic: bytes, kind: str) -> None:
    got = reader.take(len(magic))
    if got != magic:
        raise StoreFormatError(f"not a {kind} file (bad magic {got!r})")


def check_version(reader: ByteReader, supported: int, kind: str) -> int:
    (version,) = reader.unpack("H")
    if version != supported:
        raise StoreVersionError(
            f"{kind} format version {version} not supported (expected {supported})"
        )
    return version


def pack(fmt: str, *values) -> bytes:
    return struct.pack("<" + fmt, *values)


def array_bytes(arr: np.ndarray, dtype: str) -> bytes:
    return np.ascontiguousarray(arr, dtype=np.dtype(dtype)).tobytes()
