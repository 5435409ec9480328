"""`.ssdu` binary container: named, typed, little-endian records plus a CRC-64.

Layout::

    magic "SSDU" | version:u32 | record-count:u32
    per record: name-len:u16 | name (utf-8) | dtype:u8 | ndim:u8 | dims:u64[ndim] | payload
    crc64:u64 over every preceding byte (CRC-64/XZ)
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterator, List, Mapping, Tuple, Union

import numpy as np

from mmssdu.errors import (
    BadMagicError,
    ChecksumError,
    FormatError,
    TruncatedFileError,
    UnsupportedVersionError,
)

logger = logging.getLogger(__name__)

MAGIC = b"SSDU"
VERSION = 1
HEADER = struct.Struct("<4sII")
RECORD_HEAD = struct.Struct("<BB")
CRC = struct.Struct("<Q")
EMPTY_SIZE = HEADER.size + CRC.size

DTYPE_F8, DTYPE_C16, DTYPE_BOOL, DTYPE_I8, DTYPE_UTF8 = 1, 2, 3, 4, 5
_NUMPY_DTYPES = {DTYPE_F8: np.dtype("<f8"), DTYPE_C16: np.dtype("<c16"), DTYPE_I8: np.dtype("<i8")}

_CRC64_POLY = 0xC96C5795D7870F42
_CRC64_MASK = 0xFFFFFFFFFFFFFFFF


def _crc64_table() -> Tuple[int, ...]:
    table = []
    for byte in range(256):
        crc = byte
        for _ in range(8):
            crc = (crc >> 1) ^ _CRC64_POLY if crc & 1 else crc >> 1
        table.append(crc)
    return tuple(table)


_CRC64_TABLE = _crc64_table()


def crc64(data: bytes) -> int:
    """CRC-64/XZ: reflected, init and final xor all ones."""
    crc = _CRC64_MASK
    table = _CRC64_TABLE
    for byte in data:
        crc = table[(crc ^ byte) & 0xFF] ^ (crc >> 8)
    return crc ^ _CRC64_MASK


Value = Union[np.ndarray, str]


@dataclass(frozen=True)
class Record:
    name: str
    value: Value

    @property
    def dtype_code(self) -> int:
        return _dtype_code(self.value)


def _dtype_code(value: Value) -> int:
    if isinstance(value, str):
        return DTYPE_UTF8
    kind = np.asarray(value).dtype.kind
    if kind == "b":
        return DTYPE_BOOL
    if kind == "c":
        return DTYPE_C16
    if kind == "f":
        return DTYPE_F8
    if kind in "iu":
        return DTYPE_I8
    raise FormatError(f"unsupported record dtype {np.asarray(value).dtype}")


class DatasetContainer:
    """Ordered collection of named records; names are unique."""

    def __init__(self, records: Mapping[str, Value] = None) -> None:
        self._records: Dict[str, Value] = {}
        for name, value in (records or {}).items():
            self.add(name, value)

    def add(self, name: str, value: Value) -> None:
        if name in self._records:
            raise FormatError(f"duplicate record name {name!r}")
        if len(name.encode("utf-8")) > 0xFFFF:
            raise FormatError(f"record name too long: {name[:40]!r}...")
        if not isinstance(value, str):
            value = np.asarray(value)
            code = _dtype_code(value)
            value = value.astype(_NUMPY_DTYPES[code]) if code in _NUMPY_DTYPES else value.astype(bool)
            if value.ndim > 0xFF:
                raise FormatError(f"{name}: too many dimensions ({value.ndim})")
        self._records[name] = value

    def __contains__(self, name: str) -> bool:
        return name in self._records

    def __getitem__(self, name: str) -> Value:
        try:
            return self._records[name]
        except KeyError:
            raise FormatError(f"container has no record {name!r}") from None

    def __iter__(self) -> Iterator[Record]:
        return (Record(name, value) for name, value in self._records.items())

    def __len__(self) -> int:
        return len(self._records)

    def names(self) -> List[str]:
        return list(self._records)

    def equals(self, other: "DatasetContainer") -> bool:
        """Same names, order, dtype codes and bitwise-equal values."""
        if self.names() != other.names():
            return False
        for mine, theirs in zip(self, other):
            if mine.dtype_code != theirs.dtype_code:
                return False
            if isinstance(mine.value, str):
                if mine.value != theirs.value:
                    return False
            elif mine.value.shape != theirs.value.shape or mine.value.tobytes() != theirs.value.tobytes():
                return False
        return True


def _encode_record(record: Record) -> bytes:
    name = record.name.encode("utf-8")
    code = record.dtype_code
    if code == DTYPE_UTF8:
        payload = record.value.encode("utf-8")
        dims: Tuple[int, ...] = (len(payload),)
    else:
        array = record.value
        dims = array.shape
        if code == DTYPE_BOOL:
            payload = np.packbits(array.ravel(), bitorder="little").tobytes()
        else:
            payload = np.ascontiguousarray(array, dtype=_NUMPY_DTYPES[code]).tobytes()
    head = struct.pack("<H", len(name)) + name + RECORD_HEAD.pack(code, len(dims))
    return head + struct.pack(f"<{len(dims)}Q", *dims) + payload


def encode_container(container: DatasetContainer) -> bytes:
    body = HEADER.pack(MAGIC, VERSION, len(container)) + b"".join(_encode_record(r) for r in container)
    return body + CRC.pack(crc64(body))


def _payload_size(code: int, dims: Tuple[int, ...]) -> int:
    count = int(np.prod(dims, dtype=np.uint64)) if dims else 1
    if code == DTYPE_UTF8:
        return dims[0] if dims else 0
    if code == DTYPE_BOOL:
        return (count + 7) // 8
    if code in _NUMPY_DTYPES:
        return count * _NUMPY_DTYPES[code].itemsize
    raise FormatError(f"unknown dtype code {code}")


def _take(data: bytes, offset: int, size: int, end: int, what: str) -> Tuple[bytes, int]:
    if offset + size > end:
        raise TruncatedFileError(f"file ends inside {what} (need {offset + size} bytes, have {end})")
    return data[offset : offset + size], offset + size


def decode_container(data: bytes) -> DatasetContainer:
    if len(data) < len(MAGIC):
        if MAGIC.startswith(data):
            raise TruncatedFileError(f"file of {len(data)} bytes is shorter than the magic")
        raise BadMagicError(f"bad magic {data!r}")
    if data[: len(MAGIC)] != MAGIC:
        raise BadMagicError(f"bad magic {data[:len(MAGIC)]!r}")
    if len(data) < EMPTY_SIZE:
        raise TruncatedFileError(f"file of {len(data)} bytes is shorter than the minimal {EMPTY_SIZE}")
    _, version, count = HEADER.unpack_from(data, 0)
    if version != VERSION:
        raise UnsupportedVersionError(f"container version {version} is not supported (expected {VERSION})")

    end = len(data) - CRC.size
    offset = HEADER.size
    raw: List[Tuple[str, int, Tuple[int, ...], bytes]] = []
    for index in range(count):
        what = f"record {index}"
        chunk, offset = _take(data, offset, 2, end, what)
        (name_len,) = struct.unpack("<H", chunk)
        name_bytes, offset = _take(data, offset, name_len, end, what)
        chunk, offset = _take(data, offset, RECORD_HEAD.size, end, what)
        code, ndim = RECORD_HEAD.unpack(chunk)
        chunk, offset = _take(data, offset, 8 * ndim, end, what)
        dims = struct.unpack(f"<{ndim}Q", chunk)
        payload, offset = _take(data, offset, _payload_size(code, dims), end, what)
        try:
            name = name_bytes.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"{what}: record name is not valid utf-8") from exc
        raw.append((name, code, dims, payload))

    (stored,) = CRC.unpack_from(data, end)
    actual = crc64(data[:end])
    if stored != actual:
        raise ChecksumError(f"checksum mismatch: stored {stored:016x}, computed {actual:016x}")
    if offset != end:
        raise FormatError(f"{end - offset} unexpected bytes after the last record")

    container = DatasetContainer()
    for name, code, dims, payload in raw:
        if code == DTYPE_UTF8:
            value: Value = payload.decode("utf-8")
        elif code == DTYPE_BOOL:
            count_bits = int(np.prod(dims, dtype=np.uint64)) if dims else 1
            bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8), count=count_bits, bitorder="little")
            value = bits.astype(bool).reshape(dims)
        else:
            value = np.frombuffer(payload, dtype=_NUMPY_DTYPES[code]).reshape(dims).copy()
        container.add(name, value)
    return container


def write_dataset(path: Union[str, Path], container: DatasetContainer) -> int:
    blob = encode_container(container)
    Path(path).write_bytes(blob)
    logger.info("Wrote %d records (%d bytes) to %s", len(container), len(blob), path)
    return len(blob)


def read_dataset(path: Union[str, Path]) -> DatasetContainer:
    container = decode_container(Path(path).read_bytes())
    logger.debug("Read %d records from %s", len(container), path)
    return container


__all__ = [
    "DTYPE_BOOL",
    "DTYPE_C16",
    "DTYPE_F8",
    "DTYPE_I8",
    "DTYPE_UTF8",
    "DatasetContainer",
    "EMPTY_SIZE",
    "MAGIC",
    "Record",
    "VERSION",
    "crc64",
    "decode_container",
    "encode_container",
    "read_dataset",
    "write_dataset",
]
