"""Shared helpers for the fixed binary container formats."""
from __future__ import annotations

import struct
from typing import BinaryIO


class FormatError(ValueError):
    """Raised when a binary container is malformed or truncated."""


def read_exact(fh: BinaryIO, count: int, what: str) -> bytes:
    offset = fh.tell()
    data = fh.read(count)
    if len(data) != count:
        raise FormatError(f"truncated file reading {what} at byte {offset}")
    return data


def read_struct(fh: BinaryIO, fmt: str, what: str) -> tuple:
    return struct.unpack(fmt, read_exact(fh, struct.calcsize(fmt), what))


def expect_magic(fh: BinaryIO, magic: bytes) -> None:
    got = read_exact(fh, len(magic), "magic")
    if got != magic:
        raise FormatError(f"bad magic: expected {magic!r}, got {got!r}")


def expect_version(fh: BinaryIO, version: int) -> None:
    (got,) = read_struct(fh, "<I", "format version")
    if got != version:
        raise FormatError(f"unsupported format version {got} (expected {version})")
