"""Canonical binary encoding primitives shared by all wire formats.

Integers are big-endian and fixed width. Variable-length byte fields carry
a 4-byte big-endian length prefix. Every value has exactly one valid
encoding; decoders are strict and reject short or trailing bytes.
"""
from __future__ import annotations

import struct


class CodecError(ValueError):
    """Base class for canonical-encoding failures."""


class MalformedFrame(CodecError):
    """Input ended early or a field failed to parse."""


class TrailingBytes(CodecError):
    """Input decoded cleanly but left unconsumed bytes."""


def u8(value: int) -> bytes:
    if not 0 <= value <= 0xFF:
        raise CodecError(f"u8 out of range: {value}")
    return struct.pack(">B", value)


def u16(value: int) -> bytes:
    if not 0 <= value <= 0xFFFF:
        raise CodecError(f"u16 out of range: {value}")
    return struct.pack(">H", value)


def u32(value: int) -> bytes:
    if not 0 <= value <= 0xFFFFFFFF:
        raise CodecError(f"u32 out of range: {value}")
    return struct.pack(">I", value)


def u64(value: int) -> bytes:
    if not 0 <= value <= 0xFFFFFFFFFFFFFFFF:
        raise CodecError(f"u64 out of range: {value}")
    return struct.pack(">Q", value)


def var_bytes(data: bytes) -> bytes:
    return u32(len(data)) + data


def var_str(text: str) -> bytes:
    return var_bytes(text.encode("utf-8"))


class Reader:
    """Strict sequential reader over an immutable byte string."""

    def __init__(self, data: bytes):
        self._data = data
        self._pos = 0

    @property
    def remaining(self) -> int:
        return len(self._data) - self._pos

    def take(self, n: int) -> bytes:
        if n < 0 or self.remaining < n:
            raise MalformedFrame(
                f"need {n} bytes at offset {self._pos}, have {self.remaining}"
            )
        chunk = self._data[self._pos : self._pos + n]
        self._pos += n
        return chunk

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack(">H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack(">I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack(">Q", self.take(8))[0]

    def var_bytes(self) -> bytes:
        return self.take(self.u32())

    def var_str(self) -> str:
        raw = self.var_bytes()
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedFrame(f"invalid utf-8 in string field: {exc}") from exc

    def finish(self) -> None:
        if self.remaining:
            raise TrailingBytes(f"{self.remaining} unconsumed bytes")


def to_hex(data: bytes) -> str:
    return data.hex()


def from_hex(text: str, expected_len: int | None = None) -> bytes:
    try:
        raw = bytes.fromhex(text)
    except ValueError as exc:
        raise CodecError(f"invalid hex: {text!r}") from exc
    if expected_len is not None and len(raw) != expected_len:
        raise CodecError(f"expected {expected_len} bytes, got {len(raw)}")
    return raw
