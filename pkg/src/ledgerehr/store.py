"""Append-only block log on disk.

The file is a sequence of frames, each a 4-byte big-endian length followed
by the canonical block encoding. Recovery replays the frames in order and
then re-verifies the whole chain; a torn or tampered frame surfaces as a
failure at that frame's height.
"""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass

from . import codec, ledger

FRAME_PREFIX_LEN = 4


class StoreError(Exception):
    pass


@dataclass(frozen=True)
class FrameFault:
    """Where and why the log stopped decoding."""

    frame_index: int
    reason: str


@dataclass(frozen=True)
class LoadResult:
    blocks: tuple[ledger.Block, ...]
    fault: FrameFault | None


def decode_log(data: bytes) -> LoadResult:
    """Decode as many well-formed frames as the bytes allow."""
    blocks: list[ledger.Block] = []
    pos = 0
    index = 0
    while pos < len(data):
        if len(data) - pos < FRAME_PREFIX_LEN:
            return LoadResult(tuple(blocks), FrameFault(index, "truncated frame length"))
        (length,) = struct.unpack(">I", data[pos : pos + FRAME_PREFIX_LEN])
        pos += FRAME_PREFIX_LEN
        if len(data) - pos < length:
            return LoadResult(tuple(blocks), FrameFault(index, "truncated frame body"))
        try:
            blocks.append(ledger.decode_block(data[pos : pos + length]))
        except codec.CodecError as exc:
            return LoadResult(tuple(blocks), FrameFault(index, str(exc)))
        pos += length
        index += 1
    return LoadResult(tuple(blocks), None)


def encode_frame(block: ledger.Block) -> bytes:
    body = ledger.encode_block(block)
    return struct.pack(">I", len(body)) + body


class BlockLog:
    """Single-writer append-only log; reads are plain file scans."""

    def __init__(self, path: str):
        self.path = path

    def exists(self) -> bool:
        return os.path.exists(self.path)

    def append(self, block: ledger.Block) -> None:
        with open(self.path, "ab") as fh:
            fh.write(encode_frame(block))
            fh.flush()
            os.fsync(fh.fileno())

    def read_bytes(self) -> bytes:
        with open(self.path, "rb") as fh:
            return fh.read()

    def load(self) -> LoadResult:
        if not self.exists():
            return LoadResult((), None)
        return decode_log(self.read_bytes())


@dataclass(frozen=True)
class RecoveredChain:
    chain: ledger.ChainState | None
    report: ledger.AuditReport


def recover_chain(
    log: BlockLog,
    quorum: int,
    *,
    validator_keys=None,
    mode: str = ledger.MODE_CONSORTIUM,
    expected_genesis: ledger.Block | None = None,
) -> RecoveredChain:
    """Replay the log, then audit the chain. A frame fault is reported at the
    faulting frame's height; an empty log is reported at height 0."""
    result = log.load()
    if not result.blocks:
        reason = result.fault.reason if result.fault else "empty log"
        return RecoveredChain(
            chain=None,
            report=ledger.AuditReport(
                ok=False,
                height=0,
                failure_height=0,
                violations=(ledger.Violation("unreadable-log", reason),),
            ),
        )
    chain = ledger.ChainState(blocks=result.blocks)
    report = ledger.verify_chain(
        chain,
        quorum,
        validator_keys=validator_keys,
        mode=mode,
        expected_genesis=expected_genesis,
    )
    if result.fault is not None and report.ok:
        report = ledger.AuditReport(
            ok=False,
            height=chain.height,
            failure_height=result.fault.frame_index,
            violations=(ledger.Violation("malformed-frame", result.fault.reason),),
        )
    return RecoveredChain(chain=chain, report=report)


def frame_spans(data: bytes) -> list[tuple[int, int]]:
    """(offset, length) of each frame body, indexed by height."""
    spans: list[tuple[int, int]] = []
    pos = 0
    while pos + FRAME_PREFIX_LEN <= len(data):
        (length,) = struct.unpack(">I", data[pos : pos + FRAME_PREFIX_LEN])
        body_start = pos + FRAME_PREFIX_LEN
        if body_start + length > len(data):
            break
        spans.append((body_start, length))
        pos = body_start + length
    return spans


def tamper_log(path: str, height: int, offset: int, bit: int = 0) -> tuple[int, int]:
    """Flip one bit inside the stored frame body for ``height``.

    Test tooling only: this deliberately corrupts the log in place so the
    audit path can be demonstrated. Returns (old_byte, new_byte).
    """
    if not 0 <= bit <= 7:
        raise StoreError("bit index must be 0..7")
    with open(path, "rb") as fh:
        data = bytearray(fh.read())
    spans = frame_spans(bytes(data))
    if height >= len(spans):
        raise StoreError(f"log holds {len(spans)} frames, no height {height}")
    start, length = spans[height]
    if offset >= length:
        raise StoreError(f"frame for height {height} is {length} bytes long")
    old = data[start + offset]
    new = old ^ (1 << bit)
    data[start + offset] = new
    with open(path, "wb") as fh:
        fh.write(data)
    return old, new
