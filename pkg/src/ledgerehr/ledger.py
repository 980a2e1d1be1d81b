"""Block structure, hash chaining, validation, and the canonical block codec.

A block header commits to the previous block by hash, to the transaction
list by Merkle body root, and carries a validity threshold (``target``)
that is only meaningful when blocks are mined in the proof-of-work demo
mode; under consortium operation the target is pinned to all-0xff and
blocks are sealed by quorum commit signatures over the header hash.

The committed store is strictly linear: fork resolution happens in the
consensus engine before a block ever reaches ``append_block``.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable, Mapping, Sequence

from . import codec, ehr, identity, merkle

HASH_LEN = 32
PROPOSER_ID_LEN = 16
ZERO_HASH = bytes(HASH_LEN)
ZERO_PROPOSER = bytes(PROPOSER_ID_LEN)
TARGET_MAX = b"\xff" * HASH_LEN
HEADER_LEN = 138
BLOCK_VERSION = 1

MODE_CONSORTIUM = "consortium"
MODE_POW_DEMO = "pow-demo"

KeyLookup = Callable[[bytes], bytes | None]


class LedgerError(Exception):
    pass


class EmptyBlock(LedgerError):
    pass


class StaleTimestamp(LedgerError):
    pass


class InvalidTransaction(LedgerError):
    def __init__(self, tx_hash: bytes, reason: str):
        self.tx_hash = tx_hash
        super().__init__(f"{tx_hash.hex()}: {reason}")


class ValidationFailed(LedgerError):
    def __init__(self, violations: list["Violation"]):
        self.violations = violations
        super().__init__("; ".join(v.rule for v in violations) or "validation failed")


@dataclass(frozen=True)
class BlockHeader:
    version: int
    height: int
    prev_hash: bytes
    timestamp_ms: int
    body_root: bytes
    target: bytes
    nonce: int
    proposer_id: bytes


@dataclass(frozen=True)
class Block:
    header: BlockHeader
    transactions: tuple[ehr.Transaction, ...]
    commit_signatures: tuple[tuple[bytes, bytes], ...] = ()

    @property
    def height(self) -> int:
        return self.header.height


@dataclass(frozen=True)
class Violation:
    rule: str
    detail: str


@dataclass(frozen=True)
class AuditReport:
    ok: bool
    height: int
    failure_height: int | None = None
    violations: tuple[Violation, ...] = ()

    def describe(self) -> str:
        if self.ok:
            return f"OK height={self.height}"
        rules = ", ".join(v.rule for v in self.violations)
        return f"FAIL height={self.failure_height}: {rules}"


def encode_header(header: BlockHeader) -> bytes:
    """Fixed 138-byte header layout; field order is part of the wire contract."""
    if len(header.prev_hash) != HASH_LEN or len(header.body_root) != HASH_LEN:
        raise codec.CodecError("header hashes must be 32 bytes")
    if len(header.target) != HASH_LEN:
        raise codec.CodecError("target must be 32 bytes")
    if len(header.proposer_id) != PROPOSER_ID_LEN:
        raise codec.CodecError("proposer_id must be 16 bytes")
    return (
        codec.u16(header.version)
        + codec.u64(header.height)
        + header.prev_hash
        + codec.u64(header.timestamp_ms)
        + header.body_root
        + header.target
        + codec.u64(header.nonce)
        + header.proposer_id
    )


def read_header(r: codec.Reader) -> BlockHeader:
    return BlockHeader(
        version=r.u16(),
        height=r.u64(),
        prev_hash=r.take(HASH_LEN),
        timestamp_ms=r.u64(),
        body_root=r.take(HASH_LEN),
        target=r.take(HASH_LEN),
        nonce=r.u64(),
        proposer_id=r.take(PROPOSER_ID_LEN),
    )


def decode_header(data: bytes) -> BlockHeader:
    r = codec.Reader(data)
    header = read_header(r)
    r.finish()
    return header


@lru_cache(maxsize=1 << 16)
def block_hash(header: BlockHeader) -> bytes:
    return hashlib.sha256(encode_header(header)).digest()


def encode_block(block: Block) -> bytes:
    parts = [encode_header(block.header), codec.u32(len(block.transactions))]
    for tx in block.transactions:
        parts.append(ehr.encode_transaction(tx))
    parts.append(codec.u32(len(block.commit_signatures)))
    for validator_id, signature in block.commit_signatures:
        if len(validator_id) != PROPOSER_ID_LEN or len(signature) != 64:
            raise codec.CodecError("malformed commit signature entry")
        parts.append(validator_id + signature)
    return b"".join(parts)


def read_block(r: codec.Reader) -> Block:
    header = read_header(r)
    txs = tuple(ehr.read_transaction(r) for _ in range(r.u32()))
    sigs = tuple((r.take(PROPOSER_ID_LEN), r.take(64)) for _ in range(r.u32()))
    return Block(header=header, transactions=txs, commit_signatures=sigs)


def decode_block(data: bytes) -> Block:
    if not data:
        raise codec.MalformedFrame("empty block frame")
    r = codec.Reader(data)
    block = read_block(r)
    r.finish()
    return block


def body_root_for(txs: Sequence[ehr.Transaction]) -> bytes:
    return merkle.build_root([ehr.encode_transaction(tx) for tx in txs])


def make_genesis(network_name: str, genesis_time_ms: int) -> Block:
    """Create the height-0 trust anchor: all-zero previous hash, a body root
    committing to the network name, no transactions, no signatures."""
    header = BlockHeader(
        version=BLOCK_VERSION,
        height=0,
        prev_hash=ZERO_HASH,
        timestamp_ms=genesis_time_ms,
        body_root=merkle.build_root([codec.var_str(network_name)]),
        target=TARGET_MAX,
        nonce=0,
        proposer_id=ZERO_PROPOSER,
    )
    return Block(header=header, transactions=(), commit_signatures=())


def assemble_block(
    parent: Block,
    txs: Sequence[ehr.Transaction],
    timestamp_ms: int,
    proposer_id: bytes,
    *,
    target: bytes = TARGET_MAX,
    nonce: int = 0,
    key_of: KeyLookup | None = None,
) -> Block:
    """Draft the next block on ``parent``. When ``key_of`` is given, every
    transaction signature is checked against its actor's key first."""
    if not txs:
        raise EmptyBlock("a block must carry at least one transaction")
    if timestamp_ms < parent.header.timestamp_ms:
        raise StaleTimestamp(
            f"{timestamp_ms} precedes parent timestamp {parent.header.timestamp_ms}"
        )
    if key_of is not None:
        for tx in txs:
            public_key = key_of(tx.actor_id)
            if public_key is None:
                raise InvalidTransaction(tx.tx_hash, "unknown actor")
            if not ehr.verify_transaction(tx, public_key):
                raise InvalidTransaction(tx.tx_hash, "signature does not verify")
    header = BlockHeader(
        version=BLOCK_VERSION,
        height=parent.header.height + 1,
        prev_hash=block_hash(parent.header),
        timestamp_ms=timestamp_ms,
        body_root=body_root_for(txs),
        target=target,
        nonce=nonce,
        proposer_id=proposer_id,
    )
    return Block(header=header, transactions=tuple(txs), commit_signatures=())


def target_from_difficulty_bits(bits: int) -> bytes:
    """Threshold with ``bits`` leading zero bits; larger means harder."""
    if not 0 <= bits <= 256:
        raise ValueError("difficulty bits must be in [0, 256]")
    value = (1 << (256 - bits)) - 1
    return value.to_bytes(32, "big")


def mine_block(
    parent: Block,
    txs: Sequence[ehr.Transaction],
    timestamp_ms: int,
    proposer_id: bytes,
    target: bytes,
    max_attempts: int = 1 << 24,
) -> Block:
    """Nonce-search until the header hash clears the target (demo mode only)."""
    draft = assemble_block(
        parent, txs, timestamp_ms, proposer_id, target=target, nonce=0
    )
    for nonce in range(max_attempts):
        header = BlockHeader(
            version=draft.header.version,
            height=draft.header.height,
            prev_hash=draft.header.prev_hash,
            timestamp_ms=draft.header.timestamp_ms,
            body_root=draft.header.body_root,
            target=target,
            nonce=nonce,
            proposer_id=draft.header.proposer_id,
        )
        if block_hash(header) <= target:
            return Block(header=header, transactions=draft.transactions)
    raise LedgerError(f"no nonce under target within {max_attempts} attempts")


def validate_block(
    parent: Block,
    candidate: Block,
    quorum: int,
    *,
    validator_keys: Mapping[bytes, bytes] | None = None,
    mode: str = MODE_CONSORTIUM,
) -> list[Violation]:
    """Check ``candidate`` against its claimed parent; returns every violated
    rule rather than stopping at the first."""
    violations: list[Violation] = []
    header = candidate.header

    if header.height != parent.header.height + 1:
        violations.append(
            Violation(
                "height-discontinuity",
                f"expected {parent.header.height + 1}, got {header.height}",
            )
        )
    if header.prev_hash != block_hash(parent.header):
        violations.append(Violation("prev-hash-mismatch", "does not link to parent"))
    if header.timestamp_ms < parent.header.timestamp_ms:
        violations.append(
            Violation(
                "stale-timestamp",
                f"{header.timestamp_ms} < parent {parent.header.timestamp_ms}",
            )
        )
    if not candidate.transactions:
        violations.append(Violation("empty-body", "no transactions"))
    elif body_root_for(candidate.transactions) != header.body_root:
        violations.append(Violation("body-root-mismatch", "transactions were altered"))

    if mode == MODE_POW_DEMO:
        if block_hash(header) > header.target:
            violations.append(Violation("target-exceeded", "header hash above target"))
    else:
        if header.target != TARGET_MAX:
            violations.append(
                Violation("target-not-max", "consortium blocks pin target to 0xff*32")
            )
        violations.extend(
            _check_commit_signatures(candidate, quorum, validator_keys)
        )
    return violations


def _check_commit_signatures(
    candidate: Block,
    quorum: int,
    validator_keys: Mapping[bytes, bytes] | None,
) -> list[Violation]:
    violations: list[Violation] = []
    digest = block_hash(candidate.header)
    valid_signers: set[bytes] = set()
    for validator_id, signature in candidate.commit_signatures:
        if validator_id in valid_signers:
            violations.append(Violation("duplicate-signer", validator_id.hex()))
            continue
        if validator_keys is not None:
            public_key = validator_keys.get(validator_id)
            if public_key is None:
                violations.append(Violation("unknown-validator", validator_id.hex()))
                continue
            if not identity.verify_payload(public_key, digest, signature):
                violations.append(
                    Violation("bad-commit-signature", validator_id.hex())
                )
                continue
        valid_signers.add(validator_id)
    if len(valid_signers) < quorum:
        violations.append(
            Violation(
                "insufficient-quorum",
                f"{len(valid_signers)} valid signatures, need {quorum}",
            )
        )
    return violations


@dataclass(frozen=True)
class ChainState:
    """Immutable linear chain; appending yields a new state."""

    blocks: tuple[Block, ...]

    def __post_init__(self) -> None:
        if not self.blocks:
            raise LedgerError("a chain starts from its genesis block")

    @classmethod
    def from_genesis(cls, genesis: Block) -> "ChainState":
        return cls(blocks=(genesis,))

    @property
    def tip(self) -> Block:
        return self.blocks[-1]

    @property
    def tip_hash(self) -> bytes:
        return block_hash(self.tip.header)

    @property
    def height(self) -> int:
        return self.tip.header.height

    def block_at(self, height: int) -> Block | None:
        if 0 <= height < len(self.blocks):
            return self.blocks[height]
        return None


def append_block(
    chain: ChainState,
    block: Block,
    quorum: int,
    *,
    validator_keys: Mapping[bytes, bytes] | None = None,
    mode: str = MODE_CONSORTIUM,
) -> ChainState:
    violations = validate_block(
        chain.tip, block, quorum, validator_keys=validator_keys, mode=mode
    )
    if violations:
        raise ValidationFailed(violations)
    return ChainState(blocks=chain.blocks + (block,))


def verify_chain(
    chain: ChainState,
    quorum: int,
    *,
    validator_keys: Mapping[bytes, bytes] | None = None,
    mode: str = MODE_CONSORTIUM,
    expected_genesis: Block | None = None,
) -> AuditReport:
    """Re-validate every block against its parent from genesis upward and
    report the first failing height, or a full pass."""
    if expected_genesis is not None:
        if encode_block(chain.blocks[0]) != encode_block(expected_genesis):
            return AuditReport(
                ok=False,
                height=chain.height,
                failure_height=0,
                violations=(Violation("genesis-mismatch", "does not match anchor"),),
            )
    for i in range(1, len(chain.blocks)):
        violations = validate_block(
            chain.blocks[i - 1],
            chain.blocks[i],
            quorum,
            validator_keys=validator_keys,
            mode=mode,
        )
        if violations:
            # Located by position in the store, not by the block's claimed
            # height: a corrupted height field must not relocate the report.
            return AuditReport(
                ok=False,
                height=chain.height,
                failure_height=i,
                violations=tuple(violations),
            )
    return AuditReport(ok=True, height=chain.height)


def iter_transactions(chain: ChainState) -> Iterable[tuple[Block, ehr.Transaction]]:
    for block in chain.blocks:
        for tx in block.transactions:
            yield block, tx
