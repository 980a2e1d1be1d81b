"""Patient record model, transaction envelope, and chain-state projection.

Records carry the thirteen fields of the intake form as validated strings;
real-world intake data is too dirty for stricter types, so hard rules are
limited to non-empty identifiers and parseable dates. A transaction wraps
one operation (create, update, or identity registration) with the acting
stakeholder, a timestamp, and a detached signature over the transaction
hash. Current patient state is never stored: it is the fold of every
committed transaction in chain order.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields
from functools import lru_cache
from datetime import date
from enum import IntEnum
from typing import TYPE_CHECKING, Iterable

from cryptography.hazmat.primitives.asymmetric import ed25519

from . import codec, identity

if TYPE_CHECKING:
    from .ledger import ChainState

TX_HASH_LEN = 32
ACTOR_ID_LEN = 16
SIGNATURE_LEN = 64

RECORD_FIELDS = (
    "patient_id",
    "name",
    "date_of_birth",
    "gender",
    "age",
    "blood_pressure",
    "medication_taken",
    "visit_date",
    "consulted_prescriber",
    "temperature",
    "height",
    "weight",
    "contact_no",
)

_DATE_FIELDS = ("date_of_birth", "visit_date")

SEVERITY_ERROR = "error"
SEVERITY_WARNING = "warning"


class EhrError(Exception):
    pass


class InvalidRecord(EhrError):
    def __init__(self, violations: list["RecordViolation"]):
        self.violations = violations
        super().__init__("; ".join(f"{v.field}: {v.rule}" for v in violations))


class OpKind(IntEnum):
    CREATE_RECORD = 1
    UPDATE_RECORD = 2
    REGISTER_IDENTITY = 3

    @property
    def label(self) -> str:
        return {
            OpKind.CREATE_RECORD: "CreateRecord",
            OpKind.UPDATE_RECORD: "UpdateRecord",
            OpKind.REGISTER_IDENTITY: "RegisterIdentity",
        }[self]


@dataclass(frozen=True)
class PatientRecord:
    patient_id: str
    name: str
    date_of_birth: str = ""
    gender: str = ""
    age: str = ""
    blood_pressure: str = ""
    medication_taken: str = ""
    visit_date: str = ""
    consulted_prescriber: str = ""
    temperature: str = ""
    height: str = ""
    weight: str = ""
    contact_no: str = ""

    def as_dict(self) -> dict[str, str]:
        return {name: getattr(self, name) for name in RECORD_FIELDS}

    @classmethod
    def from_dict(cls, data: dict[str, str]) -> "PatientRecord":
        return cls(**{name: str(data.get(name, "")) for name in RECORD_FIELDS})


assert tuple(f.name for f in fields(PatientRecord)) == RECORD_FIELDS


@dataclass(frozen=True)
class RecordViolation:
    field: str
    rule: str
    severity: str = SEVERITY_ERROR


def validate_record(record: PatientRecord) -> list[RecordViolation]:
    """Report every violated field rule; empty list means fully clean.

    Non-empty patient_id and name are hard errors. A date field that does
    not parse as ISO-8601 is reported at warning severity: such rows occur
    in real intake data and are stored, but flagged.
    """
    violations: list[RecordViolation] = []
    for name in RECORD_FIELDS:
        value = getattr(record, name)
        if not isinstance(value, str):
            violations.append(RecordViolation(name, "must be a string"))
    if violations:
        return violations
    if not record.patient_id:
        violations.append(RecordViolation("patient_id", "must be non-empty"))
    if not record.name:
        violations.append(RecordViolation("name", "must be non-empty"))
    for name in _DATE_FIELDS:
        value = getattr(record, name)
        if value:
            try:
                date.fromisoformat(value)
            except ValueError:
                violations.append(
                    RecordViolation(name, "not an ISO-8601 date", SEVERITY_WARNING)
                )
    return violations


def blocking_violations(violations: Iterable[RecordViolation]) -> list[RecordViolation]:
    return [v for v in violations if v.severity == SEVERITY_ERROR]


def canonical_encode_record(record: PatientRecord) -> bytes:
    """Serialize the thirteen fields, in declared order, length-prefixed.

    Injective on distinct records: the prefixes delimit every field, so no
    two records share an encoding.
    """
    errors = blocking_violations(validate_record(record))
    if errors:
        raise InvalidRecord(errors)
    return b"".join(codec.var_str(getattr(record, name)) for name in RECORD_FIELDS)


def decode_record(data: bytes) -> PatientRecord:
    r = codec.Reader(data)
    values = {name: r.var_str() for name in RECORD_FIELDS}
    r.finish()
    return PatientRecord(**values)


@dataclass(frozen=True)
class Transaction:
    tx_hash: bytes
    op_kind: OpKind
    payload: bytes
    actor_id: bytes
    timestamp_ms: int
    signature: bytes


def tx_signing_preimage(
    op_kind: OpKind, payload: bytes, actor_id: bytes, timestamp_ms: int
) -> bytes:
    return (
        codec.u8(int(op_kind))
        + codec.var_bytes(payload)
        + actor_id
        + codec.u64(timestamp_ms)
    )


def compute_tx_hash(
    op_kind: OpKind, payload: bytes, actor_id: bytes, timestamp_ms: int
) -> bytes:
    return hashlib.sha256(
        tx_signing_preimage(op_kind, payload, actor_id, timestamp_ms)
    ).digest()


def build_transaction(
    op_kind: OpKind,
    payload: bytes,
    actor_id: bytes,
    timestamp_ms: int,
    signature: bytes,
) -> Transaction:
    if len(actor_id) != ACTOR_ID_LEN:
        raise EhrError(f"actor_id must be {ACTOR_ID_LEN} bytes")
    if len(signature) != SIGNATURE_LEN:
        raise EhrError(f"signature must be {SIGNATURE_LEN} bytes")
    return Transaction(
        tx_hash=compute_tx_hash(op_kind, payload, actor_id, timestamp_ms),
        op_kind=op_kind,
        payload=payload,
        actor_id=actor_id,
        timestamp_ms=timestamp_ms,
        signature=signature,
    )


def make_transaction(
    op_kind: OpKind,
    record: PatientRecord,
    actor_id: bytes,
    timestamp_ms: int,
    signer: ed25519.Ed25519PrivateKey,
    registry: identity.Registry | None = None,
) -> Transaction:
    """Build and sign a record transaction; the signature covers tx_hash."""
    if registry is not None and registry.get(actor_id) is None:
        raise identity.UnknownActor(actor_id.hex())
    payload = canonical_encode_record(record)
    tx_hash = compute_tx_hash(op_kind, payload, actor_id, timestamp_ms)
    return Transaction(
        tx_hash=tx_hash,
        op_kind=op_kind,
        payload=payload,
        actor_id=actor_id,
        timestamp_ms=timestamp_ms,
        signature=identity.sign_payload(signer, tx_hash),
    )


def verify_transaction(tx: Transaction, public_key: bytes) -> bool:
    expected = compute_tx_hash(tx.op_kind, tx.payload, tx.actor_id, tx.timestamp_ms)
    if expected != tx.tx_hash:
        return False
    return identity.verify_payload(public_key, tx.tx_hash, tx.signature)


@lru_cache(maxsize=1 << 16)
def encode_transaction(tx: Transaction) -> bytes:
    return (
        tx_signing_preimage(tx.op_kind, tx.payload, tx.actor_id, tx.timestamp_ms)
        + tx.signature
    )


def read_transaction(r: codec.Reader) -> Transaction:
    try:
        op_kind = OpKind(r.u8())
    except ValueError as exc:
        raise codec.MalformedFrame(f"unknown op kind: {exc}") from exc
    payload = r.var_bytes()
    actor_id = r.take(ACTOR_ID_LEN)
    timestamp_ms = r.u64()
    signature = r.take(SIGNATURE_LEN)
    return build_transaction(op_kind, payload, actor_id, timestamp_ms, signature)


def decode_transaction(data: bytes) -> Transaction:
    r = codec.Reader(data)
    tx = read_transaction(r)
    r.finish()
    return tx


@dataclass(frozen=True)
class RecordState:
    record: PatientRecord
    provenance: tuple[bytes, ...]


@dataclass(frozen=True)
class Anomaly:
    tx_hash: bytes
    note: str


@dataclass
class StateView:
    """Latest record per patient plus the transaction trail behind it."""

    records: dict[str, RecordState]
    anomalies: list[Anomaly]

    @classmethod
    def empty(cls) -> "StateView":
        return cls(records={}, anomalies=[])

    def apply_transaction(self, tx: Transaction) -> None:
        if tx.op_kind is OpKind.REGISTER_IDENTITY:
            return  # membership changes are folded by the identity registry
        try:
            record = decode_record(tx.payload)
        except codec.CodecError as exc:
            self.anomalies.append(Anomaly(tx.tx_hash, f"undecodable payload: {exc}"))
            return
        existing = self.records.get(record.patient_id)
        if tx.op_kind is OpKind.CREATE_RECORD:
            if existing is not None:
                self.anomalies.append(
                    Anomaly(tx.tx_hash, f"duplicate create for {record.patient_id}")
                )
                return
            self.records[record.patient_id] = RecordState(record, (tx.tx_hash,))
        else:
            if existing is None:
                self.anomalies.append(
                    Anomaly(tx.tx_hash, f"update of unknown patient {record.patient_id}")
                )
                return
            self.records[record.patient_id] = RecordState(
                record, existing.provenance + (tx.tx_hash,)
            )

    def apply_block(self, block) -> None:
        for tx in block.transactions:
            self.apply_transaction(tx)


def project_state(chain: "ChainState") -> StateView:
    """Fold every committed transaction, block order then intra-block order."""
    view = StateView.empty()
    for block in chain.blocks:
        view.apply_block(block)
    return view


def apply_registry_block(
    registry: identity.Registry, block, anomalies: list[Anomaly]
) -> identity.Registry:
    """Fold one block's membership registrations into the registry.

    Only a registered Admin may enroll identities; invalid registrations
    are recorded as anomalies and skipped, never raised, because they can
    reach the chain through commit-time races between proposers.
    """
    for tx in block.transactions:
        if tx.op_kind is not OpKind.REGISTER_IDENTITY:
            continue
        actor = registry.get(tx.actor_id)
        if actor is None or actor.role is not identity.Role.ADMIN:
            anomalies.append(Anomaly(tx.tx_hash, "registration by non-admin"))
            continue
        try:
            ident = identity.decode_identity(tx.payload)
        except codec.CodecError as exc:
            anomalies.append(Anomaly(tx.tx_hash, f"undecodable identity: {exc}"))
            continue
        try:
            registry = registry.with_member(ident)
        except identity.DuplicateIdentity:
            anomalies.append(
                Anomaly(tx.tx_hash, f"duplicate identity {ident.identity_id.hex()}")
            )
    return registry


def project_registry(
    chain: "ChainState", bootstrap: identity.Registry
) -> tuple[identity.Registry, list[Anomaly]]:
    """Derive the membership registry from the bootstrap set plus every
    committed registration, in chain order."""
    registry = bootstrap
    anomalies: list[Anomaly] = []
    for block in chain.blocks:
        registry = apply_registry_block(registry, block, anomalies)
    return registry, anomalies
