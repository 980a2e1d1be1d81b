"""Stakeholder registry, Ed25519 keys, and role-based authorization.

The registry is the membership anchor: it maps 16-byte identity handles
(truncated SHA-256 of the raw public key) to registered stakeholders.
Registrations are append-only; revocation would be a status flag, never a
deletion. The policy matrix is deny-by-default: every decision cites the
single rule that produced it.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from functools import lru_cache
from enum import Enum, IntEnum

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric import ed25519

from . import codec

IDENTITY_ID_LEN = 16
PUBLIC_KEY_LEN = 32
SIGNATURE_LEN = 64
SEED_LEN = 32


class IdentityError(Exception):
    pass


class DuplicateIdentity(IdentityError):
    pass


class BadAdminSignature(IdentityError):
    pass


class MissingPatientLink(IdentityError):
    pass


class UnknownActor(IdentityError):
    pass


class MalformedKey(IdentityError):
    pass


class Role(IntEnum):
    ADMIN = 1
    ORGANIZATIONAL = 2
    PATIENT = 3


class Action(Enum):
    ADD_RECORD = "AddRecord"
    UPDATE_RECORD = "UpdateRecord"
    READ_RECORD = "ReadRecord"
    LIST_RECORDS = "ListRecords"
    READ_CHAIN = "ReadChain"
    REGISTER_IDENTITY = "RegisterIdentity"


def keygen(seed: bytes | None = None) -> tuple[bytes, ed25519.Ed25519PrivateKey]:
    """Generate an Ed25519 keypair; a fixed 32-byte seed is deterministic."""
    if seed is None:
        private = ed25519.Ed25519PrivateKey.generate()
    else:
        if len(seed) != SEED_LEN:
            raise MalformedKey(f"seed must be {SEED_LEN} bytes, got {len(seed)}")
        private = ed25519.Ed25519PrivateKey.from_private_bytes(seed)
    public = private.public_key().public_bytes(
        serialization.Encoding.Raw, serialization.PublicFormat.Raw
    )
    return public, private


def private_key_seed(private: ed25519.Ed25519PrivateKey) -> bytes:
    return private.private_bytes(
        serialization.Encoding.Raw,
        serialization.PrivateFormat.Raw,
        serialization.NoEncryption(),
    )


def identity_id_for(public_key: bytes) -> bytes:
    if len(public_key) != PUBLIC_KEY_LEN:
        raise MalformedKey(f"public key must be {PUBLIC_KEY_LEN} bytes")
    return hashlib.sha256(public_key).digest()[:IDENTITY_ID_LEN]


def sign_payload(private: ed25519.Ed25519PrivateKey, data: bytes) -> bytes:
    return private.sign(data)


@lru_cache(maxsize=1 << 18)
def _verify_cached(public_key: bytes, data: bytes, signature: bytes) -> bool:
    try:
        ed25519.Ed25519PublicKey.from_public_bytes(public_key).verify(signature, data)
        return True
    except InvalidSignature:
        return False


def verify_payload(public_key: bytes, data: bytes, signature: bytes) -> bool:
    """Standard detached-signature check; mismatch is False, never an error.

    Results are memoized: verification is a pure function and the same
    message is checked many times under simulation and chain audits.
    """
    if len(public_key) != PUBLIC_KEY_LEN:
        raise MalformedKey(f"public key must be {PUBLIC_KEY_LEN} bytes")
    if len(signature) != SIGNATURE_LEN:
        return False
    return _verify_cached(public_key, data, signature)


@dataclass(frozen=True)
class StakeholderIdentity:
    identity_id: bytes
    public_key: bytes
    role: Role
    linked_patient_id: str | None = None
    registered_at_ms: int = 0

    def __post_init__(self) -> None:
        if self.identity_id != identity_id_for(self.public_key):
            raise IdentityError("identity_id does not match public key")
        if self.role is Role.PATIENT and not self.linked_patient_id:
            raise MissingPatientLink("patient identities require linked_patient_id")

    @classmethod
    def from_public_key(
        cls,
        public_key: bytes,
        role: Role,
        linked_patient_id: str | None = None,
        registered_at_ms: int = 0,
    ) -> "StakeholderIdentity":
        return cls(
            identity_id=identity_id_for(public_key),
            public_key=public_key,
            role=role,
            linked_patient_id=linked_patient_id,
            registered_at_ms=registered_at_ms,
        )


def encode_identity(ident: StakeholderIdentity) -> bytes:
    """Canonical identity bytes: pubkey, role, patient link, registration time."""
    return (
        ident.public_key
        + codec.u8(int(ident.role))
        + codec.var_str(ident.linked_patient_id or "")
        + codec.u64(ident.registered_at_ms)
    )


def decode_identity(data: bytes) -> StakeholderIdentity:
    r = codec.Reader(data)
    ident = read_identity(r)
    r.finish()
    return ident


def read_identity(r: codec.Reader) -> StakeholderIdentity:
    public_key = r.take(PUBLIC_KEY_LEN)
    try:
        role = Role(r.u8())
    except ValueError as exc:
        raise codec.MalformedFrame(f"unknown role: {exc}") from exc
    link = r.var_str()
    registered_at_ms = r.u64()
    try:
        return StakeholderIdentity.from_public_key(
            public_key, role, link or None, registered_at_ms
        )
    except IdentityError as exc:
        raise codec.MalformedFrame(str(exc)) from exc


@dataclass(frozen=True)
class AccessDecision:
    allowed: bool
    rule: str


@dataclass(frozen=True)
class Registry:
    """Append-only identity registry keyed by identity handle."""

    members: dict[bytes, StakeholderIdentity] = field(default_factory=dict)

    @classmethod
    def bootstrap(cls, identities: list[StakeholderIdentity]) -> "Registry":
        """Genesis-time trust anchor; no enrollment signature required."""
        members: dict[bytes, StakeholderIdentity] = {}
        for ident in identities:
            if ident.identity_id in members:
                raise DuplicateIdentity(ident.identity_id.hex())
            members[ident.identity_id] = ident
        return cls(members=members)

    def get(self, identity_id: bytes) -> StakeholderIdentity | None:
        return self.members.get(identity_id)

    def __len__(self) -> int:
        return len(self.members)

    def with_member(self, ident: StakeholderIdentity) -> "Registry":
        if ident.identity_id in self.members:
            raise DuplicateIdentity(ident.identity_id.hex())
        members = dict(self.members)
        members[ident.identity_id] = ident
        return replace(self, members=members)

    def admins(self) -> list[StakeholderIdentity]:
        return [m for m in self.members.values() if m.role is Role.ADMIN]


def serialize_registry(registry: Registry) -> bytes:
    out = [codec.u32(len(registry))]
    for ident in registry.members.values():
        out.append(codec.var_bytes(encode_identity(ident)))
    return b"".join(out)


def register_stakeholder(
    registry: Registry,
    ident: StakeholderIdentity,
    admin_signature: tuple[bytes, bytes],
) -> Registry:
    """Enroll ``ident``; the enrollment must be signed by a registered Admin
    over the identity's canonical encoding. Returns the extended registry."""
    admin_id, signature = admin_signature
    admin = registry.get(admin_id)
    if admin is None or admin.role is not Role.ADMIN:
        raise BadAdminSignature("signer is not a registered Admin")
    if not verify_payload(admin.public_key, encode_identity(ident), signature):
        raise BadAdminSignature("signature does not verify over identity bytes")
    if ident.role is Role.PATIENT and not ident.linked_patient_id:
        raise MissingPatientLink("patient identities require linked_patient_id")
    return registry.with_member(ident)


_ORG_ACTIONS = frozenset(
    {
        Action.ADD_RECORD,
        Action.UPDATE_RECORD,
        Action.READ_RECORD,
        Action.LIST_RECORDS,
        Action.READ_CHAIN,
    }
)
_PATIENT_OWN_ACTIONS = frozenset({Action.READ_RECORD, Action.UPDATE_RECORD})


def authorize(
    registry: Registry,
    actor_id: bytes,
    action: Action,
    resource: str | None = None,
) -> AccessDecision:
    """Evaluate the policy matrix for one (actor, action, resource) triple.

    Admin may do everything. Organizational stakeholders manage and read
    all records but cannot enroll identities. Patients touch only the
    record they are linked to, plus the chain view of their own history.
    Anything not explicitly allowed is denied.
    """
    actor = registry.get(actor_id)
    if actor is None:
        return AccessDecision(False, "unregistered")
    if actor.role is Role.ADMIN:
        return AccessDecision(True, "admin-full-access")
    if actor.role is Role.ORGANIZATIONAL:
        if action in _ORG_ACTIONS:
            return AccessDecision(True, "organizational-ehr-access")
        return AccessDecision(False, "organizational-cannot-register")
    # Patient role from here on.
    if action in _PATIENT_OWN_ACTIONS:
        if resource is not None and resource == actor.linked_patient_id:
            return AccessDecision(True, "patient-own-record")
        return AccessDecision(False, "patient-foreign-record")
    if action is Action.READ_CHAIN:
        return AccessDecision(True, "patient-own-provenance")
    return AccessDecision(False, f"patient-cannot-{action.value.lower()}")
